//! Pull-based status updating that minimizes the age of information at query
//! instants.
//!
//! A destination asks a source for updates over a channel with random,
//! bounded transmission delay and only cares about how stale its data is at
//! known query times. This crate provides:
//!
//! * [`delay`] — bounded delay laws (truncated exponential / log-normal /
//!   Pareto, scaled beta, uniform, point masses) with CDF, density, inverse
//!   CDF, and seeded sampling;
//! * [`grid`] — upper/lower quantization of a delay law onto a uniform grid,
//!   plus the index sets the solver works on;
//! * [`penalty`] — age-penalty functions (identity, affine, exponential,
//!   tabulated) with exact running integrals;
//! * [`solver`] — the backward recursion over quantized states that yields
//!   value tables, the decision grid, the border point, and sandwich bounds
//!   with grid-doubling refinement;
//! * [`policy`] — the deployable query-aware grid policy, the zero-wait and
//!   threshold baselines, and an exact renewal-reward evaluator for the
//!   time-average objective of threshold policies;
//! * [`sim`] — a discrete-event simulator measuring both objectives with
//!   replications and confidence intervals.

pub mod delay;
mod error;
pub mod grid;
pub mod numeric;
pub mod penalty;
pub mod policy;
pub mod sim;
pub mod solver;

pub use delay::{DelayDistribution, Family};
pub use error::{Error, Result};
pub use grid::{build_grids, quantize, Direction, GridSets, QuantizedDelay};
pub use penalty::{PenaltyFunction, PenaltyViolation};
pub use policy::{
    uow_mean_cycle, uow_optimal_policy, uow_time_average, DecisionContext, Policy, PowGridPolicy,
};
pub use sim::{
    make_schedule, replicate, run, run_traced, AgeTrajectory, AggregateMetrics, EventKind,
    QuerySchedule, ScheduleKind, SummaryStat, TraceEvent, TrajectoryMetrics,
};
pub use solver::{
    solve_at_resolution, solve_refined, value_tables, RefinedSolution, SolverSolution,
};
