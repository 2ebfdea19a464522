//! Backward-recursion solver for the single-query request-timing problem on
//! a quantized delay grid.
//!
//! States are pairs of (remaining time until the query, current age), both on
//! a uniform grid. The value of placing a request with remaining time `a` and
//! age `delta` splits into a delivery-covered part plus a miss term:
//!
//! ```text
//! request_value(a, delta) = sum_{y <= a} p(y) * delivery_value(a - y, y)
//!                         + g(a + delta) * Pr(Y > a)
//! ```
//!
//! and the value at a delivery with remaining time `a'` and age `y` minimizes
//! over grid waits `z`, where waiting past the query freezes the age:
//!
//! ```text
//! delivery_value(a', y) = min_z { request_value(a' - z, y + z)  if z <= a'
//!                               { g(a' + y)                     otherwise
//! ```
//!
//! Because age grows one-for-one with waiting, every request candidate keeps
//! the same miss age `a' + y`; the table therefore stores, per remaining-time
//! index, the delivery-covered part (`request_base`) and the overshoot mass
//! (`tail_mass`), which collapses the apparent three-dimensional recursion to
//! two dense 2-D tables. Ties in the minimization pick the largest wait.
//!
//! Solving the same instance on the upper- and lower-quantized delay laws
//! brackets the exact optimum; [`solve_refined`] doubles the grid resolution
//! until the bracket is tighter than a tolerance.

use serde::{Deserialize, Serialize};

use crate::delay::DelayDistribution;
use crate::error::{Error, Result};
use crate::grid::{build_grids, quantize, Direction, GridSets, QuantizedDelay};
use crate::penalty::PenaltyFunction;

/// Value tables, decision grid, and border data for one quantized instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSolution {
    pub grids: GridSets,
    pub direction: Direction,
    /// Penalty function the tables were solved for.
    pub penalty: PenaltyFunction,
    /// Expected penalty at a delivery state, `(n+1) x n_y`, row-major by
    /// remaining-time index.
    delivery: Vec<f64>,
    /// Optimal wait index for each delivery state, same shape.
    decision: Vec<u32>,
    /// Delivery-covered part of the request value, per remaining-time index.
    request_base: Vec<f64>,
    /// Probability that the delay overshoots the remaining time, per index.
    tail_mass: Vec<f64>,
    /// Remaining-time index of the border point (the optimal first request).
    border_idx: usize,
    /// Optimal expected penalty for a single query approached from afar.
    single_query_value: f64,
    /// Number of candidate request-value evaluations performed.
    evaluations: u64,
}

impl SolverSolution {
    /// Expected penalty when a request is placed with remaining time `a`
    /// (a grid time) and current age `delta`.
    pub fn request_value(&self, a: f64, delta: f64) -> Result<f64> {
        let i = self.grids.index_of(a)?;
        if i > self.grids.n_intervals {
            return Err(Error::Grid(format!("remaining time {a} is beyond the horizon")));
        }
        Ok(self.request_value_idx(i, delta))
    }

    /// Same as [`request_value`] but indexed; `delta` is a free real age.
    ///
    /// [`request_value`]: SolverSolution::request_value
    pub fn request_value_idx(&self, i: usize, delta: f64) -> f64 {
        let tail = self.tail_mass[i];
        if tail == 0.0 {
            self.request_base[i]
        } else {
            self.request_base[i] + self.penalty.eval(self.grids.time(i) + delta) * tail
        }
    }

    /// Expected penalty at a delivery with remaining-time index `a_idx` and
    /// delay grid index `y_idx`.
    pub fn delivery_value_idx(&self, a_idx: usize, y_idx: usize) -> f64 {
        self.delivery[a_idx * self.grids.n_y() + (y_idx - self.grids.y_min_idx)]
    }

    /// Optimal wait index at a delivery state.
    pub fn decision_idx(&self, a_idx: usize, y_idx: usize) -> usize {
        self.decision[a_idx * self.grids.n_y() + (y_idx - self.grids.y_min_idx)] as usize
    }

    /// Time between a query and its optimal far-state request point.
    pub fn border_offset(&self) -> f64 {
        self.grids.time(self.border_idx)
    }

    pub fn border_idx(&self) -> usize {
        self.border_idx
    }

    /// Smallest grid index at or beyond three delay bounds; every delivery
    /// with at least this much remaining time requests at the border point.
    pub fn anchor_idx(&self) -> usize {
        (3 * self.grids.y_max_idx).min(self.grids.n_intervals)
    }

    /// Optimal expected single-query penalty.
    pub fn single_query_value(&self) -> f64 {
        self.single_query_value
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Probability that the delay overshoots remaining-time index `i`.
    pub fn tail_mass_idx(&self, i: usize) -> f64 {
        self.tail_mass[i]
    }
}

/// Relative tolerance for treating wait candidates as tied. The optimal
/// request value is exactly flat across a band of far states, but the table
/// entries carry accumulated rounding noise; without a tolerance the
/// largest-minimizer rule would land on an arbitrary point of the band.
const TIE_REL_TOL: f64 = 1e-9;

/// Minimum over wait candidates at one delivery state, picking the largest
/// wait among (tolerance-)tied minimizers.
///
/// Candidates are `z` in `z_lo..=zcap`: waits `z <= i` score
/// `request_base[i - z] + miss_age * tail_mass[i - z]`, waits beyond the
/// remaining time abandon the query at `miss_age`, and `fixed_z0` (when
/// given) replaces the `z = 0` candidate.
#[allow(clippy::too_many_arguments)]
fn minimize_waits(
    request_base: &[f64],
    tail_mass: &[f64],
    miss_age: f64,
    i: usize,
    zcap: usize,
    z_lo: usize,
    fixed_z0: Option<f64>,
    evaluations: &mut u64,
) -> (f64, usize) {
    let z_hi = zcap.min(i);
    let candidate = |z: usize| -> f64 {
        if z == 0 {
            if let Some(v) = fixed_z0 {
                return v;
            }
        }
        let j = i - z;
        request_base[j] + miss_age * tail_mass[j]
    };

    let mut best = f64::INFINITY;
    if fixed_z0.is_some() {
        best = fixed_z0.unwrap();
        *evaluations += 1;
    }
    for z in z_lo..=z_hi {
        *evaluations += 1;
        let v = candidate(z);
        if v < best {
            best = v;
        }
    }
    let has_skip = zcap > i;
    if has_skip {
        *evaluations += 1;
        if miss_age < best {
            best = miss_age;
        }
    }

    let tol = TIE_REL_TOL * best.abs().max(1.0);
    if has_skip && miss_age <= best + tol {
        return (best, zcap);
    }
    for z in (z_lo..=z_hi).rev() {
        if candidate(z) <= best + tol {
            return (best, z);
        }
    }
    // Only the fixed z = 0 candidate remains.
    (best, 0)
}

/// Computes the value tables for one quantized delay law.
pub fn value_tables(
    qd: &QuantizedDelay,
    g: &PenaltyFunction,
    grids: &GridSets,
) -> Result<SolverSolution> {
    if (qd.step - grids.step).abs() > 1e-9 * grids.step {
        return Err(Error::Grid(format!(
            "quantized step {} does not match grid step {}",
            qd.step, grids.step
        )));
    }
    if qd.max_idx() != grids.y_max_idx || qd.min_idx() != grids.y_min_idx {
        return Err(Error::Grid("delay grid range does not match the quantized law".into()));
    }

    let n = grids.n_intervals;
    let ny = grids.n_y();
    let y_min = grids.y_min_idx;
    let zcap = grids.z_max_idx;
    let h = grids.step;

    let p_zero: f64 = qd.atoms().iter().filter(|(m, _)| *m == 0).map(|(_, p)| p).sum();
    let pos_atoms: Vec<(usize, f64)> =
        qd.atoms().iter().copied().filter(|(m, _)| *m > 0).collect();

    let mut delivery = vec![0.0f64; (n + 1) * ny];
    let mut decision = vec![0u32; (n + 1) * ny];
    let mut request_base = vec![0.0f64; n + 1];
    let mut tail_mass = vec![0.0f64; n + 1];
    let mut evaluations: u64 = 0;

    for i in 0..=n {
        // Delivery-covered mass and overshoot mass at remaining-time index i.
        let mut covered = 0.0;
        let mut tail = 0.0;
        for &(m, p) in &pos_atoms {
            if m <= i {
                covered += p * delivery[(i - m) * ny + (m - y_min)];
            } else {
                tail += p;
            }
        }

        // Age-zero delivery state (present only when the lower quantization
        // rounds sub-step delays to zero). A zero wait re-requests on the
        // spot and resamples the delay, which resolves to a geometric-retry
        // fixed point; positive waits and abandoning are ordinary candidates.
        if p_zero > 0.0 {
            let g_now = g.eval(i as f64 * h);
            let retry = if p_zero < 1.0 {
                (covered + g_now * tail) / (1.0 - p_zero)
            } else {
                // All mass at zero delay: a request at the query delivers
                // instantly with age zero.
                g.eval(0.0)
            };
            let (best, best_z) = minimize_waits(
                &request_base,
                &tail_mass,
                g_now,
                i,
                zcap,
                1,
                Some(retry),
                &mut evaluations,
            );
            delivery[i * ny] = best;
            decision[i * ny] = best_z as u32;
        }

        request_base[i] = covered + if p_zero > 0.0 { p_zero * delivery[i * ny] } else { 0.0 };
        tail_mass[i] = tail;

        // Delivery states with positive age.
        let first_row = usize::from(p_zero > 0.0);
        for yl in first_row..ny {
            let y_idx = y_min + yl;
            let miss_age = g.eval((i + y_idx) as f64 * h);
            let (best, best_z) =
                minimize_waits(&request_base, &tail_mass, miss_age, i, zcap, 0, None, &mut evaluations);
            delivery[i * ny + yl] = best;
            decision[i * ny + yl] = best_z as u32;
        }
    }

    // Border point: the request the solved policy places from the far state
    // (remaining time at the anchor, smallest delay).
    let y_max = grids.y_max_idx;
    let anchor = (3 * y_max).min(n);
    let z_at_anchor = decision[anchor * ny] as usize;
    let candidate = anchor as i64 - z_at_anchor as i64;
    let border_idx = if candidate >= y_max as i64 && candidate <= anchor as i64 {
        candidate as usize
    } else {
        // Degenerate ties (e.g. a constant penalty makes every wait equal)
        // can push the anchor decision outside the valid window; minimize
        // the age-free request value over the window directly instead.
        let mut best_i = y_max;
        let mut best_v = f64::INFINITY;
        for a in y_max..=anchor {
            if request_base[a] < best_v {
                best_v = request_base[a];
                best_i = a;
            }
        }
        best_i
    };
    debug_assert_eq!(tail_mass[border_idx], 0.0);
    let single_query_value = request_base[border_idx];

    Ok(SolverSolution {
        grids: grids.clone(),
        direction: qd.direction,
        penalty: g.clone(),
        delivery,
        decision,
        request_base,
        tail_mass,
        border_idx,
        single_query_value,
        evaluations,
    })
}

/// Default cap on grid-doubling iterations in [`solve_refined`].
pub const DEFAULT_MAX_DOUBLINGS: usize = 8;

/// Sandwich bounds from solving the upper- and lower-quantized instances at
/// the final grid resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedSolution {
    pub upper: SolverSolution,
    pub lower: SolverSolution,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub n_final: usize,
    pub tolerance: f64,
    /// Total candidate evaluations across all refinement iterations.
    pub evaluations: u64,
    /// False when the iteration cap was hit before the bracket closed; the
    /// result is still usable.
    pub converged: bool,
}

impl RefinedSolution {
    pub fn gap(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }
}

/// Quantizes `dist` both ways at `n0, 2*n0, ...` sub-intervals and solves
/// each pair until the bound gap drops below `eps` (or the doubling cap is
/// reached, in which case the returned solution is flagged unconverged).
pub fn solve_refined(
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    q: f64,
    m: f64,
    eps: f64,
    n0: usize,
) -> Result<RefinedSolution> {
    if !(q > 3.0 * dist.b_hi()) {
        return Err(Error::Solver(format!(
            "query horizon {q} must exceed three delay bounds ({})",
            3.0 * dist.b_hi()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Solver(format!("tolerance must be positive, got {eps}")));
    }
    if n0 < 4 {
        return Err(Error::Solver(format!("initial grid must have at least 4 intervals, got {n0}")));
    }

    let mut n = n0;
    let mut total_evals: u64 = 0;
    for iteration in 0.. {
        let (upper, lower) = solve_at_resolution(dist, g, q, m, n)?;
        total_evals += upper.evaluations + lower.evaluations;

        let lower_bound = lower.single_query_value();
        let upper_bound = upper.single_query_value();
        let converged = upper_bound - lower_bound < eps;
        if converged || iteration == DEFAULT_MAX_DOUBLINGS {
            return Ok(RefinedSolution {
                upper,
                lower,
                lower_bound,
                upper_bound,
                n_final: n,
                tolerance: eps,
                evaluations: total_evals,
                converged,
            });
        }
        n *= 2;
    }
    unreachable!()
}

/// Solves both quantization directions once at a fixed resolution.
///
/// The lower-bound table uses [`QuantizedDelay::without_zero_atom`]: on
/// grids coarser than the support floor, sub-step delays sit at the first
/// positive grid point rather than at zero.
pub fn solve_at_resolution(
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    q: f64,
    m: f64,
    n: usize,
) -> Result<(SolverSolution, SolverSolution)> {
    let step = q / n as f64;
    let upper_q = quantize(dist, step, Direction::Upper);
    let lower_q = quantize(dist, step, Direction::Lower).without_zero_atom();
    let upper = value_tables(&upper_q, g, &build_grids(q, n, m, &upper_q)?)?;
    let lower = value_tables(&lower_q, g, &build_grids(q, n, m, &lower_q)?)?;
    Ok((upper, lower))
}

/// Versioned JSON wrapper for solution files.
#[derive(Serialize, Deserialize)]
struct SolutionFile {
    format_version: u32,
    refined: RefinedSolution,
}

const SOLUTION_FORMAT_VERSION: u32 = 1;

impl RefinedSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SolutionFile {
            format_version: SOLUTION_FORMAT_VERSION,
            refined: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SolutionFile = serde_json::from_str(text)?;
        if file.format_version != SOLUTION_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported solution format version {}",
                file.format_version
            )));
        }
        Ok(file.refined)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
