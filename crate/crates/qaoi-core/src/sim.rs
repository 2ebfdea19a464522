//! Event-driven simulation of the request / delay / delivery / wait loop.
//!
//! A run alternates channel events (requests firing, deliveries landing) with
//! query instants from a schedule. The age at time `t` is `t` minus the
//! request time of the freshest delivered update; it resets to the realized
//! delay at every delivery and grows with slope one in between. Both
//! objectives are measured after a warm-up window: the query-average penalty
//! over post-warm-up query instants, and the time-average penalty by exact
//! per-segment integration between deliveries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::delay::DelayDistribution;
use crate::error::{Error, Result};
use crate::penalty::PenaltyFunction;
use crate::policy::{DecisionContext, Policy};

/// Query arrival pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Periodic { period: f64 },
    Poisson { rate: f64 },
}

/// Materialized query instants on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct QuerySchedule {
    pub kind: ScheduleKind,
    pub horizon: f64,
    pub instants: Vec<f64>,
}

/// Builds a schedule; a random state is required exactly for Poisson kinds.
pub fn make_schedule(
    kind: ScheduleKind,
    horizon: f64,
    rng: Option<&mut ChaCha12Rng>,
) -> Result<QuerySchedule> {
    if !(horizon > 0.0) {
        return Err(Error::Simulation(format!("horizon must be positive, got {horizon}")));
    }
    let instants = match kind {
        ScheduleKind::Periodic { period } => {
            if !(period > 0.0) {
                return Err(Error::Simulation(format!("period must be positive, got {period}")));
            }
            let count = (horizon / period).floor() as usize;
            (1..=count).map(|k| k as f64 * period).collect()
        }
        ScheduleKind::Poisson { rate } => {
            if !(rate > 0.0) {
                return Err(Error::Simulation(format!("rate must be positive, got {rate}")));
            }
            let rng = rng.ok_or_else(|| {
                Error::Simulation("Poisson schedules need a random state".into())
            })?;
            let mut t = 0.0;
            let mut out = Vec::new();
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / rate;
                if t > horizon {
                    break;
                }
                out.push(t);
            }
            out
        }
    };
    Ok(QuerySchedule { kind, horizon, instants })
}

/// Per-run measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    /// Mean penalty over post-warm-up query instants.
    pub qaoi_mean: f64,
    /// Time-average penalty over whole delivery cycles after warm-up.
    pub time_avg: f64,
    /// Requests submitted inside the measurement window.
    pub tx_count: u64,
    /// `tx_count` divided by the window length.
    pub tx_rate: f64,
    pub n_queries: u64,
    pub warmup_queries_dropped: u64,
}

/// One entry of an optional event trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Age immediately after the event.
    pub age: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Request,
    Delivery,
    Query,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Request => "request",
            EventKind::Delivery => "delivery",
            EventKind::Query => "query",
        }
    }
}

/// Piecewise-linear age trajectory: `(delivery time, reset age)` breakpoints.
#[derive(Debug, Clone, Default)]
pub struct AgeTrajectory {
    pub breakpoints: Vec<(f64, f64)>,
}

impl AgeTrajectory {
    /// Age at time `t` (slope one since the last delivery at or before `t`).
    pub fn age_at(&self, t: f64) -> f64 {
        match self.breakpoints.iter().rev().find(|(d, _)| *d <= t) {
            Some((d, y)) => y + (t - d),
            None => t,
        }
    }
}

/// Simulates one seeded trajectory.
pub fn run(
    policy: &Policy,
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    schedule: &QuerySchedule,
    seed: u64,
) -> Result<TrajectoryMetrics> {
    run_inner(policy, dist, g, schedule, seed, None).map(|(m, _)| m)
}

/// Simulates one trajectory and records every event plus the age breakpoints.
pub fn run_traced(
    policy: &Policy,
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    schedule: &QuerySchedule,
    seed: u64,
) -> Result<(TrajectoryMetrics, Vec<TraceEvent>, AgeTrajectory)> {
    let mut trace = Vec::new();
    let mut traj = AgeTrajectory::default();
    let metrics = run_inner(policy, dist, g, schedule, seed, Some((&mut trace, &mut traj)))?;
    Ok((metrics.0, trace, traj))
}

fn run_inner(
    policy: &Policy,
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    schedule: &QuerySchedule,
    seed: u64,
    mut trace: Option<(&mut Vec<TraceEvent>, &mut AgeTrajectory)>,
) -> Result<(TrajectoryMetrics, ())> {
    if let Policy::PowGrid(p) = policy {
        match schedule.kind {
            ScheduleKind::Periodic { period } if (period - p.period).abs() <= 1e-9 => {}
            _ => {
                return Err(Error::Simulation(
                    "the pow policy requires a periodic schedule with its own period".into(),
                ))
            }
        }
    }
    if schedule.instants.is_empty() {
        return Err(Error::Simulation("schedule contains no queries".into()));
    }

    let horizon = schedule.horizon;
    let warmup = warmup_end(policy, dist, &schedule.kind);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);

    // Virtual delivery at t = 0 with age zero.
    let mut freshest_request = 0.0_f64;
    let mut last_delivery = 0.0_f64;
    let mut age_at_last_delivery = 0.0_f64;
    if let Some((_, traj)) = trace.as_mut() {
        traj.breakpoints.push((0.0, 0.0));
    }

    let mut qaoi_sum = 0.0;
    let mut n_queries = 0u64;
    let mut dropped = 0u64;
    let mut integral = 0.0;
    let mut meas_start: Option<f64> = None;
    let mut meas_end = 0.0;
    let mut tx_count = 0u64;

    let mut next_request = policy.next_request(&make_context(schedule, 0.0, 0.0))?;
    let mut in_flight: Option<(f64, f64)> = None;
    let mut qi = 0usize;
    let total_q = schedule.instants.len();

    loop {
        let channel_time = match in_flight {
            Some((_, d)) => d,
            None => next_request,
        };

        // Queries strictly before the channel event; a delivery that ties a
        // query instant counts for that query, so it is processed first.
        while qi < total_q && schedule.instants[qi] < channel_time {
            let q = schedule.instants[qi];
            qi += 1;
            let age = q - freshest_request;
            if q > warmup {
                qaoi_sum += g.eval(age);
                n_queries += 1;
            } else {
                dropped += 1;
            }
            if let Some((events, _)) = trace.as_mut() {
                events.push(TraceEvent { time: q, kind: EventKind::Query, age });
            }
        }

        if channel_time > horizon {
            break;
        }

        match in_flight.take() {
            Some((request_time, delivery_time)) => {
                let delay = delivery_time - request_time;
                match meas_start {
                    Some(_) => {
                        let start_age = age_at_last_delivery;
                        integral +=
                            g.integral(start_age, start_age + (delivery_time - last_delivery));
                        meas_end = delivery_time;
                    }
                    None if delivery_time >= warmup => {
                        meas_start = Some(delivery_time);
                        meas_end = delivery_time;
                    }
                    None => {}
                }
                freshest_request = request_time;
                last_delivery = delivery_time;
                age_at_last_delivery = delay;
                if let Some((events, traj)) = trace.as_mut() {
                    events.push(TraceEvent {
                        time: delivery_time,
                        kind: EventKind::Delivery,
                        age: delay,
                    });
                    traj.breakpoints.push((delivery_time, delay));
                }

                let ctx = make_context(schedule, delivery_time, delay);
                let r = policy.next_request(&ctx)?;
                if r + 1e-9 < delivery_time {
                    return Err(Error::Simulation(format!(
                        "policy violated the channel discipline: requested {r} before \
                         the delivery at {delivery_time}"
                    )));
                }
                next_request = r.max(delivery_time);
            }
            None => {
                let r = next_request;
                let y = dist.sample(&mut rng);
                in_flight = Some((r, r + y));
                if r > warmup && r <= horizon {
                    tx_count += 1;
                }
                if let Some((events, _)) = trace.as_mut() {
                    events.push(TraceEvent {
                        time: r,
                        kind: EventKind::Request,
                        age: r - freshest_request,
                    });
                }
            }
        }
    }

    if n_queries == 0 {
        return Err(Error::Simulation(format!(
            "no queries left after the warm-up window [0, {warmup}]"
        )));
    }
    let t0 = meas_start.unwrap_or(0.0);
    if !(meas_end > t0) {
        return Err(Error::Simulation(
            "no complete delivery cycles inside the measurement window".into(),
        ));
    }

    Ok((
        TrajectoryMetrics {
            qaoi_mean: qaoi_sum / n_queries as f64,
            time_avg: integral / (meas_end - t0),
            tx_count,
            tx_rate: tx_count as f64 / (horizon - warmup),
            n_queries,
            warmup_queries_dropped: dropped,
        },
        (),
    ))
}

/// End of the warm-up window: transients from the empty start state plus one
/// schedule period.
fn warmup_end(policy: &Policy, dist: &DelayDistribution, kind: &ScheduleKind) -> f64 {
    let period_hint = match kind {
        ScheduleKind::Periodic { period } => *period,
        ScheduleKind::Poisson { rate } => 1.0 / rate,
    };
    (3.0 * dist.b_hi()).max(policy.max_wait()) + period_hint
}

fn make_context(schedule: &QuerySchedule, delivery_time: f64, delay: f64) -> DecisionContext {
    let (next_query, following_query) = match schedule.kind {
        ScheduleKind::Periodic { period } => {
            let k = (delivery_time / period).floor() + 1.0;
            (k * period, (k + 1.0) * period)
        }
        ScheduleKind::Poisson { .. } => {
            let idx = schedule.instants.partition_point(|&q| q <= delivery_time);
            let next = schedule.instants.get(idx).copied().unwrap_or(f64::INFINITY);
            let after = schedule.instants.get(idx + 1).copied().unwrap_or(f64::INFINITY);
            (next, after)
        }
    };
    DecisionContext { delivery_time, realized_delay: delay, next_query, following_query }
}

/// Mean, standard error, and 95% confidence half-width over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std_err: f64,
    pub ci_half_width: f64,
}

fn summarize(values: impl Iterator<Item = f64> + Clone, n: usize) -> SummaryStat {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let std_err = (var / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    SummaryStat { mean, std_err, ci_half_width: t * std_err }
}

/// Replicated metrics with Student-t confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub reps: Vec<TrajectoryMetrics>,
    pub qaoi: SummaryStat,
    pub time_avg: SummaryStat,
    pub tx_rate: SummaryStat,
}

/// Runs `n_reps` independent seeded replications (in parallel) and
/// aggregates them.
pub fn replicate(
    policy: &Policy,
    dist: &DelayDistribution,
    g: &PenaltyFunction,
    kind: ScheduleKind,
    horizon: f64,
    n_reps: usize,
    base_seed: u64,
) -> Result<AggregateMetrics> {
    if n_reps < 2 {
        return Err(Error::Simulation(format!("need at least 2 replications, got {n_reps}")));
    }
    let reps: Result<Vec<TrajectoryMetrics>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut schedule_rng = ChaCha12Rng::seed_from_u64(seed);
            let schedule = make_schedule(kind, horizon, Some(&mut schedule_rng))?;
            run(policy, dist, g, &schedule, seed)
        })
        .collect();
    let reps = reps?;
    Ok(AggregateMetrics {
        qaoi: summarize(reps.iter().map(|m| m.qaoi_mean), n_reps),
        time_avg: summarize(reps.iter().map(|m| m.time_avg), n_reps),
        tx_rate: summarize(reps.iter().map(|m| m.tx_rate), n_reps),
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grids, quantize, Direction};
    use crate::solver::value_tables;

    fn det15_pow() -> Policy {
        let d = DelayDistribution::from_spec("det:d=1.5").unwrap();
        let qd = quantize(&d, 0.5, Direction::Upper);
        let grids = build_grids(4.0, 8, 4.0, &qd).unwrap();
        let sol = value_tables(&qd, &PenaltyFunction::Identity, &grids).unwrap();
        Policy::pow_grid(sol, 4.0).unwrap()
    }

    #[test]
    fn periodic_schedule_instants() {
        let s = make_schedule(ScheduleKind::Periodic { period: 4.0 }, 13.0, None).unwrap();
        assert_eq!(s.instants, vec![4.0, 8.0, 12.0]);
        let empty = make_schedule(ScheduleKind::Periodic { period: 4.0 }, 3.0, None).unwrap();
        assert!(empty.instants.is_empty());
    }

    #[test]
    fn poisson_schedule_needs_rng_and_concentrates() {
        assert!(make_schedule(ScheduleKind::Poisson { rate: 1.0 }, 10.0, None).is_err());
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let s = make_schedule(ScheduleKind::Poisson { rate: 1.0 }, 1e5, Some(&mut rng)).unwrap();
        let n = s.instants.len() as f64;
        assert!((n - 1e5).abs() < 3.0 * 1e5f64.sqrt(), "count {n}");
        assert!(s.instants.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pow_constant_delay_is_exact() {
        let d = DelayDistribution::from_spec("det:d=1.5").unwrap();
        let g = PenaltyFunction::Identity;
        let s = make_schedule(ScheduleKind::Periodic { period: 4.0 }, 4000.0, None).unwrap();
        let m = run(&det15_pow(), &d, &g, &s, 5).unwrap();
        assert_eq!(m.qaoi_mean, 1.5);
        assert!((m.tx_rate - 0.25).abs() < 1e-3, "tx rate {}", m.tx_rate);
        assert_eq!(m.tx_count, m.n_queries);
    }

    #[test]
    fn zero_wait_constant_delay_time_average() {
        let d = DelayDistribution::from_spec("det:d=1.5").unwrap();
        let g = PenaltyFunction::Identity;
        let s = make_schedule(ScheduleKind::Periodic { period: 4.0 }, 4000.0, None).unwrap();
        let m = run(&Policy::zero_wait(), &d, &g, &s, 5).unwrap();
        assert_eq!(m.time_avg, 2.25);
        // Query ages cycle 1.5 / 2.5 / 2.0 against the 1.5-spaced deliveries.
        assert_eq!(m.qaoi_mean, 2.0);
        assert!(m.tx_rate <= 1.0 / d.b_lo());
    }

    #[test]
    fn age_resets_to_the_sampled_delay() {
        let d = DelayDistribution::from_spec("exp:lambda=1").unwrap();
        let g = PenaltyFunction::Identity;
        let s = make_schedule(ScheduleKind::Periodic { period: 12.0 }, 400.0, None).unwrap();
        let (_, events, traj) = run_traced(&Policy::zero_wait(), &d, &g, &s, 9).unwrap();
        let mut last_request = 0.0;
        for e in &events {
            match e.kind {
                EventKind::Request => last_request = e.time,
                EventKind::Delivery => {
                    assert!((e.age - (e.time - last_request)).abs() < 1e-12);
                    assert!((traj.age_at(e.time) - e.age).abs() < 1e-12);
                }
                EventKind::Query => {}
            }
        }
        // Requests never overlap an in-flight update and never move backward.
        let req_deliv: Vec<&TraceEvent> =
            events.iter().filter(|e| e.kind != EventKind::Query).collect();
        for w in req_deliv.windows(2) {
            assert!(w[0].time <= w[1].time + 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed_and_zero_variance_for_constant_delay() {
        let d = DelayDistribution::from_spec("det:d=1.5").unwrap();
        let g = PenaltyFunction::Identity;
        let a = replicate(&Policy::zero_wait(), &d, &g, ScheduleKind::Periodic { period: 4.0 }, 2000.0, 8, 3)
            .unwrap();
        let b = replicate(&Policy::zero_wait(), &d, &g, ScheduleKind::Periodic { period: 4.0 }, 2000.0, 8, 3)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.qaoi.std_err, 0.0);
        assert_eq!(a.time_avg.ci_half_width, 0.0);
    }

    #[test]
    fn replication_error_shrinks() {
        let d = DelayDistribution::from_spec("exp:lambda=1").unwrap();
        let g = PenaltyFunction::Identity;
        let a = replicate(&Policy::zero_wait(), &d, &g, ScheduleKind::Periodic { period: 12.0 }, 1e5, 32, 7)
            .unwrap();
        assert!(a.time_avg.ci_half_width < 0.01 * a.time_avg.mean, "{:?}", a.time_avg);
    }

    #[test]
    fn pow_rejects_poisson_schedules() {
        let d = DelayDistribution::from_spec("det:d=1.5").unwrap();
        let g = PenaltyFunction::Identity;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let s = make_schedule(ScheduleKind::Poisson { rate: 0.25 }, 1000.0, Some(&mut rng)).unwrap();
        assert!(run(&det15_pow(), &d, &g, &s, 1).is_err());
    }
}
