//! Quantization of delay laws onto uniform grids, and the index sets the
//! solver iterates over.
//!
//! Upper quantization rounds every delay up to the next grid point, lower
//! quantization rounds down. The two resulting point-mass laws bracket the
//! original law stochastically, which is what turns the solver's two value
//! tables into upper/lower bounds on the optimal penalty.

use serde::{Deserialize, Serialize};

use crate::delay::DelayDistribution;
use crate::error::{Error, Result};

/// Rounding direction of a quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Upper,
    Lower,
}

/// A delay law supported on multiples of `step`.
///
/// Atoms are stored as `(grid index, probability)` with strictly increasing
/// indices; zero-mass bins are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedDelay {
    pub step: f64,
    pub direction: Direction,
    atoms: Vec<(usize, f64)>,
}

impl QuantizedDelay {
    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    /// Moves any mass at grid index zero up to index one.
    ///
    /// Coarse lower quantizations of a law whose support starts below one
    /// step round that mass down to a zero delay; the solver's bound tables
    /// use this merged variant instead, so a zero-delay state never arises.
    /// Once the step is below the support floor this is the identity.
    pub fn without_zero_atom(mut self) -> QuantizedDelay {
        if let Some(pos) = self.atoms.iter().position(|(m, _)| *m == 0) {
            let (_, p) = self.atoms.remove(pos);
            match self.atoms.iter_mut().find(|(m, _)| *m == 1) {
                Some((_, q)) => *q += p,
                None => self.atoms.insert(0, (1, p)),
            }
        }
        self
    }

    pub fn min_idx(&self) -> usize {
        self.atoms[0].0
    }

    pub fn max_idx(&self) -> usize {
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(m, p)| *m as f64 * self.step * p).sum()
    }

    /// CDF of the quantized law (a step function).
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(m, _)| *m as f64 * self.step <= x)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Quantizes `dist` onto multiples of `step`.
///
/// Bin conventions: upper assigns the mass of `((m-1)*step, m*step]` to index
/// `m`; lower assigns the mass of `[(m-1)*step, m*step)` to index `m-1`. A
/// point mass sitting exactly on a grid point therefore keeps its position in
/// both directions.
pub fn quantize(dist: &DelayDistribution, step: f64, direction: Direction) -> QuantizedDelay {
    assert!(step > 0.0, "quantization step must be positive");
    let m_lo = (dist.b_lo() / step).floor().max(0.0) as usize;
    // One bin past the upper bound: a point mass sitting exactly on the last
    // grid edge belongs to `[b_hi, b_hi + step)` under the lower convention.
    let m_hi = (dist.b_hi() / step).ceil() as usize + 1;

    let mut atoms = Vec::new();
    for m in m_lo.max(1)..=m_hi {
        let left = (m - 1) as f64 * step;
        let right = m as f64 * step;
        let (idx, p) = match direction {
            Direction::Upper => (m, dist.cdf(right) - dist.cdf(left)),
            Direction::Lower => (m - 1, dist.cdf_left(right) - dist.cdf_left(left)),
        };
        if p > 0.0 {
            atoms.push((idx, p));
        }
    }
    // A point mass exactly at b_hi on the last grid edge is picked up by the
    // loop above; anything left over is floating-point dust.
    QuantizedDelay { step, direction, atoms }
}

/// The uniform index grids the solver works on.
///
/// All three grids share the step `q_horizon / n_intervals`:
/// remaining-time points `0..=n_intervals`, delay points
/// `y_min_idx..=y_max_idx`, and wait points `0..=z_max_idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSets {
    pub step: f64,
    pub n_intervals: usize,
    pub q_horizon: f64,
    pub wait_cap: f64,
    pub z_max_idx: usize,
    pub y_min_idx: usize,
    pub y_max_idx: usize,
}

impl GridSets {
    /// Number of delay grid points.
    pub fn n_y(&self) -> usize {
        self.y_max_idx - self.y_min_idx + 1
    }

    /// Time value of grid index `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    /// Grid index of an on-grid time value, or an error if `t` is off-grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let raw = t / self.step;
        let idx = raw.round();
        if (raw - idx).abs() > 1e-6 || idx < 0.0 {
            return Err(Error::Grid(format!("time {t} is not on the grid (step {})", self.step)));
        }
        Ok(idx as usize)
    }
}

/// Builds the grids for query horizon `q`, `n` sub-intervals, and wait cap `m`.
pub fn build_grids(q: f64, n: usize, m: f64, qd: &QuantizedDelay) -> Result<GridSets> {
    if n == 0 || !(q > 0.0) || !(m > 0.0) {
        return Err(Error::Grid(format!("invalid grid parameters q={q}, n={n}, m={m}")));
    }
    let step = q / n as f64;
    if (qd.step - step).abs() > 1e-9 * step {
        return Err(Error::Grid(format!(
            "quantization step {} does not match q/n = {step}",
            qd.step
        )));
    }
    let y_max_idx = qd.max_idx();
    if y_max_idx > n {
        return Err(Error::Grid(format!(
            "delay support ({}) exceeds the query horizon ({q})",
            y_max_idx as f64 * step
        )));
    }
    Ok(GridSets {
        step,
        n_intervals: n,
        q_horizon: q,
        wait_cap: m,
        z_max_idx: (m / step + 1e-9).floor() as usize,
        y_min_idx: qd.min_idx(),
        y_max_idx,
    })
}
