//! Age-penalty functions.
//!
//! A penalty function maps the age of the freshest delivered update to a
//! nonnegative dissatisfaction value; it must be continuous and
//! nondecreasing. Built-in kinds carry closed forms for both point
//! evaluation and the running integral used by the time-average objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An age-penalty function `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PenaltyFunction {
    /// `g(x) = x`
    Identity,
    /// `g(x) = slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `g(x) = exp(alpha * x) - 1`
    Exponential { alpha: f64 },
    /// Monotone piecewise-linear interpolation through `(x, g(x))` points.
    /// Constant below the first point, linearly extrapolated past the last.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

/// First violation found when checking a penalty function on a dense grid.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyViolation {
    Negative { x: f64, value: f64 },
    Decreasing { x: f64 },
}

impl PenaltyFunction {
    pub fn identity() -> Self {
        PenaltyFunction::Identity
    }

    pub fn exponential(alpha: f64) -> Self {
        PenaltyFunction::Exponential { alpha }
    }

    /// Builds a tabulated penalty; `points` must have strictly increasing x.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPenalty("tabulated penalty needs at least two points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidPenalty(format!(
                    "tabulated x values must be strictly increasing near x = {}",
                    w[1].0
                )));
            }
        }
        Ok(PenaltyFunction::Tabulated {
            xs: points.iter().map(|p| p.0).collect(),
            ys: points.iter().map(|p| p.1).collect(),
        })
    }

    /// Parses `identity`, `affine:a=..,b=..`, `exp:alpha=..`, or `table:<csv>`.
    ///
    /// The table file is two-column CSV `x,g(x)` with strictly increasing x.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (spec, ""),
        };
        let get = |key: &str| -> Result<f64> {
            for part in rest.split(',') {
                if let Some((k, v)) = part.split_once('=') {
                    if k.trim() == key {
                        return v
                            .trim()
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")));
                    }
                }
            }
            Err(Error::Parse(format!("penalty `{name}` is missing parameter `{key}`")))
        };
        match name {
            "identity" | "id" => Ok(PenaltyFunction::Identity),
            "affine" => Ok(PenaltyFunction::Affine { slope: get("a")?, intercept: get("b")? }),
            "exp" | "exponential" => Ok(PenaltyFunction::Exponential { alpha: get("alpha")? }),
            "table" => {
                let text = std::fs::read_to_string(rest)
                    .map_err(|e| Error::Parse(format!("cannot read penalty table `{rest}`: {e}")))?;
                let mut points = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut cols = line.split(',');
                    let x: f64 = cols
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| Error::Parse(format!("bad x at line {}", lineno + 1)))?;
                    let y: f64 = cols
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| Error::Parse(format!("bad g(x) at line {}", lineno + 1)))?;
                    points.push((x, y));
                }
                Self::tabulated(&points)
            }
            other => Err(Error::Parse(format!("unknown penalty kind `{other}`"))),
        }
    }

    /// Evaluates `g(x)` for `x >= 0`.
    pub fn eval(&self, x: f64) -> f64 {
        debug_assert!(x >= -1e-9, "penalty evaluated at negative age {x}");
        match self {
            PenaltyFunction::Identity => x,
            PenaltyFunction::Affine { slope, intercept } => slope * x + intercept,
            PenaltyFunction::Exponential { alpha } => (alpha * x).exp_m1(),
            PenaltyFunction::Tabulated { xs, ys } => {
                let n = xs.len();
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= xs[n - 1] {
                    let slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
                    return ys[n - 1] + slope.max(0.0) * (x - xs[n - 1]);
                }
                let i = xs.partition_point(|&v| v <= x);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ys[i - 1] + t * (ys[i] - ys[i - 1])
            }
        }
    }

    /// `\int_{x0}^{x1} g(u) du`, in closed form for the analytic kinds and by
    /// exact piecewise-linear integration for tables.
    pub fn integral(&self, x0: f64, x1: f64) -> f64 {
        if x1 <= x0 {
            return 0.0;
        }
        match self {
            PenaltyFunction::Identity => 0.5 * (x1 * x1 - x0 * x0),
            PenaltyFunction::Affine { slope, intercept } => {
                0.5 * slope * (x1 * x1 - x0 * x0) + intercept * (x1 - x0)
            }
            PenaltyFunction::Exponential { alpha } => {
                ((alpha * x1).exp() - (alpha * x0).exp()) / alpha - (x1 - x0)
            }
            PenaltyFunction::Tabulated { xs, .. } => {
                // Trapezoid over each linear piece; exact for piecewise-linear g.
                let mut cuts: Vec<f64> = vec![x0];
                for &x in xs {
                    if x > x0 && x < x1 {
                        cuts.push(x);
                    }
                }
                cuts.push(x1);
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    total += 0.5 * (self.eval(w[0]) + self.eval(w[1])) * (w[1] - w[0]);
                }
                total
            }
        }
    }

    /// Samples `g` on a 10^4-point grid of `[0, domain_hi]` and reports the
    /// first negativity or monotonicity violation, if any.
    pub fn validate(&self, domain_hi: f64) -> Option<PenaltyViolation> {
        const POINTS: usize = 10_000;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=POINTS {
            let x = domain_hi * i as f64 / POINTS as f64;
            let v = self.eval(x);
            if v < 0.0 {
                return Some(PenaltyViolation::Negative { x, value: v });
            }
            if v < prev - 1e-12 {
                return Some(PenaltyViolation::Decreasing { x });
            }
            prev = v;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric;

    #[test]
    fn identity_eval() {
        assert_eq!(PenaltyFunction::Identity.eval(2.25), 2.25);
    }

    #[test]
    fn exponential_eval() {
        let g = PenaltyFunction::exponential(1.0);
        assert_eq!(g.eval(0.0), 0.0);
        let g2 = PenaltyFunction::exponential(2.0);
        // e^3 - 1, cross-checked against the power series of exp(3).
        let series: f64 = (1..40).fold((0.0, 1.0), |(sum, term), k| {
            let term = term * 3.0 / k as f64;
            (sum + term, term)
        }).0;
        assert!((g2.eval(1.5) - series).abs() < 1e-9);
        assert!((g2.eval(1.5) - 19.085536923187668).abs() < 1e-9);
    }

    #[test]
    fn validate_detects_violations() {
        assert_eq!(PenaltyFunction::Identity.validate(10.0), None);

        let neg = PenaltyFunction::Affine { slope: 1.0, intercept: -1.0 };
        match neg.validate(10.0) {
            Some(PenaltyViolation::Negative { x, .. }) => assert_eq!(x, 0.0),
            other => panic!("expected negativity at 0, got {other:?}"),
        }

        let bumpy = PenaltyFunction::tabulated(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]).unwrap();
        match bumpy.validate(3.0) {
            Some(PenaltyViolation::Decreasing { x }) => assert!(x > 1.0 && x <= 2.0),
            other => panic!("expected monotonicity violation near 2, got {other:?}"),
        }
    }

    #[test]
    fn eval_is_nondecreasing_for_builtin_kinds() {
        let kinds = [
            PenaltyFunction::Identity,
            PenaltyFunction::Affine { slope: 0.7, intercept: 0.3 },
            PenaltyFunction::exponential(1.5),
            PenaltyFunction::tabulated(&[(0.0, 0.0), (1.0, 0.5), (3.0, 4.0)]).unwrap(),
        ];
        for g in &kinds {
            let mut prev = g.eval(0.0);
            for i in 1..=500 {
                let x = i as f64 * 0.02;
                let v = g.eval(x);
                assert!(v >= prev, "{g:?} decreases at {x}");
                prev = v;
            }
        }
    }

    #[test]
    fn integral_matches_quadrature() {
        let kinds = [
            PenaltyFunction::Identity,
            PenaltyFunction::Affine { slope: 2.0, intercept: 1.0 },
            PenaltyFunction::exponential(0.8),
        ];
        for g in &kinds {
            let exact = g.integral(0.3, 3.7);
            let quad = numeric::integrate(|x| g.eval(x), 0.3, 3.7, 1e-12);
            assert!((exact - quad).abs() < 1e-9 * exact.abs().max(1.0), "{g:?}: {exact} vs {quad}");
        }
        // The tabulated kind is only piecewise-smooth; compare per piece.
        let table = PenaltyFunction::tabulated(&[(0.0, 0.0), (0.7, 0.9), (2.0, 1.3), (4.0, 9.0)]).unwrap();
        let exact = table.integral(0.3, 3.7);
        let quad: f64 = [(0.3, 0.7), (0.7, 2.0), (2.0, 3.7)]
            .iter()
            .map(|(a, b)| numeric::integrate(|x| table.eval(x), *a, *b, 1e-12))
            .sum();
        assert!((exact - quad).abs() < 1e-9 * exact.abs().max(1.0), "table: {exact} vs {quad}");
    }

    #[test]
    fn identity_segment_integral_is_trapezoid() {
        let g = PenaltyFunction::Identity;
        let (a, b) = (1.5, 3.0);
        assert!((g.integral(a, b) - 0.5 * (a + b) * (b - a)).abs() < 1e-12);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(PenaltyFunction::from_spec("identity").unwrap(), PenaltyFunction::Identity);
        assert_eq!(
            PenaltyFunction::from_spec("exp:alpha=2").unwrap(),
            PenaltyFunction::Exponential { alpha: 2.0 }
        );
        assert_eq!(
            PenaltyFunction::from_spec("affine:a=1,b=0").unwrap(),
            PenaltyFunction::Affine { slope: 1.0, intercept: 0.0 }
        );
        assert!(PenaltyFunction::from_spec("cubic").is_err());
    }
}
