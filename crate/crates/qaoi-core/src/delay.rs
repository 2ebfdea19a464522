//! Bounded transmission-delay distributions.
//!
//! Every delay law used by the solver and the simulator has bounded support
//! `[b_lo, b_hi]` with `b_lo > 0`. Unbounded families (exponential,
//! log-normal, Pareto) are conditioned on a window whose lower edge is a
//! configurable start point and whose upper edge is a quantile of the base
//! law; the CDF is renormalized over that window. Families that are already
//! bounded (deterministic, discrete point masses, uniform, scaled beta) keep
//! their natural support.
//!
//! | family      | spec string                  | base support      |
//! |-------------|------------------------------|-------------------|
//! | exponential | `exp:lambda=1.0`             | `[0, inf)`        |
//! | log-normal  | `lognormal:mu=0,sigma=1`     | `(0, inf)`        |
//! | Pareto      | `pareto:xm=1,alpha=3`        | `[xm, inf)`       |
//! | beta        | `beta:alpha=1,beta=1`        | `[eps, 1]`        |
//! | uniform     | `uniform:lo=0.5,hi=1.0`      | `[lo, hi]`        |
//! | point mass  | `det:d=1.5`                  | `{d}`             |
//! | discrete    | `disc:1@0.5,2@0.5`           | listed atoms      |

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric;

/// Default lower start of the truncation window.
pub const DEFAULT_TRUNCATION_START: f64 = 0.01;
/// Default base-law mass kept below the upper support edge.
pub const DEFAULT_TRUNCATION_MASS: f64 = 0.95;

/// Parametric family of a delay law, before truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Deterministic { value: f64 },
    /// Point masses `(value, probability)`, strictly increasing values.
    Discrete { atoms: Vec<(f64, f64)> },
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Pareto { scale: f64, shape: f64 },
    /// Beta(alpha, beta) left-cut to `[start, 1]` so the support stays positive.
    BetaScaled { alpha: f64, beta: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// A transmission-delay law with bounded support `[b_lo, b_hi]`, `b_lo > 0`.
///
/// Immutable after construction; safe to share across worker threads.
/// Sampling takes an explicit random state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    family: Family,
    b_lo: f64,
    b_hi: f64,
    /// Base-law CDF at `b_lo` from the left and at `b_hi`; the truncated CDF
    /// renormalizes over `(q_lo, q_hi]`.
    q_lo: f64,
    q_hi: f64,
}

impl DelayDistribution {
    /// Conditions `family` on `[lower_start, F_base^-1(upper_mass)]`.
    ///
    /// For families with bounded support the truncation is the identity
    /// (beta keeps the `lower_start` cut so that the support stays positive).
    pub fn truncated(family: Family, lower_start: f64, upper_mass: f64) -> Result<Self> {
        if !(lower_start > 0.0) || !lower_start.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "truncation start must be positive, got {lower_start}"
            )));
        }
        if !(upper_mass > 0.0 && upper_mass < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "truncation mass must be in (0, 1), got {upper_mass}"
            )));
        }
        validate_family(&family)?;

        let (b_lo, b_hi) = match &family {
            Family::Deterministic { value } => (*value, *value),
            Family::Discrete { atoms } => (atoms[0].0, atoms[atoms.len() - 1].0),
            Family::Uniform { lo, hi } => (*lo, *hi),
            Family::Exponential { rate } => (lower_start, -(1.0 - upper_mass).ln() / rate),
            Family::Pareto { scale, shape } => (
                lower_start.max(*scale),
                scale * (1.0 - upper_mass).powf(-1.0 / shape),
            ),
            Family::LogNormal { mu, sigma } => {
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (lower_start, (mu + sigma * normal.inverse_cdf(upper_mass)).exp())
            }
            // Already bounded above by 1; only the lower cut applies.
            Family::BetaScaled { .. } => (lower_start, 1.0),
        };

        if !(b_lo > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "support must start above zero, got b_lo = {b_lo}"
            )));
        }
        if !b_hi.is_finite() {
            return Err(Error::InvalidDistribution(
                "requested quantile is unbounded".into(),
            ));
        }
        if b_lo > b_hi {
            return Err(Error::InvalidDistribution(format!(
                "empty truncation window: [{b_lo}, {b_hi}]"
            )));
        }

        let q_lo = base_cdf_left(&family, b_lo);
        let q_hi = base_cdf(&family, b_hi);
        if !(q_hi - q_lo > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "truncation window [{b_lo}, {b_hi}] carries no probability mass"
            )));
        }
        Ok(Self { family, b_lo, b_hi, q_lo, q_hi })
    }

    /// Builds a distribution with the default truncation window.
    pub fn with_default_truncation(family: Family) -> Result<Self> {
        Self::truncated(family, DEFAULT_TRUNCATION_START, DEFAULT_TRUNCATION_MASS)
    }

    /// Parses a spec string such as `exp:lambda=1.0` or `disc:1@0.5,2@0.5`
    /// and applies the default truncation window.
    pub fn from_spec(spec: &str) -> Result<Self> {
        Self::with_default_truncation(parse_family(spec)?)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Lower support bound (B_L).
    pub fn b_lo(&self) -> f64 {
        self.b_lo
    }

    /// Upper support bound (B_U).
    pub fn b_hi(&self) -> f64 {
        self.b_hi
    }

    /// Point masses of the law, when it is purely discrete.
    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.family {
            Family::Discrete { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// True for the point-mass families (deterministic / discrete).
    pub fn is_discrete(&self) -> bool {
        matches!(self.family, Family::Deterministic { .. } | Family::Discrete { .. })
    }

    /// `Pr(Y <= x)` under the truncated law.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.b_lo {
            return 0.0;
        }
        if x >= self.b_hi {
            return 1.0;
        }
        match &self.family {
            Family::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Discrete { atoms } => {
                atoms.iter().filter(|(v, _)| *v <= x).map(|(_, p)| p).sum()
            }
            _ => ((base_cdf(&self.family, x) - self.q_lo) / (self.q_hi - self.q_lo)).clamp(0.0, 1.0),
        }
    }

    /// `Pr(Y < x)`: the left limit of the CDF, which differs from [`cdf`]
    /// only at point masses.
    ///
    /// [`cdf`]: DelayDistribution::cdf
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.family {
            Family::Deterministic { value } => {
                if x > *value {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Discrete { atoms } => {
                atoms.iter().filter(|(v, _)| *v < x).map(|(_, p)| p).sum()
            }
            _ => self.cdf(x),
        }
    }

    /// Density of the truncated law, `None` for point-mass families.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        if self.is_discrete() {
            return None;
        }
        if x < self.b_lo || x > self.b_hi {
            return Some(0.0);
        }
        Some(base_pdf(&self.family, x) / (self.q_hi - self.q_lo))
    }

    /// Inverse CDF of the truncated law for `p` in `[0, 1]`.
    ///
    /// Families with a closed-form base quantile invert directly; the rest
    /// (beta) fall back to monotone bisection on the CDF to 1e-12.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let x = match &self.family {
            Family::Deterministic { value } => *value,
            Family::Discrete { atoms } => {
                let mut cum = 0.0;
                let mut out = atoms[atoms.len() - 1].0;
                for (v, w) in atoms {
                    cum += w;
                    if p <= cum + 1e-15 {
                        out = *v;
                        break;
                    }
                }
                out
            }
            Family::Exponential { rate } => {
                let q = self.q_lo + p * (self.q_hi - self.q_lo);
                -(1.0 - q).ln() / rate
            }
            Family::Pareto { scale, shape } => {
                let q = self.q_lo + p * (self.q_hi - self.q_lo);
                scale * (1.0 - q).powf(-1.0 / shape)
            }
            Family::LogNormal { mu, sigma } => {
                let q = self.q_lo + p * (self.q_hi - self.q_lo);
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (mu + sigma * normal.inverse_cdf(q)).exp()
            }
            Family::Uniform { lo, hi } => lo + p * (hi - lo),
            Family::BetaScaled { .. } => {
                numeric::bisect_nondecreasing(|x| self.cdf(x), p, self.b_lo, self.b_hi, 1e-12)
            }
        };
        x.clamp(self.b_lo, self.b_hi)
    }

    /// Draws one delay; deterministic for a given random state.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `E[f(Y)]` by exact atom sums (discrete) or quadrature (continuous).
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self.atoms_or_point() {
            Some(atoms) => atoms.iter().map(|(v, p)| p * f(*v)).sum(),
            None => numeric::integrate(
                |x| f(x) * self.pdf(x).unwrap_or(0.0),
                self.b_lo,
                self.b_hi,
                1e-13,
            ),
        }
    }

    /// `E[f(Y) ; Y > c]` (partial expectation over the upper tail).
    pub fn expect_above(&self, c: f64, f: impl Fn(f64) -> f64) -> f64 {
        match self.atoms_or_point() {
            Some(atoms) => atoms.iter().filter(|(v, _)| *v > c).map(|(v, p)| p * f(*v)).sum(),
            None => {
                if c >= self.b_hi {
                    0.0
                } else {
                    let lo = c.max(self.b_lo);
                    numeric::integrate(|x| f(x) * self.pdf(x).unwrap_or(0.0), lo, self.b_hi, 1e-13)
                }
            }
        }
    }

    /// Mean delay.
    pub fn mean(&self) -> f64 {
        self.expect(|y| y)
    }

    fn atoms_or_point(&self) -> Option<Vec<(f64, f64)>> {
        match &self.family {
            Family::Deterministic { value } => Some(vec![(*value, 1.0)]),
            Family::Discrete { atoms } => Some(atoms.clone()),
            _ => None,
        }
    }
}

fn validate_family(family: &Family) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidDistribution(msg));
    match family {
        Family::Deterministic { value } => {
            if !(value.is_finite() && *value > 0.0) {
                return bad(format!("deterministic delay must be positive, got {value}"));
            }
        }
        Family::Discrete { atoms } => {
            if atoms.is_empty() {
                return bad("discrete law needs at least one atom".into());
            }
            let mut total = 0.0;
            let mut prev = 0.0;
            for (v, p) in atoms {
                if !(v.is_finite() && *v > 0.0) {
                    return bad(format!("atom values must be positive, got {v}"));
                }
                if *v <= prev {
                    return bad("atom values must be strictly increasing".into());
                }
                if !(p.is_finite() && *p > 0.0) {
                    return bad(format!("atom probabilities must be positive, got {p}"));
                }
                prev = *v;
                total += p;
            }
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("atom probabilities sum to {total}, expected 1"));
            }
        }
        Family::Exponential { rate } => {
            if !(rate.is_finite() && *rate > 0.0) {
                return bad(format!("exponential rate must be positive, got {rate}"));
            }
        }
        Family::LogNormal { mu, sigma } => {
            if !mu.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                return bad(format!("log-normal requires finite mu and sigma > 0, got ({mu}, {sigma})"));
            }
        }
        Family::Pareto { scale, shape } => {
            if !(scale.is_finite() && *scale > 0.0) || !(shape.is_finite() && *shape > 0.0) {
                return bad(format!("Pareto requires xm > 0 and alpha > 0, got ({scale}, {shape})"));
            }
        }
        Family::BetaScaled { alpha, beta } => {
            if !(alpha.is_finite() && *alpha > 0.0) || !(beta.is_finite() && *beta > 0.0) {
                return bad(format!("beta requires alpha > 0 and beta > 0, got ({alpha}, {beta})"));
            }
        }
        Family::Uniform { lo, hi } => {
            if !(lo.is_finite() && *lo > 0.0) || !(hi.is_finite() && hi > lo) {
                return bad(format!("uniform requires 0 < lo < hi, got ({lo}, {hi})"));
            }
        }
    }
    Ok(())
}

fn base_cdf(family: &Family, x: f64) -> f64 {
    match family {
        Family::Deterministic { value } => {
            if x >= *value {
                1.0
            } else {
                0.0
            }
        }
        Family::Discrete { atoms } => atoms.iter().filter(|(v, _)| *v <= x).map(|(_, p)| p).sum(),
        Family::Exponential { rate } => {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (-rate * x).exp()
            }
        }
        Family::LogNormal { mu, sigma } => {
            if x <= 0.0 {
                0.0
            } else {
                let normal = Normal::new(*mu, *sigma).expect("log-normal parameters");
                normal.cdf(x.ln())
            }
        }
        Family::Pareto { scale, shape } => {
            if x <= *scale {
                0.0
            } else {
                1.0 - (scale / x).powf(*shape)
            }
        }
        Family::BetaScaled { alpha, beta } => {
            if x <= 0.0 {
                0.0
            } else if x >= 1.0 {
                1.0
            } else {
                Beta::new(*alpha, *beta).expect("beta parameters").cdf(x)
            }
        }
        Family::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
    }
}

fn base_cdf_left(family: &Family, x: f64) -> f64 {
    match family {
        Family::Deterministic { value } => {
            if x > *value {
                1.0
            } else {
                0.0
            }
        }
        Family::Discrete { atoms } => atoms.iter().filter(|(v, _)| *v < x).map(|(_, p)| p).sum(),
        _ => base_cdf(family, x),
    }
}

fn base_pdf(family: &Family, x: f64) -> f64 {
    match family {
        Family::Deterministic { .. } | Family::Discrete { .. } => 0.0,
        Family::Exponential { rate } => rate * (-rate * x).exp(),
        Family::LogNormal { mu, sigma } => {
            let z = (x.ln() - mu) / sigma;
            (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
        Family::Pareto { scale, shape } => shape * scale.powf(*shape) / x.powf(shape + 1.0),
        Family::BetaScaled { alpha, beta } => {
            let ln_b = statrs::function::beta::ln_beta(*alpha, *beta);
            ((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() - ln_b).exp()
        }
        Family::Uniform { lo, hi } => 1.0 / (hi - lo),
    }
}

/// Parses the `family:param=value,...` spec grammar.
pub fn parse_family(spec: &str) -> Result<Family> {
    let spec = spec.trim();
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (spec, ""),
    };
    let params = parse_params(rest)?;
    let get = |key: &str| -> Result<f64> {
        params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse(format!("distribution `{name}` is missing parameter `{key}`")))
    };
    let get_or = |key: &str, default: f64| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v).unwrap_or(default);

    match name {
        "det" | "deterministic" => Ok(Family::Deterministic { value: get("d")? }),
        "disc" | "discrete" => {
            let mut atoms = Vec::new();
            for part in rest.split(',').filter(|s| !s.trim().is_empty()) {
                let (v, p) = part
                    .split_once('@')
                    .ok_or_else(|| Error::Parse(format!("discrete atom `{part}` must look like value@prob")))?;
                let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad atom value `{v}`")))?;
                let p: f64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad atom probability `{p}`")))?;
                atoms.push((v, p));
            }
            atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Ok(Family::Discrete { atoms })
        }
        "exp" | "exponential" => Ok(Family::Exponential { rate: get("lambda")? }),
        "lognormal" | "lognorm" => Ok(Family::LogNormal { mu: get_or("mu", 0.0), sigma: get("sigma")? }),
        "pareto" => Ok(Family::Pareto { scale: get("xm")?, shape: get("alpha")? }),
        "beta" => Ok(Family::BetaScaled { alpha: get("alpha")?, beta: get("beta")? }),
        "uniform" => Ok(Family::Uniform { lo: get("lo")?, hi: get("hi")? }),
        other => Err(Error::Parse(format!("unknown distribution family `{other}`"))),
    }
}

fn parse_params(rest: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for part in rest.split(',').filter(|s| !s.trim().is_empty()) {
        if let Some((k, v)) = part.split_once('=') {
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad numeric value `{v}` for `{k}`")))?;
            out.push((k.trim().to_string(), value));
        }
        // Parts without '=' (discrete atoms) are handled by the caller.
    }
    Ok(out)
}
