//! Computation-delay models, per-hop latency of the skipping rule, and the
//! timeout that minimizes the mean time between token updates.
//!
//! A node that has not finished its computation after `t_skip` seconds is
//! skipped. With `T` the (i.i.d.) computation delay and `chi` the constant
//! link latency, one hop costs `chi + min(T, t_skip)` seconds and performs an
//! update with probability `Pr[T <= t_skip] = 1 - p`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma_p, gamma_q, integrate, KahanAcc};

/// Absolute tolerance for the Gamma truncated-mean quadrature.
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyKind {
    Exponential,
    Gamma,
    #[serde(rename = "pareto-ii")]
    ParetoII,
}

impl std::str::FromStr for LatencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(LatencyKind::Exponential),
            "gamma" => Ok(LatencyKind::Gamma),
            "pareto-ii" => Ok(LatencyKind::ParetoII),
            other => Err(Error::InvalidInput(format!(
                "unknown latency model '{other}'; expected exponential, gamma or pareto-ii"
            ))),
        }
    }
}

impl fmt::Display for LatencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LatencyKind::Exponential => "exponential",
            LatencyKind::Gamma => "gamma",
            LatencyKind::ParetoII => "pareto-ii",
        };
        f.write_str(s)
    }
}

/// Distribution of the random computation delay `T` of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyModel {
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    /// Lomax: `Pr[T > t] = (1 + t/scale)^(-shape)`.
    ParetoII { shape: f64, scale: f64 },
}

impl LatencyModel {
    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::domain("exponential", format!("mean must be positive, got {mean}")));
        }
        Ok(LatencyModel::Exponential { mean })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(
                "gamma",
                format!("shape and scale must be positive, got ({shape}, {scale})"),
            ));
        }
        Ok(LatencyModel::Gamma { shape, scale })
    }

    pub fn pareto_ii(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 1.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(
                "pareto-ii",
                format!("need shape > 1 and scale > 0, got ({shape}, {scale})"),
            ));
        }
        Ok(LatencyModel::ParetoII { shape, scale })
    }

    /// Builds a model from its `{kind, param1, param2}` form. `param2` is
    /// ignored for the exponential model.
    pub fn from_params(kind: LatencyKind, param1: f64, param2: f64) -> Result<Self> {
        match kind {
            LatencyKind::Exponential => Self::exponential(param1),
            LatencyKind::Gamma => Self::gamma(param1, param2),
            LatencyKind::ParetoII => Self::pareto_ii(param1, param2),
        }
    }

    pub fn kind(&self) -> LatencyKind {
        match self {
            LatencyModel::Exponential { .. } => LatencyKind::Exponential,
            LatencyModel::Gamma { .. } => LatencyKind::Gamma,
            LatencyModel::ParetoII { .. } => LatencyKind::ParetoII,
        }
    }

    /// `(param1, param2)`; the exponential model reports `(mean, 0)`.
    pub fn params(&self) -> (f64, f64) {
        match *self {
            LatencyModel::Exponential { mean } => (mean, 0.0),
            LatencyModel::Gamma { shape, scale } => (shape, scale),
            LatencyModel::ParetoII { shape, scale } => (shape, scale),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatencyModel::Exponential { mean } => mean,
            LatencyModel::Gamma { shape, scale } => shape * scale,
            LatencyModel::ParetoII { shape, scale } => scale / (shape - 1.0),
        }
    }

    /// `Pr[T <= t]`.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        check_time("cdf", t)?;
        Ok(self.cdf_unchecked(t))
    }

    /// `Pr[T > t]`, evaluated directly in the tail rather than as `1 - cdf`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time("survival", t)?;
        Ok(self.survival_unchecked(t))
    }

    fn cdf_unchecked(&self, t: f64) -> f64 {
        match *self {
            LatencyModel::Exponential { mean } => -(-t / mean).exp_m1(),
            LatencyModel::Gamma { shape, scale } => gamma_p(shape, t / scale),
            LatencyModel::ParetoII { shape, scale } => -(-shape * (t / scale).ln_1p()).exp_m1(),
        }
    }

    fn survival_unchecked(&self, t: f64) -> f64 {
        match *self {
            LatencyModel::Exponential { mean } => (-t / mean).exp(),
            LatencyModel::Gamma { shape, scale } => gamma_q(shape, t / scale),
            LatencyModel::ParetoII { shape, scale } => (-shape * (t / scale).ln_1p()).exp(),
        }
    }

    /// Timeout whose skip probability is `p`, i.e. the `t` with
    /// `Pr[T > t] = p`. Closed form for exponential and Pareto II, bisection
    /// for Gamma.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain("quantile", format!("skip probability must be in (0, 1], got {p}")));
        }
        if p == 1.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            LatencyModel::Exponential { mean } => -mean * p.ln(),
            LatencyModel::ParetoII { shape, scale } => scale * (-p.ln() / shape).exp_m1(),
            LatencyModel::Gamma { shape, scale } => self.gamma_quantile(shape, scale, p),
        })
    }

    fn gamma_quantile(&self, shape: f64, scale: f64, p: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = shape * scale + 50.0 * scale * shape.max(1.0);
        while self.survival_unchecked(hi) > p {
            lo = hi;
            hi *= 2.0;
        }
        // bisect until the bracket stops shrinking in f64
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.survival_unchecked(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (s_lo, s_hi) = (self.survival_unchecked(lo), self.survival_unchecked(hi));
        if (s_lo - p).abs() < (s_hi - p).abs() {
            lo
        } else {
            hi
        }
    }

    /// One i.i.d. draw of `T`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    /// A reusable sampler; cheaper than [`LatencyModel::sample`] in loops.
    pub fn sampler(&self) -> LatencySampler {
        match *self {
            LatencyModel::Exponential { mean } => LatencySampler::Exponential { mean },
            LatencyModel::Gamma { shape, scale } => LatencySampler::Gamma(
                Gamma::new(shape, scale).expect("parameters validated at construction"),
            ),
            LatencyModel::ParetoII { shape, scale } => LatencySampler::ParetoII { shape, scale },
        }
    }

    /// `E[min(T, t_skip)] = int_0^t_skip Pr[T > s] ds`.
    pub fn truncated_mean(&self, t_skip: Timeout) -> f64 {
        let t = match t_skip {
            Timeout::Infinite => return self.mean(),
            Timeout::Finite(t) => t,
        };
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            LatencyModel::Exponential { mean } => -mean * (-t / mean).exp_m1(),
            LatencyModel::ParetoII { shape, scale } => {
                scale / (shape - 1.0) * -((1.0 - shape) * (t / scale).ln_1p()).exp_m1()
            }
            LatencyModel::Gamma { scale, .. } => {
                // geometric panels keep the mass near 0 visible to the quadrature
                let mut acc = KahanAcc::default();
                let mut lo = 0.0;
                let mut hi = (scale * 1e-3).min(t);
                let panel_tol = QUAD_TOL / 64.0;
                loop {
                    let (v, _) = integrate(|s| self.survival_unchecked(s), lo, hi, panel_tol);
                    acc.add(v);
                    if hi >= t || self.survival_unchecked(hi) == 0.0 {
                        break;
                    }
                    lo = hi;
                    hi = (hi * 4.0).min(t);
                }
                acc.value()
            }
        }
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LatencyModel::Exponential { mean } => write!(f, "Exponential(mean={mean})"),
            LatencyModel::Gamma { shape, scale } => write!(f, "Gamma(shape={shape}, scale={scale})"),
            LatencyModel::ParetoII { shape, scale } => {
                write!(f, "ParetoII(shape={shape}, scale={scale})")
            }
        }
    }
}

fn check_time(op: &'static str, t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::domain(op, format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Sampler for a [`LatencyModel`].
///
/// Exponential and Pareto II use inverse-transform sampling of a uniform in
/// `(0, 1]`. Gamma uses the Marsaglia–Tsang squeeze/rejection method (with
/// the `U^(1/shape)` boost for `shape < 1`) as implemented by `rand_distr`.
#[derive(Debug, Clone, Copy)]
pub enum LatencySampler {
    Exponential { mean: f64 },
    Gamma(Gamma<f64>),
    ParetoII { shape: f64, scale: f64 },
}

impl Distribution<f64> for LatencySampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatencySampler::Exponential { mean } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                -mean * u.ln()
            }
            LatencySampler::Gamma(g) => g.sample(rng),
            LatencySampler::ParetoII { shape, scale } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                scale * (-u.ln() / shape).exp_m1()
            }
        }
    }
}

/// Skip timeout. `Infinite` means the token always waits (`p = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timeout {
    Finite(f64),
    Infinite,
}

impl Timeout {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Timeout::Infinite)
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Timeout::Finite(t) => t,
            Timeout::Infinite => f64::INFINITY,
        }
    }

    /// Whether a computation that took `t` seconds finishes in time.
    pub fn admits(&self, t: f64) -> bool {
        match *self {
            Timeout::Finite(limit) => t <= limit,
            Timeout::Infinite => true,
        }
    }
}

impl fmt::Display for Timeout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timeout::Finite(t) => write!(f, "{t}"),
            Timeout::Infinite => f.write_str("inf"),
        }
    }
}

/// A timeout together with its skip probability under a specific model and
/// the per-hop communication latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipPolicy {
    t_skip: Timeout,
    p: f64,
    chi: f64,
}

impl SkipPolicy {
    pub fn from_t_skip(model: &LatencyModel, t_skip: Timeout, chi: f64) -> Result<Self> {
        check_chi(chi)?;
        let p = match t_skip {
            Timeout::Infinite => 0.0,
            Timeout::Finite(t) => {
                if t.is_infinite() {
                    return Self::from_t_skip(model, Timeout::Infinite, chi);
                }
                model.survival(t)?
            }
        };
        Ok(SkipPolicy { t_skip, p, chi })
    }

    /// Inverts the model at skip probability `p`. `p = 0` maps to the
    /// infinite timeout and `p = 1` to `t_skip = 0`.
    pub fn from_p(model: &LatencyModel, p: f64, chi: f64) -> Result<Self> {
        check_chi(chi)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("skip policy", format!("p must be in [0, 1], got {p}")));
        }
        if p == 0.0 {
            return Ok(SkipPolicy {
                t_skip: Timeout::Infinite,
                p: 0.0,
                chi,
            });
        }
        let t = model.quantile(p)?;
        Self::from_t_skip(model, Timeout::Finite(t), chi)
    }

    pub fn t_skip(&self) -> Timeout {
        self.t_skip
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }
}

fn check_chi(chi: f64) -> Result<()> {
    if !(chi >= 0.0 && chi.is_finite()) {
        return Err(Error::domain("skip policy", format!("chi must be nonnegative, got {chi}")));
    }
    Ok(())
}

/// Mean wall-clock cost of one hop: `chi + E[min(T, t_skip)]`.
pub fn expected_hop_latency(model: &LatencyModel, policy: &SkipPolicy) -> f64 {
    policy.chi + model.truncated_mean(policy.t_skip)
}

/// Expected total latency of `h_max` hops.
pub fn expected_total_latency(model: &LatencyModel, policy: &SkipPolicy, h_max: u64) -> f64 {
    h_max as f64 * expected_hop_latency(model, policy)
}

/// Mean time between two consecutive token updates,
/// `(chi + E[min(T, t_skip)]) / Pr[T <= t_skip]`.
pub fn time_between_updates(model: &LatencyModel, policy: &SkipPolicy) -> Result<f64> {
    let success = match policy.t_skip {
        Timeout::Infinite => 1.0,
        Timeout::Finite(t) => model.cdf(t)?,
    };
    if success <= 0.0 {
        return Err(Error::domain(
            "time_between_updates",
            "Pr[T <= t_skip] is zero, the token is never updated",
        ));
    }
    Ok(expected_hop_latency(model, policy) / success)
}

/// Result of [`optimal_t_skip`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTimeout {
    pub t_skip: Timeout,
    pub p: f64,
    /// Mean time between updates at the optimum.
    pub objective: f64,
}

const GRID_LO: f64 = 1e-6;
const GRID_HI: f64 = 1e4;
const GRID_POINTS: usize = 241;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Timeout minimizing [`time_between_updates`] over `(0, +inf]`.
///
/// Scans a log-spaced grid on `[1e-6, 1e4]` plus the infinite endpoint, then
/// refines the best finite grid cell by golden-section search in `ln t`.
/// Ties with the infinite endpoint resolve to `Infinite`.
pub fn optimal_t_skip(model: &LatencyModel, chi: f64) -> Result<OptimalTimeout> {
    check_chi(chi)?;
    let objective = |t: f64| -> f64 {
        let success = model.cdf_unchecked(t);
        if success <= 0.0 {
            return f64::INFINITY;
        }
        (chi + model.truncated_mean(Timeout::Finite(t))) / success
    };

    let step = (GRID_HI / GRID_LO).ln() / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| (GRID_LO.ln() + step * i as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| objective(t)).collect();
    let (best, best_val) = values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is non-empty");

    let at_infinity = chi + model.mean();
    if at_infinity <= best_val {
        return Ok(OptimalTimeout {
            t_skip: Timeout::Infinite,
            p: 0.0,
            objective: at_infinity,
        });
    }

    let lo = grid[best.saturating_sub(1)].ln();
    let hi = grid[(best + 1).min(GRID_POINTS - 1)].ln();
    let log_t = golden_section(|x| objective(x.exp()), lo, hi);
    let mut t = log_t.exp();
    let mut val = objective(t);
    if best_val < val {
        t = grid[best];
        val = best_val;
    }
    Ok(OptimalTimeout {
        t_skip: Timeout::Finite(t),
        p: model.survival_unchecked(t),
        objective: val,
    })
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    // the bracket is in ln(t), so an absolute width is a relative width in t
    while (b - a) > GOLDEN_REL_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
