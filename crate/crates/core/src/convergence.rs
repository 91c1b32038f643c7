//! Expected optimality-gap bound of the skipping scheme after `h_max` hops.
//!
//! The number of actual token updates after `h_max` hops is
//! `Binomial(h_max, 1 - p)`. Conditioned on `h` updates the gap is bounded by
//! `e_h`; the overall bound is the binomial average of `e_h`.
//!
//! For `h > 0`,
//!
//! ```text
//! e_h = A (2 + ln(h+1)) / (zeta sqrt(h+1))
//!     + d_W k sqrt(n) [ 1/(h+1) sum_{i=1}^{h+1} l^i
//!                       + sum_{j=1}^{h} 1/(j(j+1)) sum_{i=h+1-j}^{h+1} l^i ]
//! ```
//!
//! with `A = d_W^2 + zeta^2 (k^2 + d sigma^2)`, `l = |lambda_1|` and
//! `e_0 = d_W k`.

use crate::error::{Error, Result};
use crate::schedule::{lambda1, Scheme};
use crate::special::KahanAcc;

/// Powers of `lambda_1` below this are treated as zero.
const POWER_FLOOR: f64 = 1e-300;
/// Relative size below which the remaining geometric tail is dropped.
const SERIES_REL_CUTOFF: f64 = 1e-16;
/// Binomial mass allowed to fall outside the summation window.
const BINOMIAL_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    /// Diameter of the feasible set.
    pub d_w: f64,
    /// Lipschitz constant of the local losses.
    pub k: f64,
    /// Token dimension.
    pub d: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub sigma: f64,
    /// Learning-rate parameter; step `c` uses `zeta / sqrt(c)`.
    pub zeta: f64,
    pub n: usize,
    pub p: f64,
    pub h_max: u64,
    /// `|lambda_1|` of the schedule (0 for the randomized ring).
    pub lambda1: f64,
}

impl ConvergenceParams {
    /// Parameters for `scheme`, with `lambda_1` derived from `(n, p)`.
    ///
    /// The fixed ring at `p = 0` is rejected: the bound does not cover it.
    #[allow(clippy::too_many_arguments)]
    pub fn for_scheme(
        scheme: Scheme,
        d_w: f64,
        k: f64,
        d: usize,
        sigma: f64,
        zeta: f64,
        n: usize,
        p: f64,
        h_max: u64,
    ) -> Result<Self> {
        let lambda1 = lambda1(n, p, scheme)?;
        let params = ConvergenceParams {
            d_w,
            k,
            d,
            sigma,
            zeta,
            n,
            p,
            h_max,
            lambda1,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("convergence params", msg));
        if !(self.d_w > 0.0) || !(self.k > 0.0) || !(self.zeta > 0.0) {
            return bad(format!(
                "d_W, k and zeta must be positive (got {}, {}, {})",
                self.d_w, self.k, self.zeta
            ));
        }
        if self.d == 0 || self.n < 2 || self.h_max == 0 {
            return bad(format!(
                "need d >= 1, n >= 2, h_max >= 1 (got {}, {}, {})",
                self.d, self.n, self.h_max
            ));
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.p) {
            return bad(format!("p must be in [0, 1), got {}", self.p));
        }
        if !(0.0..1.0).contains(&self.lambda1) {
            return bad(format!("lambda1 must be in [0, 1), got {}", self.lambda1));
        }
        Ok(())
    }

    pub fn with_h_max(mut self, h_max: u64) -> Self {
        self.h_max = h_max;
        self
    }

    fn noise_term(&self, h: u64) -> f64 {
        let a = self.d_w * self.d_w
            + self.zeta * self.zeta * (self.k * self.k + self.d as f64 * self.sigma * self.sigma);
        let hp1 = (h + 1) as f64;
        a * (2.0 + hp1.ln()) / (self.zeta * hp1.sqrt())
    }

    fn bias_scale(&self) -> f64 {
        self.d_w * self.k * (self.n as f64).sqrt()
    }
}

/// `sum_{i=0}^{m-1} l^i`, stable for `l` close to 1.
fn geometric_count(l: f64, m: u64) -> f64 {
    if l == 0.0 {
        return 1.0;
    }
    let ln = l.ln();
    (m as f64 * ln).exp_m1() / ln.exp_m1()
}

/// `w_j = (sum_{i=0}^{j} l^i) / (j (j+1))`, the weight of the `j`-th inner sum
/// once its leading power `l^(h+1-j)` is factored out.
fn inner_weight(l: f64, j: u64) -> f64 {
    geometric_count(l, j + 1) / (j as f64 * (j + 1) as f64)
}

/// `1/(h+1) sum_{i=1}^{h+1} l^i`.
fn average_power(l: f64, h: u64) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    l * geometric_count(l, h + 1) / (h + 1) as f64
}

/// `sum_{j=1}^{h} l^(h+1-j) w_j`, evaluated directly from the short end
/// (`j = h`) and truncated once the remaining geometric tail is negligible.
fn bias_series_direct(l: f64, h: u64) -> f64 {
    if l == 0.0 || h == 0 {
        return 0.0;
    }
    let mut acc = KahanAcc::default();
    let mut power = 1.0;
    let tail_factor = 1.0 / (1.0 - l);
    for j in (1..=h).rev() {
        power *= l;
        if power < POWER_FLOOR {
            break;
        }
        acc.add(power * inner_weight(l, j));
        // every remaining term is at most l^a since w_j <= 1
        if power * l * tail_factor < SERIES_REL_CUTOFF * acc.value() {
            break;
        }
    }
    acc.value()
}

/// `e_h` evaluated on its own.
pub fn e_h(params: &ConvergenceParams, h: u64) -> f64 {
    if h == 0 {
        return params.d_w * params.k;
    }
    let l = params.lambda1;
    params.noise_term(h) + params.bias_scale() * (average_power(l, h) + bias_series_direct(l, h))
}

/// Evaluates `e_h` along increasing `h`, reusing the bias series through
/// `S(h+1) = l (S(h) + w_{h+1})`.
#[derive(Debug, Clone)]
pub struct EhSweep<'a> {
    params: &'a ConvergenceParams,
    h: u64,
    series: f64,
}

impl<'a> EhSweep<'a> {
    pub fn starting_at(params: &'a ConvergenceParams, h: u64) -> Self {
        EhSweep {
            params,
            h,
            series: bias_series_direct(params.lambda1, h),
        }
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    pub fn value(&self) -> f64 {
        if self.h == 0 {
            return self.params.d_w * self.params.k;
        }
        let l = self.params.lambda1;
        self.params.noise_term(self.h)
            + self.params.bias_scale() * (average_power(l, self.h) + self.series)
    }

    pub fn advance(&mut self) {
        let l = self.params.lambda1;
        if l > 0.0 {
            self.series = l * (self.series + inner_weight(l, self.h + 1));
        }
        self.h += 1;
    }
}

/// Normalized binomial weights over the window that carries all but
/// `BINOMIAL_TAIL_MASS` of `Binomial(trials, success)`.
///
/// Weights are grown outward from the mode by the pmf ratio recurrence and
/// normalized at the end, so no factorials are evaluated.
pub fn binomial_window(trials: u64, success: f64) -> (u64, Vec<f64>) {
    if success >= 1.0 {
        return (trials, vec![1.0]);
    }
    if success <= 0.0 {
        return (0, vec![1.0]);
    }
    let odds = success / (1.0 - success);
    let mode = (((trials + 1) as f64 * success).floor() as u64).min(trials);
    let ratio_up = |h: u64| (trials - h) as f64 / (h + 1) as f64 * odds;
    let ratio_down = |h: u64| h as f64 / (trials - h + 1) as f64 / odds;

    let mut lo = mode;
    let mut hi = mode;
    let mut w_lo = 1.0;
    let mut w_hi = 1.0;
    let mut below: Vec<f64> = Vec::new();
    let mut above: Vec<f64> = Vec::new();
    let mut total = KahanAcc::default();
    total.add(1.0);

    loop {
        // geometric bound on what lies beyond each edge
        let lo_tail = if lo == 0 {
            0.0
        } else {
            let r = ratio_down(lo);
            if r < 1.0 {
                w_lo * r / (1.0 - r)
            } else {
                f64::INFINITY
            }
        };
        let hi_tail = if hi == trials {
            0.0
        } else {
            let r = ratio_up(hi);
            if r < 1.0 {
                w_hi * r / (1.0 - r)
            } else {
                f64::INFINITY
            }
        };
        let limit = BINOMIAL_TAIL_MASS * total.value();
        if lo_tail + hi_tail < limit {
            break;
        }
        if lo_tail >= hi_tail {
            w_lo *= ratio_down(lo);
            lo -= 1;
            below.push(w_lo);
            total.add(w_lo);
        } else {
            w_hi *= ratio_up(hi);
            hi += 1;
            above.push(w_hi);
            total.add(w_hi);
        }
    }

    let norm = total.value();
    let mut weights: Vec<f64> = below.into_iter().rev().collect();
    weights.push(1.0);
    weights.extend(above);
    weights.iter_mut().for_each(|w| *w /= norm);
    (lo, weights)
}

/// Binomially averaged bound `sum_h C(h_max, h) (1-p)^h p^(h_max-h) e_h`.
pub fn error_bound(params: &ConvergenceParams) -> Result<f64> {
    params.validate()?;
    let (start, weights) = binomial_window(params.h_max, 1.0 - params.p);
    let mut sweep = EhSweep::starting_at(params, start);
    let mut acc = KahanAcc::default();
    for (i, w) in weights.iter().enumerate() {
        if i > 0 {
            sweep.advance();
        }
        acc.add(w * sweep.value());
    }
    Ok(acc.value())
}

/// `(h_max, bound * sqrt(h_max) / ln(h_max))` for every grid point; bounded
/// values indicate the `O(ln h / sqrt h)` rate.
pub fn asymptotic_rate_check(
    params: &ConvergenceParams,
    h_grid: &[u64],
) -> Result<Vec<(u64, f64)>> {
    if h_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("h_grid must be strictly increasing".into()));
    }
    h_grid
        .iter()
        .map(|&h| {
            if h < 2 || h % params.n as u64 != 0 {
                return Err(Error::InvalidInput(format!(
                    "grid point {h} must be a multiple of n = {} and at least 2",
                    params.n
                )));
            }
            let bound = error_bound(&params.with_h_max(h))?;
            let hf = h as f64;
            Ok((h, bound * hf.sqrt() / hf.ln()))
        })
        .collect()
}
