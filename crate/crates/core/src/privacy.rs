//! Network-DP accountant for the skipping scheme: Gaussian noise calibration,
//! the high-probability visit count, the epsilon bounds of both ring
//! schedules and the Rényi-DP helpers they are built from.
//!
//! All logarithms are natural.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Scheme;
use crate::special::{ln_choose, KahanAcc};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    /// Lipschitz constant of the local losses.
    pub k: f64,
    pub n: usize,
    pub p: f64,
    pub h_max: u64,
    pub scheme: Scheme,
    /// The caller vouches that the learning rate satisfies `zeta <= 2 / beta`
    /// for the smoothness `beta` of the loss. Not checked numerically.
    #[serde(default = "default_true")]
    pub smoothness_attested: bool,
}

fn default_true() -> bool {
    true
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("privacy params", msg));
        check_eps_delta(self.epsilon, self.delta)?;
        if !(self.delta_prime > 0.0 && self.delta_prime <= 1.0) {
            return bad(format!("delta' must be in (0, 1], got {}", self.delta_prime));
        }
        if !(self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(0.0..1.0).contains(&self.p) {
            return bad(format!("p must be in [0, 1), got {}", self.p));
        }
        if self.h_max == 0 || self.h_max % self.n as u64 != 0 {
            return bad(format!(
                "h_max must be a positive multiple of n = {}, got {}",
                self.n, self.h_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBound {
    pub sigma: f64,
    pub h_tilde: u64,
    /// Rényi order used for the randomized ring.
    pub alpha: Option<f64>,
    /// Amplification coefficient of the randomized ring.
    pub a: Option<f64>,
    pub epsilon_skip: f64,
    pub total_delta: f64,
}

fn check_eps_delta(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(
            "privacy",
            format!("epsilon must be in (0, 1], got {epsilon}"),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(
            "privacy",
            format!("delta must be in (0, 1), got {delta}"),
        ));
    }
    Ok(())
}

/// Per-coordinate noise scale `k sqrt(8 ln(1.25/delta)) / epsilon`.
pub fn calibrate_sigma(k: f64, epsilon: f64, delta: f64) -> Result<f64> {
    check_eps_delta(epsilon, delta)?;
    if !(k > 0.0) {
        return Err(Error::domain("calibrate_sigma", format!("k must be positive, got {k}")));
    }
    Ok(k * (8.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Chernoff upper bound on the number of visits any node receives, holding
/// with probability at least `1 - delta_prime`.
pub fn h_tilde(h_max: u64, p: f64, n: usize, delta_prime: f64) -> u64 {
    let x = h_max as f64 * (1.0 - p) / n as f64;
    let bound = x + (3.0 * x * (1.0 / delta_prime).ln()).sqrt();
    (bound.ceil() as u64).max(1)
}

/// `gamma_{r,h} = 4 (1 + r h) (sqrt(1 + r h + h) - sqrt(1 + r h))^2`, evaluated
/// in the rationalized form to avoid cancellation.
pub fn gamma_rh(r: u64, h: u64) -> f64 {
    let base = 1.0 + r as f64 * h as f64;
    let hf = h as f64;
    let denom = (base + hf).sqrt() + base.sqrt();
    4.0 * base * hf * hf / (denom * denom)
}

/// `w_h = sum_{d=h}^{n-1} h C(d,h) p^(d-h) (1-p)^h` for `h = 1..n-1`, with the
/// binomial coefficients in log space.
fn visit_weights(n: usize, p: f64) -> Vec<f64> {
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    (1..n as u64)
        .map(|h| {
            let mut acc = KahanAcc::default();
            for d in h..n as u64 {
                let skips = d - h;
                let ln_skip = if skips == 0 { 0.0 } else { skips as f64 * ln_p };
                let term = (ln_choose(d, h) + ln_skip + h as f64 * ln_q).exp();
                acc.add(h as f64 * term);
            }
            acc.value()
        })
        .collect()
}

/// Amplification coefficient
/// `a = 1/(n-1) sum_{r<h_tilde} sum_{d=1}^{n-1} sum_{h=1}^{d} h C(d,h) p^(d-h) (1-p)^h / gamma_{r,h}`.
///
/// The sum is regrouped as `sum_h w_h sum_r 1/gamma_{r,h}`, which costs
/// `O(n^2 + n h_tilde)` instead of `O(n^2 h_tilde)`.
pub fn a_coefficient(n: usize, p: f64, h_tilde: u64) -> f64 {
    let weights = visit_weights(n, p);
    let mut acc = KahanAcc::default();
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let h = i as u64 + 1;
        let mut inv = KahanAcc::default();
        for r in 0..h_tilde {
            inv.add(1.0 / gamma_rh(r, h));
        }
        acc.add(w * inv.value());
    }
    acc.value() / (n - 1) as f64
}

/// [`a_coefficient`] with every `gamma_{r,h}` replaced by its smallest value
/// `gamma_{0,h}`. Always at least the exact coefficient.
pub fn a_coefficient_lower_gamma(n: usize, p: f64, h_tilde: u64) -> f64 {
    let weights = visit_weights(n, p);
    let acc = weights
        .iter()
        .enumerate()
        .fold(KahanAcc::default(), |mut acc, (i, w)| {
            acc.add(w * h_tilde as f64 / gamma_rh(0, i as u64 + 1));
            acc
        });
    acc.value() / (n - 1) as f64
}

/// Largest Rényi order admitted by the noise calibration.
pub fn alpha_upper_limit(epsilon: f64, delta: f64) -> f64 {
    (1.0 + (16.0 * (1.25 / delta).ln() / (epsilon * epsilon) + 1.0).sqrt()) / 2.0
}

/// Rényi order minimizing the randomized-ring bound, capped at
/// [`alpha_upper_limit`].
pub fn optimal_alpha(epsilon: f64, delta: f64, a: f64) -> f64 {
    let unconstrained =
        (2.0 * (1.0 / delta).ln() * (1.25 / delta).ln()).sqrt() / (epsilon * a.sqrt()) + 1.0;
    unconstrained.min(alpha_upper_limit(epsilon, delta))
}

/// `(alpha, eps_rdp)`-RDP implies `(eps_rdp + ln(1/delta)/(alpha-1), delta)`-DP.
pub fn rdp_to_dp(alpha: f64, eps_rdp: f64, delta: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::domain("rdp_to_dp", format!("alpha must exceed 1, got {alpha}")));
    }
    if !(eps_rdp >= 0.0) {
        return Err(Error::domain("rdp_to_dp", format!("eps_rdp must be nonnegative, got {eps_rdp}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("rdp_to_dp", format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(eps_rdp + (1.0 / delta).ln() / (alpha - 1.0))
}

/// Composition of mechanisms at a common Rényi order adds their epsilons.
pub fn compose_rdp(eps_list: &[f64]) -> f64 {
    debug_assert!(eps_list.iter().all(|e| *e >= 0.0));
    crate::special::kahan_sum(eps_list.iter().copied())
}

fn warn_if_unattested(params: &PrivacyParams) {
    if !params.smoothness_attested {
        warn!("learning rate not attested against the loss smoothness; the NDP bound assumes zeta <= 2/beta");
    }
}

/// Fixed-ring bound
/// `eps sqrt(h_tilde ln(1/delta)) / sqrt(ln(1.25/delta)) + eps^2 h_tilde / (4 ln(1.25/delta))`.
pub fn epsilon_skip_ring(params: &PrivacyParams) -> Result<PrivacyBound> {
    params.validate()?;
    if params.scheme != Scheme::SkipRing {
        return Err(Error::InvalidInput(format!(
            "epsilon_skip_ring needs the skip-ring scheme, got {}",
            params.scheme
        )));
    }
    warn_if_unattested(params);
    let sigma = calibrate_sigma(params.k, params.epsilon, params.delta)?;
    let ht = h_tilde(params.h_max, params.p, params.n, params.delta_prime);
    let l125 = (1.25 / params.delta).ln();
    let l1 = (1.0 / params.delta).ln();
    let eps = params.epsilon;
    let hf = ht as f64;
    let epsilon_skip = eps * (hf * l1).sqrt() / l125.sqrt() + eps * eps * hf / (4.0 * l125);
    Ok(PrivacyBound {
        sigma,
        h_tilde: ht,
        alpha: None,
        a: None,
        epsilon_skip,
        total_delta: params.delta + params.delta_prime,
    })
}

/// Randomized-ring bound `eps^2 a alpha / (2 ln(1.25/delta)) + ln(1/delta)/(alpha-1)`.
pub fn epsilon_skip_rand_ring(params: &PrivacyParams) -> Result<PrivacyBound> {
    params.validate()?;
    if params.scheme != Scheme::SkipRandRing {
        return Err(Error::InvalidInput(format!(
            "epsilon_skip_rand_ring needs the skip-rand-ring scheme, got {}",
            params.scheme
        )));
    }
    warn_if_unattested(params);
    let sigma = calibrate_sigma(params.k, params.epsilon, params.delta)?;
    let ht = h_tilde(params.h_max, params.p, params.n, params.delta_prime);
    let a = a_coefficient(params.n, params.p, ht);
    let alpha = optimal_alpha(params.epsilon, params.delta, a);
    assert!(alpha > 1.0, "Rényi order {alpha} is not above 1 (a = {a})");
    let eps = params.epsilon;
    let eps_rdp = eps * eps * a * alpha / (2.0 * (1.25 / params.delta).ln());
    let epsilon_skip = rdp_to_dp(alpha, eps_rdp, params.delta)?;
    Ok(PrivacyBound {
        sigma,
        h_tilde: ht,
        alpha: Some(alpha),
        a: Some(a),
        epsilon_skip,
        total_delta: params.delta + params.delta_prime,
    })
}

/// Bound for whichever schedule `params.scheme` names.
pub fn privacy_bound(params: &PrivacyParams) -> Result<PrivacyBound> {
    match params.scheme {
        Scheme::SkipRing => epsilon_skip_ring(params),
        Scheme::SkipRandRing => epsilon_skip_rand_ring(params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(scheme: Scheme, p: f64, h_max: u64) -> PrivacyParams {
        PrivacyParams {
            epsilon: 1.0,
            delta: 1e-6,
            delta_prime: 0.1,
            k: 1.0,
            n: 10,
            p,
            h_max,
            scheme,
            smoothness_attested: true,
        }
    }

    #[test]
    fn sigma_calibration() {
        let s = calibrate_sigma(1.0, 1.0, 1e-6).unwrap();
        assert!((s - 10.598).abs() < 1e-3);
        assert_eq!(calibrate_sigma(2.0, 1.0, 1e-6).unwrap(), 2.0 * s);
        assert_eq!(calibrate_sigma(1.0, 0.5, 1e-6).unwrap(), 2.0 * s);
        assert!(calibrate_sigma(1.0, 1.5, 1e-6).is_err());
        assert!(calibrate_sigma(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn visit_bound() {
        assert_eq!(h_tilde(1000, 0.5, 10, 0.1), 69);
        assert_eq!(h_tilde(1000, 0.5, 10, 1.0), 50);
        assert_eq!(h_tilde(1000, 0.3, 10, 1.0), 70);
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_rh(0, 1) - 0.686_291_501_015_239_1).abs() < 1e-15);
        assert!(gamma_rh(0, 2) < gamma_rh(1, 2));
        assert!(gamma_rh(1, 2) < gamma_rh(5, 2));
    }

    #[test]
    fn two_nodes_without_skips_collapse_to_single_term() {
        let ht = 7;
        let want: f64 = (0..ht).map(|r| 1.0 / gamma_rh(r, 1)).sum();
        assert!((a_coefficient(2, 0.0, ht) - want).abs() < 1e-14 * want);
    }

    #[test]
    fn lower_gamma_dominates() {
        for p in [0.0, 1e-4, 0.5, 0.9] {
            let ht = 40;
            assert!(a_coefficient(10, p, ht) <= a_coefficient_lower_gamma(10, p, ht));
        }
    }

    #[test]
    fn rdp_helpers() {
        assert!((rdp_to_dp(2.0, 0.5, 0.01).unwrap() - (0.5 + 100f64.ln())).abs() < 1e-14);
        assert!((rdp_to_dp(11.0, 0.0, (-10f64).exp()).unwrap() - 1.0).abs() < 1e-14);
        assert!(rdp_to_dp(1.0, 0.5, 0.01).is_err());
        assert!((compose_rdp(&[0.1, 0.2, 0.3]) - 0.6).abs() < 1e-15);
        assert_eq!(compose_rdp(&[]), 0.0);
    }

    #[test]
    fn rand_ring_reference_point() {
        let b = epsilon_skip_rand_ring(&params(Scheme::SkipRandRing, 0.5, 1000)).unwrap();
        assert_eq!(b.h_tilde, 69);
        assert!((b.epsilon_skip - 9.082_351_666_861_074).abs() < 1e-9);
        let alpha = b.alpha.unwrap();
        assert!(alpha > 1.0 && alpha <= alpha_upper_limit(1.0, 1e-6));
        assert!((b.total_delta - (1e-6 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn scheme_mismatch_is_rejected() {
        assert!(epsilon_skip_ring(&params(Scheme::SkipRandRing, 0.5, 1000)).is_err());
        assert!(epsilon_skip_rand_ring(&params(Scheme::SkipRing, 0.5, 1000)).is_err());
        assert!(privacy_bound(&params(Scheme::SkipRing, 0.5, 1005)).is_err());
    }
}
