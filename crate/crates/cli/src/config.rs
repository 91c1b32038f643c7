//! Run configuration read from a TOML file.
//!
//! Every field has a default taken from the reference experiment (ten nodes,
//! `epsilon = 1`, `delta = 1e-6`, `delta' = 0.1`, `d_W = 10`, `k = 1`,
//! `zeta = 0.03`, `chi = 0.01`), so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skipring::data::{LoadOptions, Threshold};
use skipring::latency::{LatencyKind, LatencyModel, SkipPolicy, Timeout};
use skipring::privacy::{calibrate_sigma, PrivacyParams};
use skipring::schedule::Scheme;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub n: usize,
    pub h_max: u64,
    /// Communication latency per hop in seconds.
    pub chi: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub latency: LatencyConfig,
    pub policy: PolicyConfig,
    pub privacy: PrivacyConfig,
    pub sgd: SgdConfig,
    pub data: DataConfig,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scheme: Scheme::SkipRing,
            n: 10,
            h_max: 1000,
            chi: 0.01,
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
            latency: LatencyConfig::default(),
            policy: PolicyConfig::default(),
            privacy: PrivacyConfig::default(),
            sgd: SgdConfig::default(),
            data: DataConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub kind: LatencyKind,
    pub param1: f64,
    #[serde(default)]
    pub param2: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            kind: LatencyKind::Exponential,
            param1: 1.0,
            param2: 0.0,
        }
    }
}

/// Exactly one of `p` and `t_skip`; the other is derived from the latency
/// model. `t_skip = inf` means never skip. Without a `[policy]` table the
/// default is `p = 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub p: Option<f64>,
    pub t_skip: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            p: Some(0.5),
            t_skip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub k: f64,
    /// The user vouches that `zeta <= 2 / beta` for the loss smoothness `beta`.
    pub smoothness_attested: bool,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            epsilon: 1.0,
            delta: 1e-6,
            delta_prime: 0.1,
            k: 1.0,
            smoothness_attested: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub zeta: f64,
    pub d_w: f64,
    pub batch_size: usize,
    /// Overrides the calibrated noise scale; `0` trains without noise.
    pub sigma: Option<f64>,
    /// Hops between test-error evaluations; defaults to `n`.
    pub eval_every: Option<usize>,
    /// Number of latency buckets in the aggregate training CSV.
    pub latency_buckets: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            zeta: 0.03,
            d_w: 10.0,
            batch_size: 100,
            sigma: None,
            eval_every: None,
            latency_buckets: 100,
        }
    }
}

/// Label binarization rule: `"median"`, `"none"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSpec {
    Value(f64),
    Word(ThresholdWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdWord {
    Median,
    None,
}

impl From<ThresholdSpec> for Threshold {
    fn from(spec: ThresholdSpec) -> Self {
        match spec {
            ThresholdSpec::Value(v) => Threshold::Value(v),
            ThresholdSpec::Word(ThresholdWord::Median) => Threshold::Median,
            ThresholdSpec::Word(ThresholdWord::None) => Threshold::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: PathBuf,
    pub label_column: String,
    pub threshold: ThresholdSpec,
    pub delimiter: char,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("data/housing.csv"),
            label_column: "MEDV".into(),
            threshold: ThresholdSpec::Word(ThresholdWord::Median),
            delimiter: ',',
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// Hop counts at which the bounds are evaluated; each a multiple of `n`.
    pub h_grid: Vec<u64>,
    /// Model dimension used by the convergence bound.
    pub d: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            h_grid: vec![1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000],
            d: 8,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field-level checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("need at least 2 nodes, got {}", self.n)));
        }
        if self.h_max == 0 || self.h_max % self.n as u64 != 0 {
            return Err(invalid("h_max", format!("must be a positive multiple of n = {}", self.n)));
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(invalid("chi", "must be a nonnegative number"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        self.latency_model()?;
        match (self.policy.p, self.policy.t_skip) {
            (Some(_), Some(_)) => return Err(invalid("policy", "give exactly one of p and t_skip, not both")),
            (None, None) => return Err(invalid("policy", "give one of p and t_skip")),
            _ => {}
        }
        self.skip_policy()?;
        self.privacy_params(self.h_max)?;
        if !(self.sgd.zeta > 0.0) {
            return Err(invalid("sgd.zeta", "must be positive"));
        }
        if !(self.sgd.d_w > 0.0 && self.sgd.d_w.is_finite()) {
            return Err(invalid("sgd.d_w", "must be positive"));
        }
        if self.sgd.batch_size == 0 {
            return Err(invalid("sgd.batch_size", "must be positive"));
        }
        if let Some(s) = self.sgd.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("sgd.sigma", "must be a nonnegative number"));
            }
        }
        if self.sgd.eval_every == Some(0) {
            return Err(invalid("sgd.eval_every", "must be positive"));
        }
        if self.sgd.latency_buckets == 0 {
            return Err(invalid("sgd.latency_buckets", "must be positive"));
        }
        if !self.data.delimiter.is_ascii() {
            return Err(invalid("data.delimiter", "must be a single ASCII character"));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction <= 1.0) {
            return Err(invalid("data.train_fraction", "must be in (0, 1]"));
        }
        if self.bounds.d == 0 {
            return Err(invalid("bounds.d", "must be positive"));
        }
        if let Some(h) = self.bounds.h_grid.iter().find(|h| **h == 0 || **h % self.n as u64 != 0) {
            return Err(invalid("bounds.h_grid", format!("{h} is not a positive multiple of n = {}", self.n)));
        }
        Ok(())
    }

    pub fn latency_model(&self) -> Result<LatencyModel> {
        LatencyModel::from_params(self.latency.kind, self.latency.param1, self.latency.param2)
            .map_err(|e| invalid("latency", e))
    }

    pub fn skip_policy(&self) -> Result<SkipPolicy> {
        let model = self.latency_model()?;
        match (self.policy.p, self.policy.t_skip) {
            (Some(p), None) => {
                if !(0.0..1.0).contains(&p) {
                    return Err(invalid("policy.p", format!("must be in [0, 1), got {p}")));
                }
                SkipPolicy::from_p(&model, p, self.chi).map_err(|e| invalid("policy.p", e))
            }
            (None, Some(t)) => {
                let timeout = if t.is_infinite() { Timeout::Infinite } else { Timeout::Finite(t) };
                let policy = SkipPolicy::from_t_skip(&model, timeout, self.chi)
                    .map_err(|e| invalid("policy.t_skip", e))?;
                if policy.p() >= 1.0 {
                    return Err(invalid("policy.t_skip", "every hop would be skipped"));
                }
                Ok(policy)
            }
            _ => Err(invalid("policy", "give exactly one of p and t_skip")),
        }
    }

    pub fn privacy_params(&self, h_max: u64) -> Result<PrivacyParams> {
        let policy = self.skip_policy()?;
        let params = PrivacyParams {
            epsilon: self.privacy.epsilon,
            delta: self.privacy.delta,
            delta_prime: self.privacy.delta_prime,
            k: self.privacy.k,
            n: self.n,
            p: policy.p(),
            h_max,
            scheme: self.scheme,
            smoothness_attested: self.privacy.smoothness_attested,
        };
        params.validate().map_err(|e| invalid("privacy", e))?;
        Ok(params)
    }

    /// Noise scale used for training and the convergence bound.
    pub fn sigma(&self) -> Result<f64> {
        match self.sgd.sigma {
            Some(s) => Ok(s),
            None => calibrate_sigma(self.privacy.k, self.privacy.epsilon, self.privacy.delta)
                .map_err(|e| invalid("privacy", e)),
        }
    }

    pub fn eval_every(&self) -> usize {
        self.sgd.eval_every.unwrap_or(self.n)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            label_column: self.data.label_column.clone(),
            threshold: self.data.threshold.into(),
            delimiter: self.data.delimiter as u8,
        }
    }

    /// Single-line JSON rendering for CSV provenance comments.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Sets a numeric field by name. Used by parameter sweeps.
    pub fn set_axis(&mut self, axis: Axis, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<u64> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(invalid(axis.name(), format!("{v} is not a whole number")))
            }
        };
        match axis {
            Axis::N => self.n = as_count(value)? as usize,
            Axis::HMax => self.h_max = as_count(value)?,
            Axis::Chi => self.chi = value,
            Axis::P => {
                self.policy = PolicyConfig {
                    p: Some(value),
                    t_skip: None,
                }
            }
            Axis::TSkip => {
                self.policy = PolicyConfig {
                    p: None,
                    t_skip: Some(value),
                }
            }
            Axis::Epsilon => self.privacy.epsilon = value,
            Axis::Delta => self.privacy.delta = value,
            Axis::DeltaPrime => self.privacy.delta_prime = value,
            Axis::K => self.privacy.k = value,
            Axis::Zeta => self.sgd.zeta = value,
            Axis::DW => self.sgd.d_w = value,
            Axis::BatchSize => self.sgd.batch_size = as_count(value)? as usize,
            Axis::Sigma => self.sgd.sigma = Some(value),
            Axis::LatencyParam1 => self.latency.param1 = value,
            Axis::LatencyParam2 => self.latency.param2 = value,
        }
        Ok(())
    }
}

/// Numeric configuration fields a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    N,
    HMax,
    Chi,
    P,
    TSkip,
    Epsilon,
    Delta,
    DeltaPrime,
    K,
    Zeta,
    DW,
    BatchSize,
    Sigma,
    LatencyParam1,
    LatencyParam2,
}

const AXES: [(Axis, &str); 15] = [
    (Axis::N, "n"),
    (Axis::HMax, "h_max"),
    (Axis::Chi, "chi"),
    (Axis::P, "p"),
    (Axis::TSkip, "t_skip"),
    (Axis::Epsilon, "epsilon"),
    (Axis::Delta, "delta"),
    (Axis::DeltaPrime, "delta_prime"),
    (Axis::K, "k"),
    (Axis::Zeta, "zeta"),
    (Axis::DW, "d_w"),
    (Axis::BatchSize, "batch_size"),
    (Axis::Sigma, "sigma"),
    (Axis::LatencyParam1, "latency.param1"),
    (Axis::LatencyParam2, "latency.param2"),
];

impl Axis {
    pub fn name(self) -> &'static str {
        AXES.iter().find(|(a, _)| *a == self).map(|(_, s)| *s).expect("every axis is named")
    }

    pub fn all_names() -> Vec<&'static str> {
        AXES.iter().map(|(_, s)| *s).collect()
    }
}

impl std::str::FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        AXES.iter()
            .find(|(_, name)| *name == s)
            .map(|(a, _)| *a)
            .ok_or_else(|| {
                CliError::Usage(format!("unknown sweep axis '{s}'; expected one of {}", Axis::all_names().join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!((cfg.sigma().unwrap() - 10.5976).abs() < 1e-4);
    }

    #[test]
    fn policy_needs_exactly_one_field() {
        let both = "[policy]\np = 0.5\nt_skip = 1.0\n";
        assert!(RunConfig::from_toml(both).unwrap_err().to_string().contains("policy"));
        let none = "[policy]\n";
        assert!(RunConfig::from_toml(none).is_err());
        let inf = "[policy]\nt_skip = inf\n";
        let cfg = RunConfig::from_toml(inf).unwrap();
        assert_eq!(cfg.skip_policy().unwrap().p(), 0.0);
    }

    #[test]
    fn field_level_messages() {
        let err = RunConfig::from_toml("n = 10\nh_max = 1005\n").unwrap_err();
        assert!(err.to_string().contains("h_max"), "{err}");
        let err = RunConfig::from_toml("[privacy]\nepsilon = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("privacy"), "{err}");
        let err = RunConfig::from_toml("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn thresholds_parse() {
        let cfg = RunConfig::from_toml("[data]\nthreshold = 15.0\n").unwrap();
        assert_eq!(Threshold::from(cfg.data.threshold), Threshold::Value(15.0));
        let cfg = RunConfig::from_toml("[data]\nthreshold = \"none\"\n").unwrap();
        assert_eq!(Threshold::from(cfg.data.threshold), Threshold::None);
    }

    #[test]
    fn axes_round_trip() {
        for name in Axis::all_names() {
            let axis: Axis = name.parse().unwrap();
            assert_eq!(axis.name(), name);
        }
        assert!("speed".parse::<Axis>().is_err());
        let mut cfg = RunConfig::default();
        cfg.set_axis(Axis::P, 0.7).unwrap();
        assert_eq!(cfg.policy.p, Some(0.7));
        assert!(cfg.set_axis(Axis::N, 2.5).is_err());
    }
}
