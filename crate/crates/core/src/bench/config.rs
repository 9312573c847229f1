//! Experiment configuration (TOML, unknown keys rejected).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::TrainingSpec;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::features::{FeatureKind, FeatureParams};
use crate::simulate::default_burn_in;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Method names, see [`BenchMethod`].
    pub methods: Vec<String>,
    pub regime: RegimeConfig,
    pub noise: NoiseConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Extra regimes evaluated with the same trained models.
    #[serde(default)]
    pub tests: Vec<TestRegime>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Uniformly random subset per trial.
    #[default]
    Random,
    /// The first `observed` node indices.
    First,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub id: Option<String>,
    pub nodes: usize,
    pub observed: usize,
    pub p: f64,
    #[serde(default)]
    pub directed: bool,
    pub alpha: f64,
    pub rho: f64,
    #[serde(default)]
    pub selection: Selection,
    /// Fixed adjacency file used instead of random graphs.
    pub graph: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Diagonal of the covariance. Exactly one of `sigma2` and `gap`.
    pub sigma2: Option<f64>,
    /// Target gap; the diagonal becomes `gap + beta + osc / 2`.
    pub gap: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub osc: f64,
    #[serde(default)]
    pub intervention: f64,
    /// Fixed covariance file used instead of generated noise.
    pub covariance: Option<PathBuf>,
}

impl NoiseConfig {
    /// Diagonal for a given offset; in `sigma2` mode the gap is kept fixed
    /// when `beta` moves away from the configured value.
    pub fn sigma2_for(&self, beta: f64) -> f64 {
        match (self.sigma2, self.gap) {
            (_, Some(gap)) => gap + beta + self.osc / 2.0,
            (Some(s), None) => s - self.beta + beta,
            (None, None) => unreachable!("validated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub checkpoints: Vec<usize>,
    /// Simulated length; defaults to the largest checkpoint.
    pub length: Option<usize>,
    pub burn_in: Option<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Standardize every dataset with its own statistics.
    #[default]
    PerDataset,
    /// Standardize test data with the statistics fitted on training data.
    Training,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub d: usize,
    pub m: usize,
    pub scaling: ScalingMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let p = FeatureParams::default();
        Self { d: p.d, m: p.m, scaling: ScalingMode::default() }
    }
}

impl FeatureConfig {
    pub fn params(&self) -> FeatureParams {
        FeatureParams { d: self.d, m: self.m }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Edge probability of the training graph; defaults to the regime's.
    pub p: Option<f64>,
    /// Offsets pooled into the training set.
    pub betas: Vec<f64>,
    /// Seed of the training realization; defaults to one derived from
    /// the master seed.
    pub seed: Option<u64>,
    /// Directory with previously saved models to use instead of training.
    pub models: Option<PathBuf>,
    pub network: TrainingSpec,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            p: None,
            betas: (0..=10).map(|k| 5.0 * k as f64).collect(),
            seed: None,
            models: None,
            network: TrainingSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    /// Adds a wall-time column (makes output non-reproducible).
    pub timing: bool,
}

/// Overrides for an additional test regime.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestRegime {
    pub id: Option<String>,
    pub p: Option<f64>,
    pub observed: Option<usize>,
    pub beta: Option<f64>,
    pub osc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchMethod {
    /// Matrix estimator clustered by a Gaussian mixture.
    Gmm(Method),
    /// Feed-forward network on a feature family.
    Ffnn(FeatureKind),
    /// Best single threshold on the NIG scores given the truth.
    Oracle,
}

impl BenchMethod {
    pub fn max_lag(self, p: FeatureParams) -> usize {
        match self {
            BenchMethod::Gmm(m) => m.max_lag(),
            BenchMethod::Ffnn(_) => p.m,
            BenchMethod::Oracle => 3,
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Gmm(m) => write!(f, "{m}"),
            BenchMethod::Ffnn(k) => write!(f, "ffnn_{k}"),
            BenchMethod::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(BenchMethod::Oracle);
        }
        if let Some(kind) = s.strip_prefix("ffnn_") {
            return Ok(BenchMethod::Ffnn(kind.parse()?));
        }
        Ok(BenchMethod::Gmm(s.parse()?))
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parsed_methods(&self) -> Result<Vec<BenchMethod>> {
        self.methods.iter().map(|m| m.parse().map_err(|_| config_err(format!("unknown method {m:?}")))).collect()
    }

    pub fn regime_id(&self) -> String {
        self.regime.id.clone().unwrap_or_else(|| {
            format!(
                "N{}_S{}_p{}{}",
                self.regime.nodes,
                self.regime.observed,
                self.regime.p,
                if self.regime.directed { "_dir" } else { "" }
            )
        })
    }

    pub fn burn_in(&self) -> usize {
        self.data.burn_in.unwrap_or_else(|| default_burn_in(self.regime.rho))
    }

    pub fn length(&self) -> usize {
        self.data.length.unwrap_or_else(|| self.data.checkpoints.last().copied().unwrap_or(0))
    }

    pub fn max_lag(&self) -> Result<usize> {
        let p = self.features.params();
        Ok(self.parsed_methods()?.iter().map(|m| m.max_lag(p)).max().unwrap_or(0))
    }

    pub fn uses_ffnn(&self) -> Result<bool> {
        Ok(self.parsed_methods()?.iter().any(|m| matches!(m, BenchMethod::Ffnn(_))))
    }

    /// Applies a [`TestRegime`] override, keeping everything else.
    pub fn with_test(&self, t: &TestRegime) -> Result<Self> {
        let mut c = self.clone();
        c.tests.clear();
        if let Some(p) = t.p {
            c.regime.p = p;
        }
        if let Some(s) = t.observed {
            c.regime.observed = s;
        }
        if let Some(b) = t.beta {
            if c.noise.gap.is_none() {
                c.noise.sigma2 = Some(c.noise.sigma2_for(b));
            }
            c.noise.beta = b;
        }
        if let Some(o) = t.osc {
            c.noise.osc = o;
        }
        c.regime.id = t.id.clone().or_else(|| Some(c.regime_id_without_override()));
        c.validate()?;
        Ok(c)
    }

    fn regime_id_without_override(&self) -> String {
        let mut c = self.clone();
        c.regime.id = None;
        c.regime_id()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(config_err("methods list is empty"));
        }
        self.parsed_methods()?;
        let r = &self.regime;
        if r.nodes < 2 {
            return Err(config_err("regime.nodes must be at least 2"));
        }
        if r.observed < 2 || r.observed > r.nodes {
            return Err(config_err(format!("regime.observed must lie in [2, {}], got {}", r.nodes, r.observed)));
        }
        if !(0.0..=1.0).contains(&r.p) {
            return Err(config_err("regime.p must lie in [0, 1]"));
        }
        if !(r.rho > 0.0 && r.rho < 1.0) || !(r.alpha > 0.0 && r.alpha <= r.rho) {
            return Err(config_err("need 0 < alpha <= rho < 1"));
        }
        if let Some(g) = &r.graph {
            if !g.exists() {
                return Err(config_err(format!("graph file {} does not exist", g.display())));
            }
        }
        let n = &self.noise;
        match (n.sigma2, n.gap, &n.covariance) {
            (_, _, Some(path)) => {
                if !path.exists() {
                    return Err(config_err(format!("covariance file {} does not exist", path.display())));
                }
            }
            (Some(_), None, None) | (None, Some(_), None) => {}
            _ => return Err(config_err("set exactly one of noise.sigma2 and noise.gap")),
        }
        if n.osc < 0.0 || n.intervention < 0.0 || !n.beta.is_finite() {
            return Err(config_err("noise.osc and noise.intervention must be nonnegative"));
        }
        let d = &self.data;
        if d.checkpoints.is_empty() || d.checkpoints[0] == 0 {
            return Err(config_err("data.checkpoints must be non-empty and positive"));
        }
        if d.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("data.checkpoints must be strictly increasing"));
        }
        if let Some(len) = d.length {
            if len < *d.checkpoints.last().unwrap() {
                return Err(config_err(format!(
                    "checkpoint {} exceeds the simulated length {len}",
                    d.checkpoints.last().unwrap()
                )));
            }
        }
        if d.trials == 0 {
            return Err(config_err("data.trials must be at least 1"));
        }
        self.features.params().validate().map_err(|e| config_err(e.to_string()))?;
        let t = &self.training;
        if let Some(p) = t.p {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err("training.p must lie in [0, 1]"));
            }
        }
        if self.uses_ffnn()? && t.models.is_none() && t.betas.is_empty() {
            return Err(config_err("training.betas is empty"));
        }
        if let Some(dir) = &t.models {
            if !dir.is_dir() {
                return Err(config_err(format!("model directory {} does not exist", dir.display())));
            }
        }
        t.network.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
methods = ["granger", "nig", "ffnn_k", "oracle"]

[regime]
nodes = 10
observed = 8
p = 0.5
alpha = 0.5
rho = 0.5

[noise]
gap = 1.0
beta = 2.0
osc = 0.01

[data]
checkpoints = [100, 1000]
trials = 2
seed = 7
"#;

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.features, FeatureConfig::default());
        assert_eq!(c.length(), 1000);
        assert_eq!(c.burn_in(), 20);
        assert_eq!(c.max_lag().unwrap(), 4);
        assert_eq!(c.regime_id(), "N10_S8_p0.5");
        assert!((c.noise.sigma2_for(2.0) - 3.005).abs() < 1e-15);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SAMPLE.replace(r#"["granger", "nig", "ffnn_k", "oracle"]"#, "[]"),
            SAMPLE.replace("\"granger\"", "\"lasso\""),
            SAMPLE.replace("[100, 1000]", "[1000, 100]"),
            SAMPLE.replace("trials = 2", "trials = 0"),
            SAMPLE.replace("seed = 7", "seed = 7\nlength = 500"),
            SAMPLE.replace("seed = 7", "seed = 7\nbogus = 1"),
            SAMPLE.replace("gap = 1.0", "gap = 1.0\nsigma2 = 2.0"),
            SAMPLE.replace("observed = 8", "observed = 11"),
            SAMPLE.replace("alpha = 0.5", "alpha = 0.7"),
        ];
        for b in bad {
            assert!(matches!(ExperimentConfig::from_toml(&b), Err(Error::Config(_))), "{b}");
        }
    }

    #[test]
    fn method_names() {
        for name in ["granger", "one_lag", "nig", "precision", "ffnn_f", "ffnn_t", "ffnn_k", "oracle"] {
            let m: BenchMethod = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
    }

    #[test]
    fn test_overrides() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let t = c.with_test(&TestRegime { p: Some(0.2), beta: Some(5.0), ..Default::default() }).unwrap();
        assert_eq!(t.regime.p, 0.2);
        assert_eq!(t.noise.beta, 5.0);
        assert_eq!(t.regime_id(), "N10_S8_p0.2");
    }
}
