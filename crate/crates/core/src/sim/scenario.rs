//! Declarative scenario descriptions and their TOML file format.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::model::WeightMatrix;
use crate::noise::NoiseFamily;
use crate::ram::RamConfig;
use crate::shrinkage::PriorConfig;
use crate::signals::{TestSignal, DEFAULT_TARGET_SD};
use crate::wavelet::{TransformPlan, WaveletFilter};

/// Chain length used when running at full scale.
pub const FULL_CHAIN_LENGTH: usize = 50_000;
/// Replications used at full scale for the Gamma and correlated studies.
pub const FULL_REPLICATIONS_GAMMA: usize = 400;
pub const FULL_REPLICATIONS_CORRELATED: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// No shrinkage: project the raw coefficients.
    Identity,
    UniversalThreshold,
    CorrelatedBayes,
    GammaBayes,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Identity,
        EstimatorKind::UniversalThreshold,
        EstimatorKind::CorrelatedBayes,
        EstimatorKind::GammaBayes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Identity => "identity",
            EstimatorKind::UniversalThreshold => "universal-threshold",
            EstimatorKind::CorrelatedBayes => "correlated-bayes",
            EstimatorKind::GammaBayes => "gamma-bayes",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown estimator `{s}` (expected one of: identity, universal-threshold, \
                     correlated-bayes, gamma-bayes)"
                ))
            })
    }
}

/// Error process of a scenario. `none` gives noiseless panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseConfig {
    None,
    Gaussian,
    Gamma {
        #[serde(default = "default_gamma_shape")]
        shape: f64,
    },
    Ar1 {
        phi: f64,
    },
    Arfima {
        d: f64,
    },
}

fn default_gamma_shape() -> f64 {
    crate::noise::DEFAULT_GAMMA_SHAPE
}

impl NoiseConfig {
    pub fn family(&self) -> Option<NoiseFamily> {
        match *self {
            NoiseConfig::None => None,
            NoiseConfig::Gaussian => Some(NoiseFamily::Gaussian),
            NoiseConfig::Gamma { shape } => Some(NoiseFamily::Gamma { shape }),
            NoiseConfig::Ar1 { phi } => Some(NoiseFamily::Ar1 { phi }),
            NoiseConfig::Arfima { d } => Some(NoiseFamily::Arfima { d }),
        }
    }

    pub fn name(&self) -> &'static str {
        self.family().map_or("none", |f| f.name())
    }
}

/// How weight columns are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightRule {
    /// iid symmetric Dirichlet columns.
    Dirichlet {
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
}

fn default_concentration() -> f64 {
    1.0
}

impl Default for WeightRule {
    fn default() -> Self {
        WeightRule::Dirichlet {
            concentration: default_concentration(),
        }
    }
}

impl WeightRule {
    fn validate(&self) -> Result<()> {
        match *self {
            WeightRule::Dirichlet { concentration } if !(concentration > 0.0 && concentration.is_finite()) => Err(
                Error::invalid(format!("Dirichlet concentration must be positive, got {concentration}")),
            ),
            _ => Ok(()),
        }
    }

    /// Draws an `L x N` weight matrix.
    pub fn sample(&self, components: usize, samples: usize, rng: &mut impl Rng) -> Result<WeightMatrix> {
        let WeightRule::Dirichlet { concentration } = *self;
        let mut values = nalgebra::DMatrix::zeros(components, samples);
        if components == 1 {
            values.fill(1.0);
            return WeightMatrix::new(values);
        }
        let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        for mut col in values.column_iter_mut() {
            loop {
                for v in col.iter_mut() {
                    *v = rng.sample(gamma);
                }
                let total = col.sum();
                if total > 0.0 {
                    col /= total;
                    break;
                }
            }
        }
        WeightMatrix::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletConfig {
    pub filter: WaveletFilter,
    pub primary_level: u32,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            filter: WaveletFilter::default(),
            primary_level: 3,
        }
    }
}

/// Sampler settings of the Gamma route. `initial_scale` is relative: the
/// chain starts from `S₁ = initial_scale · σ / √M · I` with `σ` the noise
/// standard deviation and `M` the coefficient count. The chain seed is
/// derived per column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub iterations: usize,
    pub target_acceptance: f64,
    pub adaptation_exponent: f64,
    pub adapt: bool,
    pub initial_scale: f64,
    pub burn_in: f64,
    pub thin: usize,
    pub spike_scale_fraction: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let ram = RamConfig::default();
        Self {
            iterations: ram.iterations,
            target_acceptance: ram.target_acceptance,
            adaptation_exponent: ram.adaptation_exponent,
            adapt: ram.adapt,
            initial_scale: ram.initial_scale,
            burn_in: ram.burn_in,
            thin: ram.thin,
            spike_scale_fraction: crate::gamma::DEFAULT_SPIKE_SCALE_FRACTION,
        }
    }
}

impl SamplerSettings {
    /// Chain configuration with an absolute initial scale.
    pub fn ram_config(&self, noise_sd: f64, dim: usize, seed: u64) -> RamConfig {
        RamConfig {
            iterations: self.iterations,
            target_acceptance: self.target_acceptance,
            adaptation_exponent: self.adaptation_exponent,
            adapt: self.adapt,
            initial_scale: self.initial_scale * noise_sd / (dim.max(1) as f64).sqrt(),
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.ram_config(1.0, 1, 0).validate()?;
        if !(self.spike_scale_fraction > 0.0 && self.spike_scale_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "spike scale fraction must lie in (0, 1), got {}",
                self.spike_scale_fraction
            )));
        }
        Ok(())
    }
}

fn default_component_sd() -> f64 {
    DEFAULT_TARGET_SD
}

fn default_replications() -> usize {
    25
}

/// One simulation study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub components: Vec<TestSignal>,
    /// Grid points per curve.
    pub m: usize,
    /// Number of aggregated curves.
    pub n: usize,
    pub snr: f64,
    pub noise: NoiseConfig,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub wavelet: WaveletConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: WeightRule,
    /// Standard deviation each component is rescaled to.
    #[serde(default = "default_component_sd")]
    pub component_sd: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("scenario `{}`: {msg}", self.id)));
        if self.id.trim().is_empty() {
            return Err(Error::invalid("scenario id must not be empty"));
        }
        if self.components.is_empty() {
            return fail("needs at least one component".into());
        }
        if self.replications == 0 {
            return fail("needs at least one replication".into());
        }
        if self.n < self.components.len() {
            return fail(format!(
                "n = {} curves cannot identify L = {} components",
                self.n,
                self.components.len()
            ));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return fail(format!("snr must be positive, got {}", self.snr));
        }
        if !(self.component_sd > 0.0 && self.component_sd.is_finite()) {
            return fail(format!("component_sd must be positive, got {}", self.component_sd));
        }
        if self.estimator == EstimatorKind::GammaBayes && self.noise == NoiseConfig::None {
            return fail("gamma-bayes needs a noise model; use identity for noiseless runs".into());
        }
        if let Some(family) = self.noise.family() {
            family
                .with_marginal_sd(1.0)
                .map_err(|e| Error::invalid(format!("scenario `{}`: {e}", self.id)))?;
        }
        self.plan()
            .map_err(|e| Error::invalid(format!("scenario `{}`: {e}", self.id)))?;
        self.prior.validate()?;
        self.sampler.validate()?;
        self.weights.validate()?;
        Ok(())
    }

    pub fn plan(&self) -> Result<TransformPlan> {
        TransformPlan::new(self.m, self.wavelet.primary_level, self.wavelet.filter)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn canonical_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        sha256_hex(&json)
    }

    /// Lifts the desk-scale defaults to the full study sizes.
    pub fn at_full_scale(&self) -> ScenarioSpec {
        let mut spec = self.clone();
        match spec.estimator {
            EstimatorKind::GammaBayes => {
                spec.sampler.iterations = spec.sampler.iterations.max(FULL_CHAIN_LENGTH);
                spec.replications = spec.replications.max(FULL_REPLICATIONS_GAMMA);
            }
            _ => spec.replications = spec.replications.max(FULL_REPLICATIONS_CORRELATED),
        }
        spec
    }

    /// True when the two specs generate identical data for every replication.
    pub fn same_data(&self, other: &ScenarioSpec) -> bool {
        self.components == other.components
            && self.m == other.m
            && self.n == other.n
            && self.snr == other.snr
            && self.noise == other.noise
            && self.replications == other.replications
            && self.seed == other.seed
            && self.weights == other.weights
            && self.component_sd == other.component_sd
    }
}

/// A paired comparison between two scenarios of the same file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub left: String,
    pub right: String,
}

/// Top-level scenario document: `[[scenario]]` tables and optional
/// `[[comparison]]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(rename = "comparison", default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<ComparisonSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
            field: e
                .span()
                .map_or_else(|| "scenario file".to_string(), |s| locate(text, s.start)),
            message: e.message().to_string(),
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::invalid("scenario file contains no [[scenario]] tables"));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate scenario id `{}`", s.id)));
            }
        }
        for c in &self.comparisons {
            let left = self.get(&c.left)?;
            let right = self.get(&c.right)?;
            if !left.same_data(right) {
                return Err(Error::invalid(format!(
                    "comparison `{}` vs `{}`: scenarios differ in data-generating settings",
                    c.left, c.right
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::invalid(format!("no scenario with id `{id}`")))
    }
}

/// `line L, column C` of a byte offset.
fn locate(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("line {line}, column {col}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[scenario]]
id = "g"
components = ["bumps", "doppler"]
m = 32
n = 50
snr = 3
estimator = "gamma-bayes"
noise = { family = "gamma", shape = 2.0 }
prior = { p = 0.75, tau = 5.0 }
"#;

    #[test]
    fn parses_with_defaults() {
        let file = ScenarioFile::parse(MINIMAL).unwrap();
        let s = &file.scenarios[0];
        assert_eq!(s.components, vec![TestSignal::Bumps, TestSignal::Doppler]);
        assert_eq!(s.estimator, EstimatorKind::GammaBayes);
        assert_eq!(s.noise, NoiseConfig::Gamma { shape: 2.0 });
        assert_eq!(s.prior.p, Some(0.75));
        assert_eq!(s.replications, 25);
        assert_eq!(s.sampler.iterations, 5000);
        assert_eq!(s.wavelet.filter, WaveletFilter::Daubechies(8));
        assert_eq!(s.component_sd, 7.0);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = MINIMAL.replace("snr = 3", "snr = 3\nreplicatons = 4");
        let err = ScenarioFile::parse(&typo).unwrap_err().to_string();
        assert!(err.contains("replicatons"), "{err}");
        let nested = MINIMAL.replace("tau = 5.0", "tua = 5.0");
        assert!(ScenarioFile::parse(&nested).unwrap_err().to_string().contains("tua"));
        let noise = MINIMAL.replace("shape = 2.0", "shape = 2.0, phi = 0.1");
        assert!(ScenarioFile::parse(&noise).is_err());
    }

    #[test]
    fn bad_values_name_the_field() {
        let err = ScenarioFile::parse(&MINIMAL.replace("\"doppler\"", "\"spikes\""))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line"), "{err}");
        let err = ScenarioFile::parse(&MINIMAL.replace("m = 32", "m = 30"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("power of two"), "{err}");
        assert!(ScenarioFile::parse(&MINIMAL.replace("n = 50", "n = 1")).is_err());
        assert!(ScenarioFile::parse(&MINIMAL.replace("snr = 3", "snr = 0")).is_err());
    }

    #[test]
    fn hash_is_content_addressed() {
        let a = ScenarioFile::parse(MINIMAL).unwrap().scenarios[0].clone();
        let mut b = a.clone();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        assert_eq!(a.canonical_hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.canonical_hash(), b.canonical_hash());
        let reparsed = ScenarioFile::parse(&MINIMAL.replace("n = 50", "n    =   50")).unwrap();
        assert_eq!(reparsed.scenarios[0].canonical_hash(), a.canonical_hash());
    }

    #[test]
    fn comparisons_require_matching_data() {
        let mut text = MINIMAL.to_string();
        text.push_str(
            &MINIMAL
                .replace("id = \"g\"", "id = \"h\"")
                .replace("gamma-bayes", "identity"),
        );
        text.push_str("[[comparison]]\nleft = \"g\"\nright = \"h\"\n");
        assert!(ScenarioFile::parse(&text).is_ok());
        let bad = text.replacen("snr = 3", "snr = 7", 1);
        assert!(ScenarioFile::parse(&bad).is_err());
    }

    #[test]
    fn dirichlet_columns_are_on_the_simplex() {
        let mut rng = crate::seed::rng(3);
        let w = WeightRule::default().sample(4, 200, &mut rng).unwrap();
        assert_eq!(w.values().shape(), (4, 200));
        let mean = w.mean_column();
        for m in mean {
            assert!((m - 0.25).abs() < 0.05);
        }
        let single = WeightRule::default().sample(1, 5, &mut rng).unwrap();
        assert!(single.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn full_scale_lifts_sizes() {
        let s = ScenarioFile::parse(MINIMAL).unwrap().scenarios[0].at_full_scale();
        assert_eq!(s.sampler.iterations, FULL_CHAIN_LENGTH);
        assert_eq!(s.replications, FULL_REPLICATIONS_GAMMA);
    }
}
