//! Replicated scenario execution and paired method comparison.

use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{aggregate_panel, ComponentSet};
use crate::noise::{snr_calibrate, GammaNoiseSpec, NoiseSpec, DEFAULT_GAMMA_SHAPE};
use crate::seed::{derive_seed, rng, stream_seed, Stream};
use crate::signals::{dj_function, TestSignalSpec};
use crate::sim::pipeline::{calibrate, Estimator, GammaBayes};
use crate::sim::scenario::{EstimatorKind, ScenarioSpec};
use crate::stats;
use crate::wavelet::TransformPlan;

/// Label of the row averaging the component MSEs.
pub const AGGREGATE: &str = "aggregate";
/// Label of the row scoring the estimated mean aggregated curve.
pub const MEAN_CURVE: &str = "mean_curve";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub full_scale: bool,
}

/// `(1/M) Σ (estimate − truth)²`.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::invalid("cannot score empty curves"));
    }
    let total: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / estimate.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub chains: usize,
    pub mean_acceptance: f64,
    pub min_acceptance: f64,
    pub max_acceptance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    /// Per-component MSE; empty when the replication failed.
    pub component_mse: Vec<f64>,
    /// Mean of the component MSEs.
    pub aggregate_mse: f64,
    /// MSE of the estimated mean aggregated curve `α̂ȳ`.
    pub mean_curve_mse: f64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub chains: Option<ChainSummary>,
    pub error: Option<String>,
}

impl ReplicationResult {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    fn failed(index: usize, seed: u64, wall_time: Duration, err: &Error) -> Self {
        Self {
            index,
            seed,
            component_mse: Vec::new(),
            aggregate_mse: f64::NAN,
            mean_curve_mse: f64::NAN,
            wall_time,
            chains: None,
            error: Some(err.to_string()),
        }
    }

    /// MSE for a summary label.
    pub fn score(&self, row: usize, components: usize) -> f64 {
        if row < components {
            self.component_mse[row]
        } else if row == components {
            self.aggregate_mse
        } else {
            self.mean_curve_mse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub component: String,
    pub amse: f64,
    pub sd: f64,
    /// Successful replications the mean is taken over.
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    /// The spec actually run (after full-scale lifting).
    pub spec: ScenarioSpec,
    pub hash: String,
    pub replications: Vec<ReplicationResult>,
    pub summary: Vec<SummaryRow>,
}

impl ScenarioReport {
    pub fn row(&self, label: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.component == label)
    }

    pub fn failures(&self) -> usize {
        self.replications.iter().filter(|r| !r.succeeded()).count()
    }

    /// Summary labels in row order: components, then the two aggregate rows.
    pub fn labels(&self) -> Vec<String> {
        summary_labels(&self.spec)
    }
}

fn summary_labels(spec: &ScenarioSpec) -> Vec<String> {
    let mut labels: Vec<String> = spec.components.iter().map(|c| c.name().to_string()).collect();
    // disambiguate repeated components
    for i in 0..labels.len() {
        if spec
            .components
            .iter()
            .filter(|c| c.name() == spec.components[i].name())
            .count()
            > 1
        {
            labels[i] = format!("{}_{}", labels[i], i + 1);
        }
    }
    labels.push(AGGREGATE.into());
    labels.push(MEAN_CURVE.into());
    labels
}

/// Everything shared by the replications of one scenario.
struct Setup {
    spec: ScenarioSpec,
    plan: TransformPlan,
    truth: ComponentSet,
}

impl Setup {
    fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let plan = spec.plan()?;
        let cols = spec
            .components
            .iter()
            .map(|&s| dj_function(&TestSignalSpec::new(s, spec.m, Some(spec.component_sd))))
            .collect::<Result<Vec<_>>>()?;
        let truth = ComponentSet::from_columns(&cols)?;
        if spec.estimator == EstimatorKind::GammaBayes {
            if let Some(family) = spec.noise.family().filter(|f| f.name() != "gamma") {
                warn!(
                    "scenario `{}`: gamma-bayes on {} noise is misspecified; the likelihood uses a \
                     moment-matched Gamma",
                    spec.id,
                    family.name()
                );
            }
        }
        Ok(Self { spec, plan, truth })
    }

    fn estimator(&self, noise: Option<&NoiseSpec>, seed: u64) -> Result<Estimator> {
        Ok(match self.spec.estimator {
            EstimatorKind::Identity => Estimator::Identity,
            EstimatorKind::UniversalThreshold => Estimator::UniversalThreshold,
            EstimatorKind::CorrelatedBayes => Estimator::CorrelatedBayes(self.spec.prior),
            EstimatorKind::GammaBayes => {
                let noise = match noise {
                    Some(NoiseSpec::Gamma(g)) => *g,
                    Some(other) => {
                        GammaNoiseSpec::new(DEFAULT_GAMMA_SHAPE, DEFAULT_GAMMA_SHAPE.sqrt() / other.marginal_sd())?
                    }
                    None => return Err(Error::invalid("gamma-bayes needs a noise model")),
                };
                Estimator::GammaBayes(GammaBayes {
                    noise,
                    prior: self.spec.prior,
                    sampler: self.spec.sampler,
                    seed,
                })
            }
        })
    }

    fn replicate(&self, index: usize) -> ReplicationResult {
        let start = Instant::now();
        let seed = derive_seed(self.spec.seed, index as u64);
        match self.replicate_inner(seed) {
            Ok(mut r) => {
                r.index = index;
                r.wall_time = start.elapsed();
                r
            }
            Err(e) => {
                warn!("scenario `{}` replication {}: {e}", self.spec.id, index + 1);
                ReplicationResult::failed(index, seed, start.elapsed(), &e)
            }
        }
    }

    fn replicate_inner(&self, seed: u64) -> Result<ReplicationResult> {
        let spec = &self.spec;
        let l = spec.components.len();
        let weights = spec
            .weights
            .sample(l, spec.n, &mut rng(stream_seed(seed, Stream::Weights)))?;
        let mean_weights = weights.mean_column();
        let mean_curve = self.truth.combine(&mean_weights);
        let noise = spec
            .noise
            .family()
            .map(|family| snr_calibrate(&family, &mean_curve, spec.snr))
            .transpose()?;
        let eps = match &noise {
            Some(n) => n.generate(spec.m, spec.n, stream_seed(seed, Stream::Noise))?,
            None => DMatrix::zeros(spec.m, spec.n),
        };
        let panel = aggregate_panel(&self.truth, &weights, &eps)?;
        let estimator = self.estimator(noise.as_ref(), stream_seed(seed, Stream::Sampler))?;
        let fit = calibrate(panel.values(), &weights, &self.plan, &estimator)?;

        let component_mse = (0..l)
            .map(|c| mse(&fit.components.column(c), &self.truth.column(c)))
            .collect::<Result<Vec<_>>>()?;
        let aggregate_mse = component_mse.iter().sum::<f64>() / l as f64;
        let mean_curve_mse = mse(&fit.components.combine(&mean_weights), &mean_curve)?;
        let chains = (!fit.chains.is_empty()).then(|| {
            let rates: Vec<f64> = fit.chains.iter().map(|c| c.acceptance_rate).collect();
            ChainSummary {
                chains: rates.len(),
                mean_acceptance: stats::mean(&rates),
                min_acceptance: rates.iter().copied().fold(f64::INFINITY, f64::min),
                max_acceptance: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        });
        Ok(ReplicationResult {
            index: 0,
            seed,
            component_mse,
            aggregate_mse,
            mean_curve_mse,
            wall_time: Duration::ZERO,
            chains,
            error: None,
        })
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("thread count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ResourceLimit(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every replication of `spec` and summarizes the MSEs.
pub fn run_scenario(spec: &ScenarioSpec, options: &RunOptions) -> Result<ScenarioReport> {
    let spec = if options.full_scale {
        spec.at_full_scale()
    } else {
        spec.clone()
    };
    let setup = Setup::new(spec)?;
    info!(
        "scenario `{}`: {} replications, {} estimator",
        setup.spec.id, setup.spec.replications, setup.spec.estimator
    );
    let replications: Vec<ReplicationResult> = with_pool(options.threads, || {
        (0..setup.spec.replications)
            .into_par_iter()
            .map(|r| setup.replicate(r))
            .collect()
    })?;
    let summary = summarize(&setup.spec, &replications);
    Ok(ScenarioReport {
        hash: setup.spec.canonical_hash(),
        spec: setup.spec,
        replications,
        summary,
    })
}

fn summarize(spec: &ScenarioSpec, reps: &[ReplicationResult]) -> Vec<SummaryRow> {
    let ok: Vec<&ReplicationResult> = reps.iter().filter(|r| r.succeeded()).collect();
    let failures = reps.len() - ok.len();
    let l = spec.components.len();
    summary_labels(spec)
        .into_iter()
        .enumerate()
        .map(|(row, label)| {
            let scores: Vec<f64> = ok.iter().map(|r| r.score(row, l)).collect();
            let (amse, sd) = if scores.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (stats::mean(&scores), stats::sd(&scores))
            };
            SummaryRow {
                scenario_id: spec.id.clone(),
                component: label,
                amse,
                sd,
                replications: scores.len(),
                failures,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub left_id: String,
    pub right_id: String,
    pub component: String,
    pub left_amse: f64,
    pub left_sd: f64,
    pub right_amse: f64,
    pub right_sd: f64,
    /// Mean of `left − right` over replications where both succeeded.
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub left: ScenarioReport,
    pub right: ScenarioReport,
    pub rows: Vec<PairedRow>,
    /// Per-replication differences, one vector per summary label; `NaN` where
    /// either side failed.
    pub differences: Vec<Vec<f64>>,
}

/// Runs two scenarios on identical generated data and pairs their MSEs.
pub fn compare_methods(left: &ScenarioSpec, right: &ScenarioSpec, options: &RunOptions) -> Result<Comparison> {
    if !left.same_data(right) {
        return Err(Error::invalid(format!(
            "scenarios `{}` and `{}` differ in data-generating settings; only the estimator, \
             prior, sampler and wavelet may differ",
            left.id, right.id
        )));
    }
    let left = run_scenario(left, options)?;
    let right = run_scenario(right, options)?;
    let l = left.spec.components.len();
    let labels = left.labels();
    let mut rows = Vec::with_capacity(labels.len());
    let mut differences = Vec::with_capacity(labels.len());
    for (row, label) in labels.iter().enumerate() {
        let diffs: Vec<f64> = left
            .replications
            .iter()
            .zip(&right.replications)
            .map(|(a, b)| {
                if a.succeeded() && b.succeeded() {
                    a.score(row, l) - b.score(row, l)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let paired: Vec<f64> = diffs.iter().copied().filter(|d| !d.is_nan()).collect();
        let (lrow, rrow) = (&left.summary[row], &right.summary[row]);
        rows.push(PairedRow {
            left_id: left.spec.id.clone(),
            right_id: right.spec.id.clone(),
            component: label.clone(),
            left_amse: lrow.amse,
            left_sd: lrow.sd,
            right_amse: rrow.amse,
            right_sd: rrow.sd,
            mean_difference: if paired.is_empty() {
                f64::NAN
            } else {
                stats::mean(&paired)
            },
            sd_difference: if paired.is_empty() {
                f64::NAN
            } else {
                stats::sd(&paired)
            },
            pairs: paired.len(),
        });
        differences.push(diffs);
    }
    Ok(Comparison {
        left,
        right,
        rows,
        differences,
    })
}
