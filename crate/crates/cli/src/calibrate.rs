use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;
use wavecal::io::{fmt_f64, grid_labels, matrix_to_csv, numbered, read_matrix};
use wavecal::model::{grid, transform_columns, WeightMatrix};
use wavecal::noise::{GammaNoiseSpec, DEFAULT_GAMMA_SHAPE};
use wavecal::ram::ChainDiagnostics;
use wavecal::shrinkage::PriorConfig;
use wavecal::sim::{calibrate, Estimator, EstimatorKind, GammaBayes, SamplerSettings, FULL_CHAIN_LENGTH};
use wavecal::stats::median;
use wavecal::wavelet::{TransformPlan, WaveletFilter, MAD_CONSTANT};

use crate::failure::Failure;
use crate::manifest::{hash_json, now, read_input, Outputs, RunManifest};
use crate::{Global, OutDir};

pub const COMPONENTS_FILE: &str = "components.csv";
pub const CHAINS_FILE: &str = "chains.csv";

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("resize").args(["truncate", "pad"])))]
pub struct CalibrateArgs {
    /// Panel CSV, one row per grid point and one column per curve.
    #[arg(long)]
    pub panel: PathBuf,
    /// Weights CSV, one row per component and one column per curve.
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
    /// identity, universal-threshold, correlated-bayes or gamma-bayes.
    #[arg(long, short)]
    pub estimator: String,
    /// Wavelet filter (haar, db1..db10).
    #[arg(long, default_value = "db8")]
    pub filter: String,
    /// Primary resolution level J0.
    #[arg(long, default_value_t = 3)]
    pub primary_level: u32,
    /// Fixed point-mass weight at every level (default: the level rule).
    #[arg(long)]
    pub p: Option<f64>,
    /// Exponent of the level rule p(j) = 1 - (j - J0 + 1)^(-h).
    #[arg(long, default_value_t = 2.0)]
    pub h: f64,
    /// Logistic slab scale.
    #[arg(long, default_value_t = 5.0)]
    pub tau: f64,
    /// Gamma noise shape.
    #[arg(long, default_value_t = DEFAULT_GAMMA_SHAPE)]
    pub gamma_shape: f64,
    /// Gamma noise rate; estimated from the finest-level MAD when absent.
    #[arg(long)]
    pub gamma_rate: Option<f64>,
    /// Chain length per curve (gamma-bayes).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Relative initial proposal scale (gamma-bayes).
    #[arg(long)]
    pub initial_scale: Option<f64>,
    /// Column-sum tolerance for the weights.
    #[arg(long, default_value_t = 1e-6)]
    pub weight_tolerance: f64,
    /// Keep only the first power-of-two rows of the panel.
    #[arg(long)]
    pub truncate: bool,
    /// Extend the panel to the next power of two by mirroring its last rows;
    /// estimates are cut back to the original grid.
    #[arg(long)]
    pub pad: bool,
}

/// Everything that determines the output, hashed into the manifest.
#[derive(Debug, Serialize)]
struct Settings<'a> {
    estimator: EstimatorKind,
    filter: WaveletFilter,
    primary_level: u32,
    prior: Option<PriorConfig>,
    sampler: Option<SamplerSettings>,
    gamma: Option<GammaNoiseSpec>,
    weight_tolerance: f64,
    resize: Option<&'static str>,
    seed: u64,
    panel_sha256: &'a str,
    weights_sha256: &'a str,
}

fn read_table(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>, Failure> {
    read_matrix(bytes, &path.display().to_string())
        .map(|t| t.values)
        .map_err(Failure::from)
}

/// Brings the row count to a power of two as requested.
fn resize(panel: DMatrix<f64>, args: &CalibrateArgs) -> Result<(DMatrix<f64>, Option<&'static str>), Failure> {
    let m = panel.nrows();
    if m >= 2 && m.is_power_of_two() {
        return Ok((panel, None));
    }
    if args.truncate {
        let keep = 1usize << (usize::BITS - 1 - m.leading_zeros());
        if keep < 2 {
            return Err(Failure::validation(format!(
                "panel has {m} rows; at least 2 are needed"
            )));
        }
        warn!("truncating the panel from {m} to {keep} grid points");
        return Ok((panel.rows(0, keep).into_owned(), Some("truncate")));
    }
    if args.pad {
        let target = m.next_power_of_two();
        warn!("padding the panel from {m} to {target} grid points by reflection");
        let padded = DMatrix::from_fn(target, panel.ncols(), |r, c| {
            let src = if r < m { r } else { 2 * m - 1 - r };
            panel[(src, c)]
        });
        return Ok((padded, Some("pad")));
    }
    Err(Failure::validation(format!(
        "panel has {m} grid points, which is not a power of two; pass --truncate to keep the first {} \
         rows or --pad to mirror up to {}",
        if m >= 2 {
            1usize << (usize::BITS - 1 - m.leading_zeros())
        } else {
            0
        },
        m.next_power_of_two().max(2)
    )))
}

/// `√shape / σ̂` with `σ̂` the MAD scale of the finest detail level, pooled
/// over all curves.
fn estimate_gamma(panel: &DMatrix<f64>, plan: &TransformPlan, shape: f64) -> Result<GammaNoiseSpec, Failure> {
    let coeffs = transform_columns(panel, plan)?;
    let finest = plan.detail_range(plan.levels() - 1)?;
    let mut abs: Vec<f64> = coeffs
        .rows(finest.start, finest.len())
        .iter()
        .map(|v| v.abs())
        .collect();
    let sigma = median(&mut abs) / MAD_CONSTANT;
    if !(sigma > 0.0) {
        return Err(Failure::validation(
            "finest-level coefficients are all zero; pass --gamma-rate explicitly",
        ));
    }
    let spec = GammaNoiseSpec::new(shape, shape.sqrt() / sigma)?;
    info!(
        "estimated Gamma noise: shape {shape}, rate {:.6} (sd {sigma:.6})",
        spec.rate
    );
    Ok(spec)
}

fn chains_csv(chains: &[ChainDiagnostics]) -> Result<Vec<u8>, Failure> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::from(wavecal::Error::from(e));
    wtr.write_record([
        "curve",
        "seed",
        "iterations",
        "retained",
        "acceptance_rate",
        "skipped_adaptations",
    ])
    .map_err(io)?;
    for (n, c) in chains.iter().enumerate() {
        wtr.write_record([
            (n + 1).to_string(),
            c.seed.to_string(),
            c.iterations.to_string(),
            c.retained.to_string(),
            fmt_f64(c.acceptance_rate),
            c.skipped_adaptations.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.into_inner()
        .map_err(|e| Failure::from(wavecal::Error::Io(e.into_error())))
}

pub fn run(args: &CalibrateArgs, global: &Global) -> Result<(), Failure> {
    let started = now();
    let kind: EstimatorKind = args.estimator.parse()?;
    let filter: WaveletFilter = args.filter.parse()?;
    if !(args.weight_tolerance >= 0.0) {
        return Err(Failure::validation("--weight-tolerance must be non-negative"));
    }
    if global.threads == Some(0) {
        return Err(Failure::validation("--threads must be at least 1"));
    }
    let (panel_bytes, panel_input) = read_input(&args.panel)?;
    let (weight_bytes, weight_input) = read_input(&args.weights)?;
    let panel = read_table(&args.panel, &panel_bytes)?;
    let weights = read_table(&args.weights, &weight_bytes)?;
    let weights = WeightMatrix::with_tolerance(weights, args.weight_tolerance)
        .map_err(|e| Failure::from(e).context(args.weights.display()))?;
    if panel.ncols() != weights.samples() {
        return Err(Failure::validation(format!(
            "panel has {} curves but the weights file has {} columns",
            panel.ncols(),
            weights.samples()
        )));
    }
    let rows = panel.nrows();
    let (panel, resized) = resize(panel, args)?;
    let plan = TransformPlan::new(panel.nrows(), args.primary_level, filter)?;
    let seed = global.seed.unwrap_or(0);

    let prior = PriorConfig {
        p: args.p,
        h: args.h,
        tau: args.tau,
    };
    let (estimator, sampler, gamma) = match kind {
        EstimatorKind::Identity => (Estimator::Identity, None, None),
        EstimatorKind::UniversalThreshold => (Estimator::UniversalThreshold, None, None),
        EstimatorKind::CorrelatedBayes => {
            prior.validate()?;
            (Estimator::CorrelatedBayes(prior), None, None)
        }
        EstimatorKind::GammaBayes => {
            prior.validate()?;
            let noise = match args.gamma_rate {
                Some(rate) => GammaNoiseSpec::new(args.gamma_shape, rate)?,
                None => estimate_gamma(&panel, &plan, args.gamma_shape)?,
            };
            let mut sampler = SamplerSettings::default();
            if global.full_scale {
                sampler.iterations = FULL_CHAIN_LENGTH;
            }
            if let Some(k) = args.iterations {
                sampler.iterations = k;
            }
            if let Some(s) = args.initial_scale {
                sampler.initial_scale = s;
            }
            sampler.ram_config(1.0, 1, 0).validate()?;
            let settings = GammaBayes {
                noise,
                prior,
                sampler,
                seed,
            };
            (Estimator::GammaBayes(settings), Some(sampler), Some(noise))
        }
    };
    let uses_prior = matches!(kind, EstimatorKind::CorrelatedBayes | EstimatorKind::GammaBayes);

    let fit = match global.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure {
                code: crate::failure::RUNTIME,
                message: e.to_string(),
            })?
            .install(|| calibrate(&panel, &weights, &plan, &estimator)),
        None => calibrate(&panel, &weights, &plan, &estimator),
    }?;
    if !fit.chains.is_empty() {
        let mean = fit.chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / fit.chains.len() as f64;
        info!("{} chains, mean acceptance rate {mean:.3}", fit.chains.len());
    }

    // labels stay on the grid of the input panel
    let kept = rows.min(plan.len());
    let estimate = fit.components.values().rows(0, kept).into_owned();
    let labels = grid_labels(&grid(rows)[..kept]);
    let mut outputs = Outputs::default();
    outputs.add(
        COMPONENTS_FILE,
        matrix_to_csv(
            Some(("t", &labels)),
            &numbered("component", estimate.ncols()),
            &estimate,
        )?,
    );
    if !fit.chains.is_empty() {
        outputs.add(CHAINS_FILE, chains_csv(&fit.chains)?);
    }
    let settings = Settings {
        estimator: kind,
        filter,
        primary_level: args.primary_level,
        prior: uses_prior.then_some(prior),
        sampler,
        gamma,
        weight_tolerance: args.weight_tolerance,
        resize: resized,
        seed,
        panel_sha256: &panel_input.sha256,
        weights_sha256: &weight_input.sha256,
    };
    let manifest = RunManifest {
        tool: "wavecal",
        version: env!("CARGO_PKG_VERSION"),
        command: "calibrate",
        scenario_hash: hash_json(&settings),
        seed,
        threads: global.threads,
        full_scale: global.full_scale,
        started,
        finished: String::new(),
        scenarios: Vec::new(),
        inputs: vec![panel_input, weight_input],
        outputs: Vec::new(),
    };
    outputs.commit(&args.out.out, manifest)?;
    Ok(())
}
