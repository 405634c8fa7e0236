//! Robust Adaptive Metropolis: a random-walk Metropolis sampler whose
//! proposal factor `S` is adapted by rank-one Cholesky updates so the
//! acceptance rate approaches a target `γ`.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamConfig {
    /// Chain length `K`, including the starting point.
    pub iterations: usize,
    pub target_acceptance: f64,
    /// `η_l = l^(−ζ)`.
    pub adaptation_exponent: f64,
    /// `false` freezes `S` at its initial value (`η ≡ 0`).
    pub adapt: bool,
    /// `S₁ = initial_scale · I`.
    pub initial_scale: f64,
    /// Fraction of the chain discarded as burn-in.
    pub burn_in: f64,
    /// Keep every `thin`-th draw after burn-in.
    pub thin: usize,
    pub seed: u64,
}

impl Default for RamConfig {
    fn default() -> Self {
        Self {
            iterations: 5_000,
            target_acceptance: 0.234,
            adaptation_exponent: 2.0 / 3.0,
            adapt: true,
            initial_scale: 0.1,
            burn_in: 0.2,
            thin: 10,
            seed: 0,
        }
    }
}

impl RamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("sampler needs at least one iteration"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::invalid(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if !(self.adaptation_exponent > 0.5 && self.adaptation_exponent <= 1.0) {
            return Err(Error::invalid(format!(
                "adaptation exponent must lie in (0.5, 1], got {}",
                self.adaptation_exponent
            )));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "initial proposal scale must be positive, got {}",
                self.initial_scale
            )));
        }
        if !(self.burn_in > 0.0 && self.burn_in < 1.0) {
            return Err(Error::invalid(format!(
                "burn-in fraction must lie in (0, 1), got {}",
                self.burn_in
            )));
        }
        if self.thin < 1 {
            return Err(Error::invalid("thinning stride must be at least 1"));
        }
        Ok(())
    }

    /// Step size `η_k`; zero when adaptation is frozen.
    pub fn eta(&self, k: u64) -> f64 {
        if self.adapt {
            (k as f64).powf(-self.adaptation_exponent).min(1.0)
        } else {
            0.0
        }
    }

    fn burn_in_count(&self) -> usize {
        (self.burn_in * self.iterations as f64).floor() as usize
    }
}

/// Sampler state between steps.
#[derive(Debug, Clone)]
pub struct RamState {
    pub theta: Vec<f64>,
    pub log_density: f64,
    /// Lower-triangular proposal factor with positive diagonal.
    pub factor: DMatrix<f64>,
    /// Index of the current state (`θ_k`), starting at 1.
    pub k: u64,
    pub accepted: u64,
    pub skipped_adaptations: u64,
}

impl RamState {
    pub fn new(theta: Vec<f64>, log_density: f64, initial_scale: f64) -> Self {
        let m = theta.len();
        Self {
            theta,
            log_density,
            factor: DMatrix::identity(m, m) * initial_scale,
            k: 1,
            accepted: 0,
            skipped_adaptations: 0,
        }
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct StepBuffers {
    u: Vec<f64>,
    su: Vec<f64>,
    proposal: Vec<f64>,
    backup: Vec<f64>,
}

impl StepBuffers {
    pub fn new(dim: usize) -> Self {
        Self {
            u: vec![0.0; dim],
            su: vec![0.0; dim],
            proposal: vec![0.0; dim],
            backup: vec![0.0; dim * dim],
        }
    }
}

/// `out = L·x` for lower-triangular `L`.
fn lower_mul(l: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = x.len();
    for (j, &xj) in x.iter().enumerate() {
        let col = &l.as_slice()[j * n..(j + 1) * n];
        for i in j..n {
            out[i] += col[i] * xj;
        }
    }
}

/// In-place rank-one update (`sign = +1`) or downdate (`sign = −1`) of a
/// lower-triangular Cholesky factor: `L'L'ᵀ = LLᵀ + sign·vvᵀ`. `v` is
/// consumed as workspace. Fails if a downdate loses positive definiteness,
/// leaving `l` partially modified.
pub fn cholesky_rank_one(l: &mut DMatrix<f64>, v: &mut [f64], sign: f64) -> Result<()> {
    let n = v.len();
    debug_assert_eq!(l.shape(), (n, n));
    let data = l.as_mut_slice();
    for j in 0..n {
        let col = &mut data[j * n..(j + 1) * n];
        let ljj = col[j];
        let vj = v[j];
        let arg = ljj * ljj + sign * vj * vj;
        if !(arg > 0.0) || !arg.is_finite() {
            return Err(Error::Numerical(format!(
                "rank-one downdate lost positive definiteness at column {j}"
            )));
        }
        let r = arg.sqrt();
        let c = r / ljj;
        let s = vj / ljj;
        col[j] = r;
        for i in j + 1..n {
            col[i] = (col[i] + sign * s * v[i]) / c;
            v[i] = c * v[i] - s * col[i];
        }
    }
    Ok(())
}

/// One RAM iteration: propose, accept/reject, adapt `S`.
pub fn ram_step<F>(
    state: &mut RamState,
    log_target: &mut F,
    config: &RamConfig,
    rng: &mut ChaCha8Rng,
    buf: &mut StepBuffers,
) where
    F: FnMut(&[f64]) -> f64,
{
    let m = state.theta.len();
    for u in buf.u.iter_mut() {
        *u = rng.sample(StandardNormal);
    }
    lower_mul(&state.factor, &buf.u, &mut buf.su);
    for i in 0..m {
        buf.proposal[i] = state.theta[i] + buf.su[i];
    }
    let proposed = log_target(&buf.proposal);
    let alpha = if proposed == f64::NEG_INFINITY || proposed.is_nan() {
        0.0
    } else {
        (proposed - state.log_density).exp().min(1.0)
    };
    let draw: f64 = rng.random();
    if draw < alpha {
        state.theta.copy_from_slice(&buf.proposal);
        state.log_density = proposed;
        state.accepted += 1;
    }
    state.k += 1;

    let eta = config.eta(state.k);
    let norm2: f64 = buf.u.iter().map(|u| u * u).sum();
    let weight = eta * (alpha - config.target_acceptance) / norm2;
    if weight != 0.0 && norm2 > 0.0 {
        let scale = weight.abs().sqrt();
        for v in buf.su.iter_mut() {
            *v *= scale;
        }
        if weight > 0.0 {
            // updates never fail for a valid factor
            cholesky_rank_one(&mut state.factor, &mut buf.su, 1.0)
                .expect("rank-one update of a positive definite factor");
        } else {
            buf.backup.copy_from_slice(state.factor.as_slice());
            if cholesky_rank_one(&mut state.factor, &mut buf.su, -1.0).is_err() {
                state.factor.as_mut_slice().copy_from_slice(&buf.backup);
                state.skipped_adaptations += 1;
                warn!("RAM step {}: downdate failed, adaptation skipped", state.k);
            }
        }
    }
    debug_assert!((0..m).all(|i| state.factor[(i, i)] > 0.0));
}

/// Retained draws, stored row-major (`retained x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("sample rows have different lengths"));
        }
        Ok(Self {
            dim,
            data: rows.concat(),
        })
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub seed: u64,
    pub iterations: usize,
    pub retained: usize,
    pub acceptance_rate: f64,
    pub skipped_adaptations: u64,
    pub final_scale_diagonal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Samples,
    pub diagnostics: ChainDiagnostics,
}

/// Runs `K − 1` RAM steps from `init`, then keeps every `thin`-th state
/// after the burn-in prefix.
pub fn run_chain<F>(mut log_target: F, init: Vec<f64>, config: &RamConfig) -> Result<ChainOutput>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    if init.is_empty() {
        return Err(Error::invalid("initial state is empty"));
    }
    let start = log_target(&init);
    if !start.is_finite() {
        return Err(Error::Initialization(format!(
            "log target is {start} at the initial state; start from a feasible point \
             (see gamma::feasible_init)"
        )));
    }
    let dim = init.len();
    let mut state = RamState::new(init, start, config.initial_scale);
    let mut rng = rng(config.seed);
    let mut buf = StepBuffers::new(dim);
    let burn = config.burn_in_count();
    let mut samples = Samples::new(dim);
    for k in 0..config.iterations {
        if k > 0 {
            ram_step(&mut state, &mut log_target, config, &mut rng, &mut buf);
        }
        if k >= burn && (k - burn).is_multiple_of(config.thin) {
            samples.push(&state.theta);
        }
    }
    let steps = config.iterations.saturating_sub(1);
    let diagnostics = ChainDiagnostics {
        seed: config.seed,
        iterations: config.iterations,
        retained: samples.len(),
        acceptance_rate: if steps > 0 {
            state.accepted as f64 / steps as f64
        } else {
            0.0
        },
        skipped_adaptations: state.skipped_adaptations,
        final_scale_diagonal: (0..dim).map(|i| state.factor[(i, i)]).collect(),
    };
    Ok(ChainOutput { samples, diagnostics })
}

/// Coordinatewise mean of the retained draws.
pub fn posterior_mean(samples: &Samples) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("no retained samples"));
    }
    let mut mean = vec![0.0; samples.dim()];
    for row in samples.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}
