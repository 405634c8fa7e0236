//! Error generators (iid Gamma, stationary AR(1), ARFIMA(0,d,0), iid Gaussian)
//! and SNR-driven calibration of their scale.
//!
//! Every generator is a pure function of `(spec, dims, seed)`. Column `n` draws
//! from its own stream seeded with `derive_seed(seed, n)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};
use crate::stats;

/// Default π-weight truncation carried by ARFIMA specs.
pub const DEFAULT_ARFIMA_TRUNCATION: usize = 1000;

/// Default Gamma shape used when calibrating by SNR.
pub const DEFAULT_GAMMA_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaNoiseSpec {
    pub shape: f64,
    pub rate: f64,
}

impl GammaNoiseSpec {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "Gamma parameters must be positive, got shape {shape}, rate {rate}"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1NoiseSpec {
    pub phi: f64,
    pub innovation_sd: f64,
}

impl Ar1NoiseSpec {
    pub fn new(phi: f64, innovation_sd: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::invalid(format!("AR(1) requires |phi| < 1, got {phi}")));
        }
        check_sd(innovation_sd)?;
        Ok(Self { phi, innovation_sd })
    }

    /// Stationary variance `σ_η² / (1 − φ²)`.
    pub fn variance(&self) -> f64 {
        self.innovation_sd * self.innovation_sd / (1.0 - self.phi * self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArfimaNoiseSpec {
    pub d: f64,
    pub innovation_sd: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

fn default_truncation() -> usize {
    DEFAULT_ARFIMA_TRUNCATION
}

impl ArfimaNoiseSpec {
    pub fn new(d: f64, innovation_sd: f64) -> Result<Self> {
        check_memory(d)?;
        check_sd(innovation_sd)?;
        Ok(Self {
            d,
            innovation_sd,
            truncation: DEFAULT_ARFIMA_TRUNCATION,
        })
    }

    /// Stationary variance `σ_η² Γ(1−2d) / Γ(1−d)²`.
    pub fn variance(&self) -> f64 {
        self.innovation_sd * self.innovation_sd * variance_factor(self.d)
    }

    /// Autocovariances `γ(0..len)` via `γ(k) = γ(k−1)(k−1+d)/(k−d)`.
    pub fn autocovariance(&self, len: usize) -> Vec<f64> {
        let mut acv = Vec::with_capacity(len);
        let mut g = self.variance();
        for k in 0..len {
            if k > 0 {
                let k = k as f64;
                g *= (k - 1.0 + self.d) / (k - self.d);
            }
            acv.push(g);
        }
        acv
    }
}

fn variance_factor(d: f64) -> f64 {
    (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp()
}

fn check_sd(sd: f64) -> Result<()> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::invalid(format!("innovation sd must be positive, got {sd}")));
    }
    Ok(())
}

fn check_memory(d: f64) -> Result<()> {
    if !(d > 0.0 && d < 0.5) {
        return Err(Error::invalid(format!(
            "ARFIMA memory parameter must lie in (0, 0.5), got {d}"
        )));
    }
    Ok(())
}

/// A fully parameterized error process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Gaussian { sd: f64 },
    Gamma(GammaNoiseSpec),
    Ar1(Ar1NoiseSpec),
    Arfima(ArfimaNoiseSpec),
}

impl NoiseSpec {
    /// Marginal (stationary) standard deviation.
    pub fn marginal_sd(&self) -> f64 {
        match self {
            NoiseSpec::Gaussian { sd } => *sd,
            NoiseSpec::Gamma(g) => g.variance().sqrt(),
            NoiseSpec::Ar1(s) => s.variance().sqrt(),
            NoiseSpec::Arfima(s) => s.variance().sqrt(),
        }
    }

    pub fn generate(&self, rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self {
            NoiseSpec::Gaussian { sd } => gen_gaussian_panel(*sd, rows, cols, seed),
            NoiseSpec::Gamma(g) => gen_gamma_panel(g, rows, cols, seed),
            NoiseSpec::Ar1(s) => gen_ar1_panel(s, rows, cols, seed),
            NoiseSpec::Arfima(s) => gen_arfima_panel(s, rows, cols, seed),
        }
    }
}

/// Error family with its shape-defining parameter; the scale is left to calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseFamily {
    Gaussian,
    Gamma {
        #[serde(default = "default_shape")]
        shape: f64,
    },
    Ar1 {
        phi: f64,
    },
    Arfima {
        d: f64,
    },
}

fn default_shape() -> f64 {
    DEFAULT_GAMMA_SHAPE
}

impl NoiseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Gamma { .. } => "gamma",
            NoiseFamily::Ar1 { .. } => "ar1",
            NoiseFamily::Arfima { .. } => "arfima",
        }
    }

    /// Concrete spec whose marginal standard deviation is `sd`.
    pub fn with_marginal_sd(&self, sd: f64) -> Result<NoiseSpec> {
        check_sd(sd)?;
        Ok(match *self {
            NoiseFamily::Gaussian => NoiseSpec::Gaussian { sd },
            NoiseFamily::Gamma { shape } => NoiseSpec::Gamma(GammaNoiseSpec::new(shape, shape.sqrt() / sd)?),
            NoiseFamily::Ar1 { phi } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::invalid(format!("AR(1) requires |phi| < 1, got {phi}")));
                }
                NoiseSpec::Ar1(Ar1NoiseSpec::new(phi, sd * (1.0 - phi * phi).sqrt())?)
            }
            NoiseFamily::Arfima { d } => {
                check_memory(d)?;
                NoiseSpec::Arfima(ArfimaNoiseSpec::new(d, sd / variance_factor(d).sqrt())?)
            }
        })
    }
}

/// Picks the noise scale so that `sd(target_signal) / marginal_sd = snr`.
pub fn snr_calibrate(family: &NoiseFamily, target_signal: &[f64], snr: f64) -> Result<NoiseSpec> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::invalid(format!("SNR must be positive, got {snr}")));
    }
    let signal_sd = stats::sd(target_signal);
    if !(signal_sd > 0.0) {
        return Err(Error::invalid("target signal is constant; SNR is undefined"));
    }
    family.with_marginal_sd(signal_sd / snr)
}

/// Coefficients `b_0..=b_Q` of `(1 − B)^d = Σ b_q(d) B^q`.
pub fn arfima_pi_coeffs(d: f64, truncation: usize) -> Result<Vec<f64>> {
    check_memory(d)?;
    let mut b = Vec::with_capacity(truncation + 1);
    b.push(1.0);
    for q in 1..=truncation {
        let q = q as f64;
        let prev = *b.last().unwrap();
        b.push(prev * (q - 1.0 - d) / q);
    }
    Ok(b)
}

/// `b_q(d) = Γ(q−d) / (Γ(q+1) Γ(−d))` evaluated directly.
pub fn arfima_pi_coeff_gamma(d: f64, q: usize) -> f64 {
    let q = q as f64;
    gamma(q - d) / (gamma(q + 1.0) * gamma(-d))
}

fn fill_columns(
    rows: usize,
    cols: usize,
    seed: u64,
    mut fill: impl FnMut(&mut rand_chacha::ChaCha8Rng, &mut [f64]),
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for (n, mut col) in out.column_iter_mut().enumerate() {
        let mut r = rng(derive_seed(seed, n as u64));
        fill(&mut r, col.as_mut_slice());
    }
    out
}

pub fn gen_gaussian_panel(sd: f64, rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_sd(sd)?;
    Ok(fill_columns(rows, cols, seed, |r, col| {
        for v in col.iter_mut() {
            *v = sd * r.sample::<f64, _>(StandardNormal);
        }
    }))
}

pub fn gen_gamma_panel(spec: &GammaNoiseSpec, rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    let spec = GammaNoiseSpec::new(spec.shape, spec.rate)?;
    let dist =
        Gamma::new(spec.shape, 1.0 / spec.rate).map_err(|e| Error::invalid(format!("Gamma distribution: {e}")))?;
    Ok(fill_columns(rows, cols, seed, |r, col| {
        for v in col.iter_mut() {
            // the sampler can return exact zeros for tiny shapes
            let mut x = dist.sample(r);
            while x <= 0.0 {
                x = dist.sample(r);
            }
            *v = x;
        }
    }))
}

pub fn gen_ar1_panel(spec: &Ar1NoiseSpec, rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    let spec = Ar1NoiseSpec::new(spec.phi, spec.innovation_sd)?;
    let stationary_sd = spec.variance().sqrt();
    Ok(fill_columns(rows, cols, seed, |r, col| {
        let mut prev = stationary_sd * r.sample::<f64, _>(StandardNormal);
        for (i, v) in col.iter_mut().enumerate() {
            if i > 0 {
                prev = spec.phi * prev + spec.innovation_sd * r.sample::<f64, _>(StandardNormal);
            }
            *v = prev;
        }
    }))
}

/// Stationary ARFIMA(0,d,0) paths by the Hosking (Durbin–Levinson) recursion
/// on the exact autocovariance. The recursion coefficients are shared by all
/// columns, so each step updates them once and then extends every path.
pub fn gen_arfima_panel(spec: &ArfimaNoiseSpec, rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_memory(spec.d)?;
    check_sd(spec.innovation_sd)?;
    let mut out = fill_columns(rows, cols, seed, |r, col| {
        for v in col.iter_mut() {
            *v = r.sample::<f64, _>(StandardNormal);
        }
    });
    if rows == 0 {
        return Ok(out);
    }
    let acv = spec.autocovariance(rows);

    // phi[j - 1] = φ_{t,j}; rev[i] = φ_{t,t-i} so the conditional mean is a
    // contiguous dot product with x[0..t].
    let mut phi: Vec<f64> = Vec::with_capacity(rows);
    let mut next: Vec<f64> = Vec::with_capacity(rows);
    let mut rev: Vec<f64> = Vec::with_capacity(rows);
    let mut v = acv[0];
    for mut col in out.column_iter_mut() {
        col[0] *= v.sqrt();
    }
    for t in 1..rows {
        let partial: f64 = phi.iter().enumerate().map(|(j, p)| p * acv[t - 1 - j]).sum();
        let phi_tt = (acv[t] - partial) / v;
        next.clear();
        next.extend((0..t - 1).map(|j| phi[j] - phi_tt * phi[t - 2 - j]));
        next.push(phi_tt);
        std::mem::swap(&mut phi, &mut next);
        v *= 1.0 - phi_tt * phi_tt;
        let sd = v.sqrt();

        rev.clear();
        rev.extend(phi.iter().rev());
        for mut col in out.column_iter_mut() {
            let x = col.as_mut_slice();
            let mean = dot(&rev, &x[..t]);
            x[t] = mean + sd * x[t];
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
