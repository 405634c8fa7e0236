//! Joint posterior of one coefficient vector under iid Gamma errors in the
//! time domain and a spike-and-slab logistic prior on detail coefficients.
//!
//! The point mass at zero is replaced by a narrow logistic of scale
//! `spike_scale_fraction · τ`, which keeps the posterior absolutely
//! continuous so a random-walk sampler can target it.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::noise::GammaNoiseSpec;
use crate::shrinkage::{log_logistic, PriorConfig};
use crate::stats;
use crate::wavelet::{dwt, TransformPlan};

pub const DEFAULT_SPIKE_SCALE_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GammaModel {
    plan: TransformPlan,
    noise: GammaNoiseSpec,
    prior: PriorConfig,
    spike_scale_fraction: f64,
    /// Point-mass weight per coefficient; `None` for scaling coefficients.
    point_mass: Vec<Option<f64>>,
    log_norm: f64,
}

impl GammaModel {
    pub fn new(
        plan: TransformPlan,
        noise: GammaNoiseSpec,
        prior: PriorConfig,
        spike_scale_fraction: f64,
    ) -> Result<Self> {
        let noise = GammaNoiseSpec::new(noise.shape, noise.rate)?;
        prior.validate()?;
        if !(spike_scale_fraction > 0.0 && spike_scale_fraction * prior.tau > 0.0) {
            return Err(Error::invalid(format!(
                "spike scale fraction must be positive, got {spike_scale_fraction}"
            )));
        }
        let point_mass = (0..plan.len())
            .map(|i| {
                plan.level_of(i)
                    .map(|j| prior.point_mass(j, plan.primary_level()))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let n = plan.len() as f64;
        let log_norm = n * (noise.shape * noise.rate.ln() - ln_gamma(noise.shape));
        Ok(Self {
            plan,
            noise,
            prior,
            spike_scale_fraction,
            point_mass,
            log_norm,
        })
    }

    pub fn plan(&self) -> &TransformPlan {
        &self.plan
    }

    pub fn noise(&self) -> &GammaNoiseSpec {
        &self.noise
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn spike_scale(&self) -> f64 {
        self.spike_scale_fraction * self.prior.tau
    }

    pub fn dim(&self) -> usize {
        self.plan.len()
    }

    fn check(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.plan.len() {
            return Err(Error::invalid(format!(
                "{what} has length {}, model expects {}",
                v.len(),
                self.plan.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("{what} contains non-finite values")));
        }
        Ok(())
    }

    /// Log-likelihood `log L(θ | d)`, `−∞` outside the support.
    pub fn log_likelihood(&self, theta: &[f64], d: &[f64]) -> Result<f64> {
        self.check(theta, "theta")?;
        self.check(d, "observed coefficients")?;
        let mut ws = Workspace::new(self.dim());
        Ok(self.log_likelihood_in(theta, d, &mut ws))
    }

    fn log_likelihood_in(&self, theta: &[f64], d: &[f64], ws: &mut Workspace) -> f64 {
        for ((diff, &dk), &tk) in ws.diff.iter_mut().zip(d).zip(theta) {
            *diff = dk - tk;
        }
        self.plan.inverse_into(&ws.diff, &mut ws.residual, &mut ws.scratch);
        let mut sum = 0.0;
        let mut sum_log = 0.0;
        for &r in &ws.residual {
            if !(r > 0.0) {
                return f64::NEG_INFINITY;
            }
            sum += r;
            sum_log += r.ln();
        }
        self.log_norm - self.noise.rate * sum + (self.noise.shape - 1.0) * sum_log
    }

    /// Log-prior (up to the flat scaling-coefficient part).
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta, "theta")?;
        Ok(self.log_prior_unchecked(theta))
    }

    fn log_prior_unchecked(&self, theta: &[f64]) -> f64 {
        let tau = self.prior.tau;
        let spike = self.spike_scale();
        theta
            .iter()
            .zip(&self.point_mass)
            .filter_map(|(&t, p)| p.map(|p| log_mixture(t, p, spike, tau)))
            .sum()
    }

    /// Unnormalized log-posterior.
    pub fn log_posterior(&self, theta: &[f64], d: &[f64]) -> Result<f64> {
        let ll = self.log_likelihood(theta, d)?;
        if ll == f64::NEG_INFINITY {
            return Ok(ll);
        }
        Ok(self.log_prior_unchecked(theta) + ll)
    }

    /// Binds an observation and allocates scratch space, for use as a
    /// sampler target.
    pub fn target<'a>(&'a self, d: &'a [f64]) -> Result<PosteriorTarget<'a>> {
        self.check(d, "observed coefficients")?;
        Ok(PosteriorTarget {
            model: self,
            d,
            ws: Workspace::new(self.dim()),
        })
    }
}

/// `log[p·g(θ; s) + (1 − p)·g(θ; τ)]` via log-sum-exp.
fn log_mixture(theta: f64, p: f64, spike_scale: f64, tau: f64) -> f64 {
    let slab = log_logistic(theta, tau);
    if p <= 0.0 {
        return slab;
    }
    let a = p.ln() + log_logistic(theta, spike_scale);
    let b = (1.0 - p).ln() + slab;
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[derive(Debug, Clone)]
struct Workspace {
    diff: Vec<f64>,
    residual: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(m: usize) -> Self {
        Self {
            diff: vec![0.0; m],
            residual: vec![0.0; m],
            scratch: vec![0.0; m],
        }
    }
}

/// Posterior of one observed coefficient vector, with reusable buffers.
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'a> {
    model: &'a GammaModel,
    d: &'a [f64],
    ws: Workspace,
}

impl PosteriorTarget<'_> {
    pub fn log_density(&mut self, theta: &[f64]) -> f64 {
        if theta.iter().any(|x| !x.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let ll = self.model.log_likelihood_in(theta, self.d, &mut self.ws);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        ll + self.model.log_prior_unchecked(theta)
    }
}

/// `θ = d − dwt(c·𝟙)`, whose time-domain residual is exactly `c` everywhere.
pub fn feasible_init(d: &[f64], model: &GammaModel, margin: f64) -> Result<Vec<f64>> {
    model.check(d, "observed coefficients")?;
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("margin must be positive, got {margin}")));
    }
    let shift = dwt(&vec![margin; model.dim()], model.plan())?;
    Ok(d.iter().zip(shift.values()).map(|(a, b)| a - b).collect())
}

/// Moment-matched Gamma noise from residuals with the shape held fixed:
/// `rate = √shape / sd(residuals)`. A convenience for real data where the
/// noise parameters are unknown; not part of the posterior itself.
pub fn moment_matched_gamma(residuals: &[f64], shape: f64) -> Result<GammaNoiseSpec> {
    let sd = stats::sd(residuals);
    if !(sd > 0.0) {
        return Err(Error::invalid("residuals have zero spread"));
    }
    GammaNoiseSpec::new(shape, shape.sqrt() / sd)
}
