//! Level-dependent Bayesian shrinkage under a logistic spike-and-slab prior,
//! and the universal soft-threshold comparator.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::wavelet::{mad_sigma, TransformPlan};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Hyperparameters of the spike-and-slab prior.
///
/// `p` fixes the point-mass weight at every level; when absent the weight
/// follows `p(j) = 1 − (j − J0 + 1)^(−h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_h() -> f64 {
    2.0
}

fn default_tau() -> f64 {
    5.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            p: None,
            h: default_h(),
            tau: default_tau(),
        }
    }
}

impl PriorConfig {
    pub fn fixed(p: f64, tau: f64) -> Self {
        Self {
            p: Some(p),
            h: default_h(),
            tau,
        }
    }

    pub fn level_rule(h: f64, tau: f64) -> Self {
        Self { p: None, h, tau }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "point-mass weight p must lie in [0, 1), got {p}"
                )));
            }
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid(format!(
                "level exponent h must be positive, got {}",
                self.h
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "logistic scale tau must be positive, got {}",
                self.tau
            )));
        }
        if self.tau > 10.0 {
            warn!(
                "logistic scale tau = {} exceeds the recommended range (0, 10]",
                self.tau
            );
        }
        Ok(())
    }

    /// Point-mass weight used for detail level `level`.
    pub fn point_mass(&self, level: u32, primary_level: u32) -> Result<f64> {
        match self.p {
            Some(p) => Ok(p),
            None => p_of_level(level, primary_level, self.h),
        }
    }
}

/// Centered logistic density with scale `tau`.
pub fn logistic_density(x: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("logistic scale must be positive, got {tau}")));
    }
    Ok(log_logistic(x, tau).exp())
}

/// `log g(x; τ)`, evaluated on `|x|` so it never overflows.
#[inline]
pub(crate) fn log_logistic(x: f64, tau: f64) -> f64 {
    let z = x.abs() / tau;
    -z - tau.ln() - 2.0 * (-z).exp().ln_1p()
}

/// `p(j) = 1 − 1 / (j − J0 + 1)^h`.
pub fn p_of_level(level: u32, primary_level: u32, h: f64) -> Result<f64> {
    if level < primary_level {
        return Err(Error::invalid(format!(
            "level {level} is below the primary resolution level {primary_level}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::invalid(format!("level exponent h must be positive, got {h}")));
    }
    let span = f64::from(level - primary_level + 1);
    Ok(1.0 - span.powf(-h))
}

/// Posterior mean of a coefficient observed as `d = θ + σu`, `u ~ N(0,1)`,
/// under the prior `p δ₀ + (1 − p) g(·; τ)`.
pub fn shrink_coefficient(d: f64, sigma: f64, p: f64, tau: f64) -> Result<f64> {
    shrink_coefficient_with(GaussHermite::standard(), d, sigma, p, tau)
}

/// As [`shrink_coefficient`] with a caller-chosen quadrature rule.
pub fn shrink_coefficient_with(rule: &GaussHermite, d: f64, sigma: f64, p: f64, tau: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::invalid(format!("coefficient must be finite, got {d}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise scale must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&p) || !(tau > 0.0) {
        return Err(Error::invalid(format!("invalid prior (p = {p}, tau = {tau})")));
    }
    Ok(shrink_unchecked(rule, d, sigma, p, tau))
}

fn shrink_unchecked(rule: &GaussHermite, d: f64, sigma: f64, p: f64, tau: f64) -> f64 {
    if d < 0.0 {
        return -shrink_unchecked(rule, -d, sigma, p, tau);
    }
    let ln_slab = (1.0 - p).ln();
    let z = d / sigma;
    let ln_spike = p.ln() - sigma.ln() - LN_SQRT_2PI - 0.5 * z * z;

    // The slab integrand g(σu + d)·φ(u) is recentred on its mode and rescaled
    // by its curvature there, u = μ + s·v, so the nodes in v resolve the
    // logistic even when τ is small next to σ.
    let (mu, s) = slab_mode(d, sigma, tau);
    let ln_s = s.ln();
    let nodes = rule.nodes();
    let weights = rule.weights();
    let n = nodes.len();
    let log_term = |i: usize| {
        let v = nodes[i];
        let u = mu + s * v;
        let x = sigma * u + d;
        (x, ln_slab + log_logistic(x, tau) + ln_s - 0.5 * (u * u - v * v))
    };
    let mut shift = ln_spike;
    for i in 0..n {
        shift = shift.max(log_term(i).1);
    }
    if shift == f64::NEG_INFINITY {
        return 0.0;
    }
    let term = |i: usize| {
        let (x, l) = log_term(i);
        let g = weights[i] * (l - shift).exp();
        (x * g, g)
    };
    let mut num = 0.0;
    let mut den = (ln_spike - shift).exp();
    // mirrored pairs first, so d = 0 gives exactly zero
    for i in 0..n / 2 {
        let (a, ga) = term(i);
        let (b, gb) = term(n - 1 - i);
        num += a + b;
        den += ga + gb;
    }
    if n % 2 == 1 {
        let (a, ga) = term(n / 2);
        num += a;
        den += ga;
    }
    num / den
}

/// Mode `μ` of `log g(σu + d) − u²/2` and the inverse square root of the
/// curvature there. The mode solves `u + (σ/τ)·tanh((σu + d)/(2τ)) = 0`,
/// which is increasing in `u` with a root in `[−σ/τ, σ/τ]`.
fn slab_mode(d: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let r = sigma / tau;
    let f = |u: f64| u + r * ((sigma * u + d) / (2.0 * tau)).tanh();
    let curvature = |u: f64| {
        let c = 1.0 / ((sigma * u + d) / (2.0 * tau)).cosh();
        1.0 + 0.5 * r * r * c * c
    };
    let (mut lo, mut hi) = (-r, r);
    let mut u = 0.0_f64.clamp(lo, hi);
    for _ in 0..60 {
        let fu = f(u);
        if fu == 0.0 {
            break;
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - fu / curvature(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-12 * (1.0 + u.abs()) {
            u = next;
            break;
        }
        u = next;
    }
    (u, curvature(u).sqrt().recip())
}

/// Bayesian shrinkage of every detail coefficient with its level's MAD scale
/// and point-mass weight. Scaling coefficients pass through.
pub fn shrink_panel_level_dependent(
    coeffs: &DMatrix<f64>,
    plan: &TransformPlan,
    prior: &PriorConfig,
) -> Result<DMatrix<f64>> {
    prior.validate()?;
    let rule = GaussHermite::standard();
    let levels: Vec<(std::ops::Range<usize>, u32, f64)> = plan
        .detail_levels()
        .map(|j| Ok((plan.detail_range(j)?, j, prior.point_mass(j, plan.primary_level())?)))
        .collect::<Result<_>>()?;
    map_details(coeffs, plan, |block, j| {
        let (_, _, p) = levels[(j - plan.primary_level()) as usize];
        let sigma = mad_sigma(block);
        if !(sigma > 0.0 && sigma.is_finite()) {
            warn!("level {j}: MAD scale is {sigma}; leaving coefficients unchanged");
            return;
        }
        for d in block.iter_mut() {
            *d = shrink_unchecked(rule, *d, sigma, p, prior.tau);
        }
    })
}

/// `sign(d) · max(|d| − λ, 0)`.
pub fn soft_threshold(d: f64, lambda: f64) -> f64 {
    d.signum() * (d.abs() - lambda).max(0.0)
}

/// Per-level soft thresholding at `λ_j = σ̂_j √(2 log M)`.
pub fn universal_soft_threshold(coeffs: &DMatrix<f64>, plan: &TransformPlan) -> Result<DMatrix<f64>> {
    let factor = (2.0 * (plan.len() as f64).ln()).sqrt();
    map_details(coeffs, plan, |block, j| {
        let sigma = mad_sigma(block);
        if !(sigma > 0.0 && sigma.is_finite()) {
            warn!("level {j}: MAD scale is {sigma}; leaving coefficients unchanged");
            return;
        }
        let lambda = sigma * factor;
        for d in block.iter_mut() {
            *d = soft_threshold(*d, lambda);
        }
    })
}

fn map_details(
    coeffs: &DMatrix<f64>,
    plan: &TransformPlan,
    mut f: impl FnMut(&mut [f64], u32),
) -> Result<DMatrix<f64>> {
    if coeffs.nrows() != plan.len() {
        return Err(Error::invalid(format!(
            "coefficient panel has {} rows, plan expects {}",
            coeffs.nrows(),
            plan.len()
        )));
    }
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("coefficient panel contains non-finite values"));
    }
    let mut out = coeffs.clone();
    for mut col in out.column_iter_mut() {
        let col = col.as_mut_slice();
        for j in plan.detail_levels() {
            let range = plan.detail_range(j)?;
            f(&mut col[range], j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{dwt, WaveletFilter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Adaptive Simpson on [a, b].
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        recurse(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn normal_pdf(u: f64) -> f64 {
        (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn logistic(x: f64, tau: f64) -> f64 {
        let e = (-x / tau).exp();
        e / (tau * (1.0 + e) * (1.0 + e))
    }

    /// The rule written out literally, with both integrals done adaptively.
    fn oracle(d: f64, sigma: f64, p: f64, tau: f64) -> f64 {
        let num = adaptive_simpson(
            &|u| (sigma * u + d) * logistic(sigma * u + d, tau) * normal_pdf(u),
            -40.0,
            40.0,
            1e-14,
        );
        let slab = adaptive_simpson(&|u| logistic(sigma * u + d, tau) * normal_pdf(u), -40.0, 40.0, 1e-14);
        (1.0 - p) * num / (p / sigma * normal_pdf(d / sigma) + (1.0 - p) * slab)
    }

    #[test]
    fn logistic_density_values() {
        assert!((logistic_density(0.0, 1.0).unwrap() - 0.25).abs() < 1e-16);
        assert!(logistic_density(1.0, 0.0).is_err());
        for x in [0.3, 2.0, 17.5, 700.0] {
            assert_eq!(logistic_density(x, 3.0).unwrap(), logistic_density(-x, 3.0).unwrap());
        }
        let total = adaptive_simpson(&|x| logistic_density(x, 5.0).unwrap(), -200.0, 200.0, 1e-13);
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn level_rule_values() {
        assert_eq!(p_of_level(3, 3, 2.0).unwrap(), 0.0);
        assert_eq!(p_of_level(4, 3, 2.0).unwrap(), 0.75);
        assert_eq!(p_of_level(6, 3, 2.0).unwrap(), 0.9375);
        assert!(p_of_level(2, 3, 2.0).is_err());
        let mut last = -1.0;
        for j in 3..15 {
            let p = p_of_level(j, 3, 1.3).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn rule_fixes_zero_and_is_odd() {
        assert_eq!(shrink_coefficient(0.0, 1.0, 0.75, 5.0).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let d: f64 = rng.random_range(-20.0..20.0);
            let a = shrink_coefficient(d, 1.0, 0.75, 5.0).unwrap();
            let b = shrink_coefficient(-d, 1.0, 0.75, 5.0).unwrap();
            assert!((a + b).abs() < 1e-12);
        }
        assert!(shrink_coefficient(f64::NAN, 1.0, 0.5, 1.0).is_err());
        assert!(shrink_coefficient(f64::INFINITY, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn rule_matches_adaptive_quadrature() {
        let got = shrink_coefficient(3.0, 1.0, 0.75, 5.0).unwrap();
        let want = oracle(3.0, 1.0, 0.75, 5.0);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        for (d, s, p, t) in [(0.7, 0.5, 0.3, 1.0), (12.0, 2.0, 0.9, 10.0), (-4.0, 1.0, 0.5, 5.0)] {
            let got = shrink_coefficient(d, s, p, t).unwrap();
            let want = oracle(d, s, p, t);
            assert!((got - want).abs() < 1e-6, "{d} {s} {p} {t}: {got} vs {want}");
        }
    }

    #[test]
    fn rule_limits_in_p() {
        let near_one = shrink_coefficient(4.0, 1.0, 1.0 - 1e-12, 5.0).unwrap();
        assert!(near_one.abs() < 1e-6);
        let slab_only = oracle(4.0, 1.0, 0.0, 5.0);
        let near_zero = shrink_coefficient(4.0, 1.0, 1e-12, 5.0).unwrap();
        assert!((near_zero - slab_only).abs() < 1e-6);
    }

    #[test]
    fn shrinks_on_grid_and_is_stable() {
        let coarse = GaussHermite::standard();
        let fine = GaussHermite::new(128);
        for tau in [1.0, 5.0, 10.0] {
            for pi in 1..=9 {
                let p = pi as f64 / 10.0;
                for k in -100..=100 {
                    let d = k as f64 * 0.5;
                    let a = shrink_coefficient_with(coarse, d, 1.0, p, tau).unwrap();
                    assert!(a.abs() <= d.abs() + 1e-12, "d={d} p={p} tau={tau}: {a}");
                    let b = shrink_coefficient_with(&fine, d, 1.0, p, tau).unwrap();
                    assert!((a - b).abs() < 1e-8, "d={d} p={p} tau={tau}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn huge_coefficients_stay_finite() {
        let v = shrink_coefficient(1e6, 1.0, 0.5, 1.0).unwrap();
        assert!(v.is_finite() && v > 0.0 && v <= 1e6);
    }

    #[test]
    fn panel_zero_stays_zero() {
        let plan = TransformPlan::new(64, 3, WaveletFilter::Haar).unwrap();
        let z = DMatrix::zeros(64, 3);
        assert_eq!(
            shrink_panel_level_dependent(&z, &plan, &PriorConfig::default()).unwrap(),
            z
        );
        assert_eq!(universal_soft_threshold(&z, &plan).unwrap(), z);
    }

    #[test]
    fn panel_keeps_scaling_and_never_expands() {
        // periodic background plus one narrow bump: a few large details, tiny MAD
        // from level 4 on (the eight level-3 db8 wavelets all overlap the bump)
        let plan = TransformPlan::new(256, 4, WaveletFilter::Daubechies(8)).unwrap();
        let signal: Vec<f64> = crate::model::grid(256)
            .iter()
            .map(|t| {
                let tau = 2.0 * std::f64::consts::PI;
                10.0 * (tau * t).sin() + 5.0 * (tau * 2.0 * t).cos() + 20.0 * (-((t - 0.5) / 0.01).powi(2)).exp()
            })
            .collect();
        let c = dwt(&signal, &plan).unwrap();
        let d = DMatrix::from_column_slice(256, 1, c.values());
        let out = shrink_panel_level_dependent(&d, &plan, &PriorConfig::fixed(0.75, 5.0)).unwrap();
        for i in 0..256 {
            assert!(out[(i, 0)].abs() <= d[(i, 0)].abs() + 1e-12);
            if i < plan.scaling_len() {
                assert_eq!(out[(i, 0)], d[(i, 0)]);
            }
            if d[(i, 0)].abs() > 1.0 {
                assert!((out[(i, 0)] / d[(i, 0)] - 1.0).abs() < 0.05, "{i}");
            }
        }
    }

    #[test]
    fn panel_denoises_doppler() {
        // J0 = 5: coarser blocks of Doppler are all signal and their MAD is not a noise scale
        let m = 1024;
        let plan = TransformPlan::new(m, 5, WaveletFilter::Daubechies(8)).unwrap();
        let truth = crate::signals::dj_function(&crate::signals::TestSignalSpec::new(
            crate::signals::TestSignal::Doppler,
            m,
            Some(7.0),
        ))
        .unwrap();
        let theta = dwt(&truth, &plan).unwrap();
        let mut before = 0.0;
        let mut after = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<f64> = truth.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
            let d = DMatrix::from_column_slice(m, 1, dwt(&noisy, &plan).unwrap().values());
            let out = shrink_panel_level_dependent(&d, &plan, &PriorConfig::default()).unwrap();
            for i in 0..m {
                before += (d[(i, 0)] - theta.values()[i]).powi(2);
                after += (out[(i, 0)] - theta.values()[i]).powi(2);
            }
        }
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn soft_threshold_rule() {
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(3.0, 2.0), 1.0);
        assert_eq!(soft_threshold(-3.0, 2.0), -1.0);
    }

    #[test]
    fn universal_threshold_kills_pure_noise() {
        let m = 1024;
        let plan = TransformPlan::new(m, 3, WaveletFilter::Daubechies(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = DMatrix::from_fn(m, 20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let out = universal_soft_threshold(&d, &plan).unwrap();
        let details = (m - plan.scaling_len()) * 20;
        let zeros = (0..20)
            .flat_map(|n| (plan.scaling_len()..m).map(move |i| (i, n)))
            .filter(|&(i, n)| out[(i, n)] == 0.0)
            .count();
        assert!(zeros as f64 >= 0.95 * details as f64, "{zeros}/{details}");
    }

    #[test]
    fn rejects_wrong_shape() {
        let plan = TransformPlan::new(64, 3, WaveletFilter::Haar).unwrap();
        assert!(universal_soft_threshold(&DMatrix::zeros(32, 2), &plan).is_err());
        let bad = PriorConfig {
            p: Some(1.5),
            ..PriorConfig::default()
        };
        assert!(shrink_panel_level_dependent(&DMatrix::zeros(64, 1), &plan, &bad).is_err());
    }
}
