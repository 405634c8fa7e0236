//! Donoho–Johnstone test signals sampled on `t_m = m / M`.
//!
//! Knot locations, heights and widths follow the published definitions in
//! Donoho & Johnstone, "Ideal spatial adaptation by wavelet shrinkage",
//! Biometrika 81 (1994).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::grid;
use crate::stats;

/// Conventional amplitude normalization.
pub const DEFAULT_TARGET_SD: f64 = 7.0;

const KNOTS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCK_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMP_HEIGHTS: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMP_WIDTHS: [f64; 11] = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSignal {
    Bumps,
    Blocks,
    Doppler,
    Heavisine,
}

impl TestSignal {
    pub const ALL: [TestSignal; 4] = [
        TestSignal::Bumps,
        TestSignal::Blocks,
        TestSignal::Doppler,
        TestSignal::Heavisine,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestSignal::Bumps => "bumps",
            TestSignal::Blocks => "blocks",
            TestSignal::Doppler => "doppler",
            TestSignal::Heavisine => "heavisine",
        }
    }

    /// Closed-form value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TestSignal::Blocks => KNOTS
                .iter()
                .zip(BLOCK_HEIGHTS)
                .map(|(&k, h)| h * 0.5 * (1.0 + sgn(t - k)))
                .sum(),
            TestSignal::Bumps => KNOTS
                .iter()
                .zip(BUMP_HEIGHTS.iter().zip(BUMP_WIDTHS))
                .map(|(&k, (&h, w))| h * (1.0 + ((t - k) / w).abs()).powi(-4))
                .sum(),
            TestSignal::Heavisine => 4.0 * (4.0 * std::f64::consts::PI * t).sin() - sgn(t - 0.3) - sgn(0.72 - t),
            TestSignal::Doppler => {
                const EPS: f64 = 0.05;
                (t * (1.0 - t)).max(0.0).sqrt() * (2.0 * std::f64::consts::PI * (1.0 + EPS) / (t + EPS)).sin()
            }
        }
    }
}

/// `sgn` with `sgn(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for TestSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestSignal::ALL
            .into_iter()
            .find(|sig| sig.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown test signal `{s}` (expected one of: bumps, blocks, doppler, heavisine)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSignalSpec {
    pub signal: TestSignal,
    pub len: usize,
    pub target_sd: Option<f64>,
}

impl TestSignalSpec {
    pub fn new(signal: TestSignal, len: usize, target_sd: Option<f64>) -> Self {
        Self { signal, len, target_sd }
    }
}

pub fn dj_function(spec: &TestSignalSpec) -> Result<Vec<f64>> {
    if spec.len < 2 || !spec.len.is_power_of_two() {
        return Err(Error::invalid(format!(
            "signal length must be a power of two, got {}",
            spec.len
        )));
    }
    let values: Vec<f64> = grid(spec.len).into_iter().map(|t| spec.signal.eval(t)).collect();
    match spec.target_sd {
        Some(sd) => rescale_to_sd(&values, sd),
        None => Ok(values),
    }
}

/// Multiplies `signal` so its sample standard deviation becomes `target_sd`.
pub fn rescale_to_sd(signal: &[f64], target_sd: f64) -> Result<Vec<f64>> {
    if !(target_sd > 0.0 && target_sd.is_finite()) {
        return Err(Error::invalid(format!("target sd must be positive, got {target_sd}")));
    }
    let current = stats::sd(signal);
    if !(current > 0.0) {
        return Err(Error::invalid("cannot rescale a constant signal"));
    }
    let factor = target_sd / current;
    Ok(signal.iter().map(|v| v * factor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn raw(signal: TestSignal, len: usize) -> Vec<f64> {
        dj_function(&TestSignalSpec::new(signal, len, None)).unwrap()
    }

    #[test]
    fn heavisine_midpoint() {
        assert!((TestSignal::Heavisine.eval(0.5) + 2.0).abs() < 1e-14);
        let v = raw(TestSignal::Heavisine, 512);
        assert!((v[255] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn bumps_nonnegative() {
        assert!(raw(TestSignal::Bumps, 2048).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn blocks_piecewise_constant() {
        // a dyadic grid lands exactly on the knot at 0.25, giving a half step
        let v = raw(TestSignal::Blocks, 1024);
        let jumps = v.windows(2).filter(|w| w[1] != w[0]).count();
        assert_eq!(jumps, 12);
        let v: Vec<f64> = (1..=1000)
            .map(|m| TestSignal::Blocks.eval(m as f64 / 1000.0 + 1e-6))
            .collect();
        assert_eq!(v.windows(2).filter(|w| w[1] != w[0]).count(), 11);
    }

    #[test]
    fn dyadic_refinement() {
        for sig in [TestSignal::Blocks, TestSignal::Heavisine] {
            let coarse = raw(sig, 512);
            let fine = raw(sig, 2048);
            for (m, v) in coarse.iter().enumerate() {
                assert_eq!(*v, fine[4 * m + 3]);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for sig in TestSignal::ALL {
            assert_eq!(sig.name().parse::<TestSignal>().unwrap(), sig);
        }
        let err = "spikes".parse::<TestSignal>().unwrap_err().to_string();
        assert!(err.contains("heavisine"));
    }

    #[test]
    fn rescaling() {
        let v = raw(TestSignal::Doppler, 256);
        let s = stats::sd(&v);
        let same = rescale_to_sd(&v, s).unwrap();
        for (a, b) in v.iter().zip(&same) {
            assert!((a - b).abs() < 1e-15);
        }
        let doubled = rescale_to_sd(&v, 2.0 * s).unwrap();
        for (a, b) in v.iter().zip(&doubled) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..5.0)).collect();
        assert!((stats::sd(&rescale_to_sd(&r, 7.0).unwrap()) - 7.0).abs() < 1e-10);
        assert!(rescale_to_sd(&[1.0; 4], 1.0).is_err());
        assert!(rescale_to_sd(&v, 0.0).is_err());
    }

    #[test]
    fn normalized_signal_has_target_sd() {
        for sig in TestSignal::ALL {
            let v = dj_function(&TestSignalSpec::new(sig, 512, Some(DEFAULT_TARGET_SD))).unwrap();
            assert!((stats::sd(&v) - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(raw(TestSignal::Bumps, 64), raw(TestSignal::Bumps, 64));
        assert!(dj_function(&TestSignalSpec::new(TestSignal::Bumps, 100, None)).is_err());
    }
}
