//! Periodized orthonormal discrete wavelet transform.
//!
//! Coefficients of a length `M = 2^J` signal are stored coarse to fine:
//! the `2^J0` scaling coefficients first, then one detail block per level
//! `j = J0, ..., J-1`. Detail block `j` has length `2^j` and starts at
//! offset `2^j`, so level lookups never need a side table.

mod filters;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::median;

/// Largest signal length for which [`build_transform_matrix`] will allocate.
pub const MAX_MATRIX_LEN: usize = 4096;

/// Normal-consistency constant of the MAD scale estimator.
pub const MAD_CONSTANT: f64 = 0.6745;

/// Orthonormal filter used by a [`TransformPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletFilter {
    Haar,
    /// Daubechies filter with the given number of vanishing moments (1..=10).
    Daubechies(u8),
    /// `W = I`. Only useful as a test hook: the layout is kept, nothing is mixed.
    Identity,
}

impl Default for WaveletFilter {
    fn default() -> Self {
        WaveletFilter::Daubechies(8)
    }
}

impl WaveletFilter {
    pub fn lowpass(&self) -> &'static [f64] {
        match *self {
            WaveletFilter::Haar => filters::DAUBECHIES[0],
            WaveletFilter::Daubechies(n) => filters::DAUBECHIES[usize::from(n) - 1],
            WaveletFilter::Identity => &[],
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            WaveletFilter::Daubechies(n) if !(1..=10).contains(&n) => Err(Error::invalid(format!(
                "Daubechies filters exist for 1..=10 vanishing moments, got {n}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for WaveletFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaveletFilter::Haar => f.write_str("haar"),
            WaveletFilter::Daubechies(n) => write!(f, "db{n}"),
            WaveletFilter::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for WaveletFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let filter = match lower.as_str() {
            "haar" => WaveletFilter::Haar,
            "identity" => WaveletFilter::Identity,
            other => {
                let digits = other
                    .strip_prefix("daubechies")
                    .or_else(|| other.strip_prefix("db"))
                    .map(|d| d.trim_start_matches('-'))
                    .ok_or_else(|| Error::invalid(format!("unknown wavelet filter `{s}`")))?;
                let n: u8 = digits
                    .parse()
                    .map_err(|_| Error::invalid(format!("unknown wavelet filter `{s}`")))?;
                WaveletFilter::Daubechies(n)
            }
        };
        filter.validate()?;
        Ok(filter)
    }
}

impl Serialize for WaveletFilter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WaveletFilter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Immutable description of one transform: length, primary level and filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPlan {
    len: usize,
    levels: u32,
    primary_level: u32,
    filter: WaveletFilter,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl TransformPlan {
    pub fn new(len: usize, primary_level: u32, filter: WaveletFilter) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "signal length must be a power of two >= 2, got {len}"
            )));
        }
        let levels = len.trailing_zeros();
        if primary_level >= levels {
            return Err(Error::invalid(format!(
                "primary resolution level {primary_level} must be below J = log2({len}) = {levels}"
            )));
        }
        filter.validate()?;
        let lowpass = filter.lowpass().to_vec();
        let n = lowpass.len();
        let highpass = (0..n)
            .map(|k| {
                let v = lowpass[n - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        Ok(Self {
            len,
            levels,
            primary_level,
            filter,
            lowpass,
            highpass,
        })
    }

    /// Signal length `M`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `J = log2(M)`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// `J0`.
    pub fn primary_level(&self) -> u32 {
        self.primary_level
    }

    pub fn filter(&self) -> WaveletFilter {
        self.filter
    }

    /// Number of scaling coefficients, `2^J0`.
    pub fn scaling_len(&self) -> usize {
        1 << self.primary_level
    }

    /// Index range of detail block `j` inside a coefficient vector.
    pub fn detail_range(&self, level: u32) -> Result<std::ops::Range<usize>> {
        if level < self.primary_level || level >= self.levels {
            return Err(Error::invalid(format!(
                "level {level} outside detail range {}..={}",
                self.primary_level,
                self.levels - 1
            )));
        }
        let start = 1usize << level;
        Ok(start..2 * start)
    }

    /// Resolution level of coefficient index `i`, or `None` for scaling coefficients.
    pub fn level_of(&self, index: usize) -> Option<u32> {
        if index < self.scaling_len() {
            None
        } else {
            Some(usize::BITS - 1 - index.leading_zeros())
        }
    }

    pub fn detail_levels(&self) -> std::ops::Range<u32> {
        self.primary_level..self.levels
    }

    fn check_len(&self, got: usize, what: &str) -> Result<()> {
        if got != self.len {
            return Err(Error::invalid(format!(
                "{what} length {got} does not match plan length {}",
                self.len
            )));
        }
        Ok(())
    }

    /// Forward transform of `signal` into `out`. `scratch` must hold `M` values.
    pub fn forward_into(&self, signal: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(signal.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        if self.filter == WaveletFilter::Identity {
            out.copy_from_slice(signal);
            return;
        }
        let scratch = &mut scratch[..self.len];
        scratch.copy_from_slice(signal);
        let stop = self.scaling_len();
        let taps = self.lowpass.len();
        let mut len = self.len;
        while len > stop {
            let half = len / 2;
            for k in 0..half {
                let mut a = 0.0;
                let mut d = 0.0;
                for n in 0..taps {
                    let x = scratch[(2 * k + n) % len];
                    a += self.lowpass[n] * x;
                    d += self.highpass[n] * x;
                }
                out[k] = a;
                out[half + k] = d;
            }
            scratch[..half].copy_from_slice(&out[..half]);
            len = half;
        }
        out[..stop].copy_from_slice(&scratch[..stop]);
    }

    /// Inverse transform of `coeffs` into `out`. `scratch` must hold `M` values.
    pub fn inverse_into(&self, coeffs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        if self.filter == WaveletFilter::Identity {
            out.copy_from_slice(coeffs);
            return;
        }
        let taps = self.lowpass.len();
        let scratch = &mut scratch[..self.len];
        let mut len = self.scaling_len();
        out[..len].copy_from_slice(&coeffs[..len]);
        while len < self.len {
            let next = 2 * len;
            scratch[..next].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..len {
                let a = out[k];
                let d = coeffs[len + k];
                for n in 0..taps {
                    scratch[(2 * k + n) % next] += self.lowpass[n] * a + self.highpass[n] * d;
                }
            }
            out[..next].copy_from_slice(&scratch[..next]);
            len = next;
        }
    }
}

/// Wavelet coefficients of one signal, in the coarse-to-fine layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    values: Vec<f64>,
    primary_level: u32,
}

impl CoefficientVector {
    pub fn new(values: Vec<f64>, plan: &TransformPlan) -> Result<Self> {
        plan.check_len(values.len(), "coefficient vector")?;
        Ok(Self {
            values,
            primary_level: plan.primary_level,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn primary_level(&self) -> u32 {
        self.primary_level
    }

    pub fn scaling(&self) -> &[f64] {
        &self.values[..1 << self.primary_level]
    }

    pub fn detail(&self, level: u32) -> Result<&[f64]> {
        let levels = self.values.len().trailing_zeros();
        if level < self.primary_level || level >= levels {
            return Err(Error::invalid(format!(
                "level {level} outside detail range {}..={}",
                self.primary_level,
                levels - 1
            )));
        }
        let start = 1usize << level;
        Ok(&self.values[start..2 * start])
    }
}

/// Forward DWT: returns `W·signal`.
pub fn dwt(signal: &[f64], plan: &TransformPlan) -> Result<CoefficientVector> {
    plan.check_len(signal.len(), "signal")?;
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("signal contains non-finite values"));
    }
    let mut out = vec![0.0; plan.len];
    let mut scratch = vec![0.0; plan.len];
    plan.forward_into(signal, &mut out, &mut scratch);
    Ok(CoefficientVector {
        values: out,
        primary_level: plan.primary_level,
    })
}

/// Inverse DWT: returns `W'·coeffs`.
pub fn idwt(coeffs: &CoefficientVector, plan: &TransformPlan) -> Result<Vec<f64>> {
    plan.check_len(coeffs.len(), "coefficient vector")?;
    if coeffs.primary_level != plan.primary_level {
        return Err(Error::invalid(format!(
            "coefficient layout has J0 = {}, plan has J0 = {}",
            coeffs.primary_level, plan.primary_level
        )));
    }
    let mut out = vec![0.0; plan.len];
    let mut scratch = vec![0.0; plan.len];
    plan.inverse_into(&coeffs.values, &mut out, &mut scratch);
    Ok(out)
}

/// Materializes `W` by transforming unit vectors: column `i` is `dwt(e_i)`,
/// so `W·x = dwt(x)`.
pub fn build_transform_matrix(plan: &TransformPlan) -> Result<DMatrix<f64>> {
    let m = plan.len;
    if m > MAX_MATRIX_LEN {
        return Err(Error::ResourceLimit(format!(
            "refusing to build a {m}x{m} transform matrix (limit {MAX_MATRIX_LEN})"
        )));
    }
    let mut w = DMatrix::zeros(m, m);
    let mut unit = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut col = vec![0.0; m];
    for i in 0..m {
        unit[i] = 1.0;
        plan.forward_into(&unit, &mut col, &mut scratch);
        w.column_mut(i).copy_from_slice(&col);
        unit[i] = 0.0;
    }
    Ok(w)
}

/// Robust noise scale of detail block `level`: `median(|d_jk|) / 0.6745`.
pub fn mad_sigma_level(coeffs: &CoefficientVector, level: u32) -> Result<f64> {
    let block = coeffs.detail(level)?;
    Ok(mad_sigma(block))
}

pub(crate) fn mad_sigma(block: &[f64]) -> f64 {
    let mut abs: Vec<f64> = block.iter().map(|v| v.abs()).collect();
    median(&mut abs) / MAD_CONSTANT
}
