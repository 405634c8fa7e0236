//! Aggregation model `A = αy + ε` and the projection estimator
//! `Θ̂ = δ(D) y' (yy')⁻¹`, `α̂ = W'Θ̂`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::wavelet::TransformPlan;

/// Largest accepted condition number of `yy'`.
pub const MAX_WEIGHT_CONDITION: f64 = 1e12;

/// Default tolerance on weight column sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Equally spaced grid `t_m = m / M`, `m = 1..=M`.
pub fn grid(len: usize) -> Vec<f64> {
    (1..=len).map(|m| m as f64 / len as f64).collect()
}

fn check_power_of_two(rows: usize) -> Result<()> {
    if rows < 2 || !rows.is_power_of_two() {
        return Err(Error::invalid(format!(
            "number of grid points must be a power of two, got {rows}"
        )));
    }
    Ok(())
}

/// Observed aggregated curves: `M x N`, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPanel {
    values: DMatrix<f64>,
    grid: Vec<f64>,
}

impl AggregatedPanel {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_power_of_two(values.nrows())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("panel contains non-finite values"));
        }
        let grid = grid(values.nrows());
        Ok(Self { values, grid })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Number of grid points `M`.
    pub fn points(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.values.ncols()
    }
}

/// Known mixing weights `y`: `L x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates that every column lies on the simplex within [`SIMPLEX_TOLERANCE`].
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(values, SIMPLEX_TOLERANCE)
    }

    /// As [`WeightMatrix::new`] with an explicit column-sum tolerance.
    pub fn with_tolerance(values: DMatrix<f64>, tolerance: f64) -> Result<Self> {
        let weights = Self::unconstrained(values)?;
        for (n, col) in weights.values.column_iter().enumerate() {
            if let Some((l, v)) = col.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "weight ({}, {}) = {v} lies outside [0, 1]",
                    l + 1,
                    n + 1
                )));
            }
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::invalid(format!(
                    "weight column {} sums to {sum}, expected 1 (tolerance {tolerance:e})",
                    n + 1
                )));
            }
        }
        Ok(weights)
    }

    /// Any finite `L x N` matrix with `N >= L`; the projection only needs `yy'`
    /// to be invertible.
    pub fn unconstrained(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("weight matrix has no rows"));
        }
        if values.ncols() < values.nrows() {
            return Err(Error::invalid(format!(
                "need at least as many samples as components (N = {} < L = {})",
                values.ncols(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight matrix contains non-finite values"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of components `L`.
    pub fn components(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    /// Average weight vector over samples (length `L`).
    pub fn mean_column(&self) -> Vec<f64> {
        let n = self.samples() as f64;
        self.values.row_iter().map(|r| r.sum() / n).collect()
    }
}

/// Component curves `α`: `M x L`, one component per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    values: DMatrix<f64>,
    grid: Vec<f64>,
}

impl ComponentSet {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_power_of_two(values.nrows())?;
        let grid = grid(values.nrows());
        Ok(Self { values, grid })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::invalid("component columns have different lengths"));
        }
        let values = DMatrix::from_fn(m, columns.len(), |i, l| columns[l][i]);
        Self::new(values)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn points(&self) -> usize {
        self.values.nrows()
    }

    pub fn components(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.column(l).iter().copied().collect()
    }

    /// `Σ_l w_l α_l` for a weight vector of length `L`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let w = nalgebra::DVector::from_column_slice(weights);
        (&self.values * w).iter().copied().collect()
    }
}

/// `A = α·y + ε`.
pub fn aggregate_panel(
    components: &ComponentSet,
    weights: &WeightMatrix,
    noise: &DMatrix<f64>,
) -> Result<AggregatedPanel> {
    let (m, l) = components.values.shape();
    let (wl, n) = weights.values.shape();
    if l != wl || noise.shape() != (m, n) {
        return Err(Error::invalid(format!(
            "dimension mismatch: components {m}x{l}, weights {wl}x{n}, noise {}x{}",
            noise.nrows(),
            noise.ncols()
        )));
    }
    AggregatedPanel::new(&components.values * &weights.values + noise)
}

/// Least-squares projection of a (shrunk) coefficient panel onto the weight
/// rows: `D·y'·(yy')⁻¹`. Returns the `M x L` coefficient estimate.
pub fn project_components(shrunk: &DMatrix<f64>, weights: &WeightMatrix) -> Result<DMatrix<f64>> {
    let y = &weights.values;
    if shrunk.ncols() != y.ncols() {
        return Err(Error::invalid(format!(
            "coefficient panel has {} columns, weights have {}",
            shrunk.ncols(),
            y.ncols()
        )));
    }
    let gram = y * y.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_WEIGHT_CONDITION) {
        return Err(Error::IllConditionedWeights { condition });
    }
    let chol = Cholesky::new(gram).ok_or(Error::IllConditionedWeights { condition })?;
    // Θ̂' = (yy')⁻¹ (D y')'
    let rhs = (shrunk * y.transpose()).transpose();
    Ok(chol.solve(&rhs).transpose())
}

/// `D = W·A`, column by column.
pub fn transform_columns(panel: &DMatrix<f64>, plan: &TransformPlan) -> Result<DMatrix<f64>> {
    map_columns(panel, plan, |plan, col, out, scratch| {
        plan.forward_into(col, out, scratch)
    })
}

/// `W'·C`, column by column.
pub fn inverse_columns(coeffs: &DMatrix<f64>, plan: &TransformPlan) -> Result<DMatrix<f64>> {
    map_columns(coeffs, plan, |plan, col, out, scratch| {
        plan.inverse_into(col, out, scratch)
    })
}

fn map_columns(
    input: &DMatrix<f64>,
    plan: &TransformPlan,
    f: impl Fn(&TransformPlan, &[f64], &mut [f64], &mut [f64]),
) -> Result<DMatrix<f64>> {
    if input.nrows() != plan.len() {
        return Err(Error::invalid(format!(
            "matrix has {} rows, plan expects {}",
            input.nrows(),
            plan.len()
        )));
    }
    let mut out = DMatrix::zeros(input.nrows(), input.ncols());
    let mut scratch = vec![0.0; plan.len()];
    for (src, mut dst) in input.column_iter().zip(out.column_iter_mut()) {
        f(plan, src.as_slice(), dst.as_mut_slice(), &mut scratch);
    }
    Ok(out)
}

/// `α̂ = W'Θ̂`.
pub fn reconstruct_components(theta_hat: &DMatrix<f64>, plan: &TransformPlan) -> Result<ComponentSet> {
    ComponentSet::new(inverse_columns(theta_hat, plan)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::WaveletFilter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn simplex_weights(l: usize, n: usize, seed: u64) -> WeightMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = DMatrix::from_fn(l, n, |_, _| rng.random_range(0.05..1.0));
        for mut col in y.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        WeightMatrix::new(y).unwrap()
    }

    #[test]
    fn grid_is_right_closed() {
        assert_eq!(grid(4), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn single_component_no_noise() {
        let alpha = ComponentSet::new(random_matrix(8, 1, 1)).unwrap();
        let y = WeightMatrix::new(DMatrix::from_element(1, 5, 1.0)).unwrap();
        let a = aggregate_panel(&alpha, &y, &DMatrix::zeros(8, 5)).unwrap();
        for col in a.values().column_iter() {
            assert_eq!(col, alpha.values().column(0));
        }
    }

    #[test]
    fn half_half_is_average() {
        let alpha = ComponentSet::new(random_matrix(8, 2, 2)).unwrap();
        let y = WeightMatrix::new(DMatrix::from_element(2, 2, 0.5)).unwrap();
        let a = aggregate_panel(&alpha, &y, &DMatrix::zeros(8, 2)).unwrap();
        for i in 0..8 {
            let avg = 0.5 * (alpha.values()[(i, 0)] + alpha.values()[(i, 1)]);
            assert!((a.values()[(i, 0)] - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_matches_triple_loop() {
        let (m, l, n) = (32, 4, 50);
        let alpha = ComponentSet::new(random_matrix(m, l, 3)).unwrap();
        let y = simplex_weights(l, n, 4);
        let eps = random_matrix(m, n, 5);
        let a = aggregate_panel(&alpha, &y, &eps).unwrap();
        for mi in 0..m {
            for ni in 0..n {
                let mut s = 0.0;
                for li in 0..l {
                    s += y.values()[(li, ni)] * alpha.values()[(mi, li)];
                }
                s += eps[(mi, ni)];
                assert!((a.values()[(mi, ni)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_rejects_mismatch() {
        let alpha = ComponentSet::new(random_matrix(8, 2, 1)).unwrap();
        let y = simplex_weights(3, 5, 1);
        assert!(aggregate_panel(&alpha, &y, &DMatrix::zeros(8, 5)).is_err());
    }

    #[test]
    fn weight_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.45, 0.5, 0.45]);
        let err = WeightMatrix::new(bad).unwrap_err().to_string();
        assert!(err.contains("column 2"), "{err}");
        let neg = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, -0.5, 0.5]);
        assert!(WeightMatrix::new(neg).is_err());
        assert!(WeightMatrix::unconstrained(DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn projection_of_identical_columns_is_average() {
        let c = random_matrix(16, 1, 7);
        let d = DMatrix::from_fn(16, 10, |i, _| c[(i, 0)]);
        let y = WeightMatrix::new(DMatrix::from_element(1, 10, 1.0)).unwrap();
        let theta = project_components(&d, &y).unwrap();
        assert!((theta - c).abs().max() < 1e-14);
    }

    #[test]
    fn projection_recovers_exact_coefficients() {
        let theta = random_matrix(64, 3, 8);
        let y = WeightMatrix::unconstrained(random_matrix(3, 100, 9)).unwrap();
        let d = &theta * y.values();
        let got = project_components(&d, &y).unwrap();
        assert!((got - theta).abs().max() < 1e-8);
    }

    #[test]
    fn projection_rejects_rank_deficient_weights() {
        let mut y = simplex_weights(3, 20, 10).values().clone();
        let row = y.row(0).clone_owned();
        y.set_row(1, &row);
        let y = WeightMatrix::unconstrained(y).unwrap();
        let err = project_components(&DMatrix::zeros(8, 20), &y).unwrap_err();
        assert!(matches!(err, Error::IllConditionedWeights { condition } if condition > 1e12));
        assert!(err.to_string().contains("condition number"));
    }

    #[test]
    fn reconstruct_round_trip_and_zero() {
        let plan = TransformPlan::new(32, 3, WaveletFilter::Daubechies(4)).unwrap();
        let alpha = random_matrix(32, 3, 11);
        let theta = transform_columns(&alpha, &plan).unwrap();
        let back = reconstruct_components(&theta, &plan).unwrap();
        assert!((back.values() - &alpha).abs().max() < 1e-10);
        let zero = reconstruct_components(&DMatrix::zeros(32, 2), &plan).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(reconstruct_components(&DMatrix::zeros(16, 2), &plan).is_err());
    }

    #[test]
    fn noiseless_pipeline_is_exact() {
        let plan = TransformPlan::new(64, 3, WaveletFilter::Daubechies(8)).unwrap();
        let alpha = ComponentSet::new(random_matrix(64, 2, 12)).unwrap();
        let y = simplex_weights(2, 50, 13);
        let a = aggregate_panel(&alpha, &y, &DMatrix::zeros(64, 50)).unwrap();
        let d = transform_columns(a.values(), &plan).unwrap();
        let theta = project_components(&d, &y).unwrap();
        let est = reconstruct_components(&theta, &plan).unwrap();
        assert!((est.values() - alpha.values()).abs().max() < 1e-8);
    }

    #[test]
    fn permuting_components_permutes_estimates() {
        let theta = random_matrix(16, 3, 14);
        let y = simplex_weights(3, 30, 15);
        let d = &theta * y.values();
        let perm = [2usize, 0, 1];
        let y_perm = DMatrix::from_fn(3, 30, |l, n| y.values()[(perm[l], n)]);
        let y_perm = WeightMatrix::new(y_perm).unwrap();
        let a = project_components(&d, &y).unwrap();
        let b = project_components(&d, &y_perm).unwrap();
        for l in 0..3 {
            assert!((b.column(l) - a.column(perm[l])).abs().max() < 1e-10);
        }
    }

    proptest::proptest! {
        #[test]
        fn projection_is_linear(seed in 0u64..500, s in -5.0f64..5.0) {
            let y = simplex_weights(2, 12, seed);
            let d1 = random_matrix(8, 12, seed + 1);
            let d2 = random_matrix(8, 12, seed + 2);
            let combo = &d1 * s + &d2;
            let lhs = project_components(&combo, &y).unwrap();
            let rhs = project_components(&d1, &y).unwrap() * s + project_components(&d2, &y).unwrap();
            proptest::prop_assert!((lhs - rhs).abs().max() < 1e-9);
        }
    }
}
