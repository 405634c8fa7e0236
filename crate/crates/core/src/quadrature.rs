//! Gauss–Hermite rules for expectations under the standard normal density.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Node count used by the shrinkage rule.
pub const DEFAULT_NODES: usize = 64;

/// Nodes `u_i` and weights `w_i` with `Σ w_i f(u_i) ≈ ∫ f(u) φ(u) du`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes start from the Golub–Welsch eigenvalues of the Jacobi matrix and
    /// are polished by Newton steps on `He_n`. Weights come from
    /// `w_i = 1 / (n ψ_{n-1}(u_i)²)` with the orthonormal polynomials
    /// `ψ_k = He_k / √k!`, which keeps tiny tail weights accurate to full
    /// relative precision (eigenvector components do not).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);
        let mut pairs: Vec<(f64, f64)> = nodes
            .into_iter()
            .map(|mut u| {
                for _ in 0..4 {
                    let (pn, pm) = orthonormal_hermite(n, u);
                    let step = pn / ((n as f64).sqrt() * pm);
                    if !step.is_finite() {
                        break;
                    }
                    u -= step;
                }
                let (_, pm) = orthonormal_hermite(n, u);
                (u, 1.0 / (n as f64 * pm * pm))
            })
            .collect();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let node = 0.5 * (pairs[j].0 - pairs[i].0);
            let weight = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-node, weight);
            pairs[j] = (node, weight);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// Shared 64-node rule.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(DEFAULT_NODES))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}

/// `(ψ_n(u), ψ_{n-1}(u))` by the three-term recurrence.
fn orthonormal_hermite(n: usize, u: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (u * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}
