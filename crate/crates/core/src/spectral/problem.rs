use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::eigen::{self, EigenPairs};

/// Below this size `gap` uses a dense symmetric eigensolver.
pub const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub label: String,
    /// Primary coordinate of each unknown (x, s or a flattened index).
    pub coordinates: Vec<f64>,
}

/// Generalized eigenproblem A u = kappa B u with A assembled from edge
/// conductances plus an optional nonnegative killing diagonal, B diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProblem {
    edges: Vec<(usize, usize, f64)>,
    killing: Vec<f64>,
    mass: Vec<f64>,
    meta: ProblemMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    /// Smallest eigenvalue; zero for reflecting problems.
    pub ground: f64,
    pub residual: f64,
    pub unknowns: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub max_row_sum: f64,
    pub min_mass: f64,
    pub min_conductance: f64,
    pub min_killing: f64,
}

impl SpectralProblem {
    pub fn new(
        edges: Vec<(usize, usize, f64)>,
        killing: Option<Vec<f64>>,
        mass: Vec<f64>,
        label: &str,
        coordinates: Vec<f64>,
    ) -> Self {
        let n = mass.len();
        assert!(n >= 2, "spectral problem needs at least 2 unknowns");
        for &(i, j, c) in &edges {
            assert!(i < n && j < n && i != j, "bad edge ({i}, {j})");
            assert!(c.is_finite() && c >= 0.0, "bad conductance {c}");
        }
        assert!(
            mass.iter().all(|&m| m > 0.0 && m.is_finite()),
            "mass entries must be positive"
        );
        let killing = killing.unwrap_or_else(|| vec![0.0; n]);
        assert_eq!(killing.len(), n);
        assert!(killing.iter().all(|&k| k >= 0.0 && k.is_finite()));
        SpectralProblem {
            edges,
            killing,
            mass,
            meta: ProblemMeta {
                label: label.to_string(),
                coordinates,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn killing(&self) -> &[f64] {
        &self.killing
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    pub fn has_killing(&self) -> bool {
        self.killing.iter().any(|&k| k > 0.0)
    }

    /// Diagonal of A.
    pub fn form_diagonal(&self) -> Vec<f64> {
        let mut d = self.killing.clone();
        for &(i, j, c) in &self.edges {
            d[i] += c;
            d[j] += c;
        }
        d
    }

    pub fn apply_form(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len());
        let mut out: Vec<f64> = self.killing.iter().zip(u).map(|(k, x)| k * x).collect();
        for &(i, j, c) in &self.edges {
            let f = c * (u[i] - u[j]);
            out[i] += f;
            out[j] -= f;
        }
        out
    }

    /// u^T A u as a sum of nonnegative terms.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let e: f64 = self
            .edges
            .iter()
            .map(|&(i, j, c)| c * (u[i] - u[j]).powi(2))
            .sum();
        e + self
            .killing
            .iter()
            .zip(u)
            .map(|(k, x)| k * x * x)
            .sum::<f64>()
    }

    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(u.iter().zip(v))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    pub fn mass_mean(&self, u: &[f64]) -> f64 {
        let total: f64 = self.mass.iter().sum();
        self.mass.iter().zip(u).map(|(m, x)| m * x).sum::<f64>() / total
    }

    pub fn rayleigh_quotient(&self, u: &[f64]) -> f64 {
        self.quadratic_form(u) / self.mass_inner(u, u)
    }

    /// Rayleigh quotient after removing the B-mean, i.e. the variational
    /// quotient that bounds the gap of a reflecting problem.
    pub fn centered_rayleigh_quotient(&self, u: &[f64]) -> f64 {
        let m = self.mass_mean(u);
        let c: Vec<f64> = u.iter().map(|x| x - m).collect();
        self.rayleigh_quotient(&c)
    }

    /// Multiplies A and B by c > 0.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0);
        SpectralProblem {
            edges: self.edges.iter().map(|&(i, j, w)| (i, j, c * w)).collect(),
            killing: self.killing.iter().map(|k| c * k).collect(),
            mass: self.mass.iter().map(|m| c * m).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn dense_form(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.killing[i];
        }
        for &(i, j, c) in &self.edges {
            a[(i, i)] += c;
            a[(j, j)] += c;
            a[(i, j)] -= c;
            a[(j, i)] -= c;
        }
        a
    }

    pub fn invariants(&self) -> InvariantReport {
        let ones = vec![1.0; self.len()];
        let a1 = self.apply_form(&ones);
        let max_row_sum = a1
            .iter()
            .zip(&self.killing)
            .map(|(r, k)| (r - k).abs())
            .fold(0.0, f64::max);
        InvariantReport {
            max_row_sum,
            min_mass: self.mass.iter().cloned().fold(f64::INFINITY, f64::min),
            min_conductance: self.edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min),
            min_killing: self.killing.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// The `k` smallest generalized eigenpairs, eigenvectors B-orthonormal.
    pub fn smallest_eigenpairs(&self, k: usize) -> Result<EigenPairs> {
        if self.len() <= DENSE_LIMIT {
            Ok(eigen::dense_smallest(self, k))
        } else {
            eigen::lanczos_smallest(self, k)
        }
    }

    /// Smallest eigenvalue with a killing term, second smallest otherwise.
    pub fn gap(&self) -> Result<GapResult> {
        let pairs = self.smallest_eigenpairs(2)?;
        Ok(self.gap_from(&pairs))
    }

    pub fn gap_from(&self, pairs: &EigenPairs) -> GapResult {
        let idx = if self.has_killing() { 0 } else { 1 };
        GapResult {
            gap: pairs.values[idx],
            ground: pairs.values[0],
            residual: pairs.residual,
            unknowns: self.len(),
            label: self.meta.label.clone(),
        }
    }
}
