//! Eigensolvers for `SpectralProblem`: dense, shift-invert Lanczos on a
//! banded Cholesky factor, and Sturm bisection for chains.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::problem::SpectralProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Matching eigenvectors, normalized so that u^T B u = 1.
    pub vectors: Vec<Vec<f64>>,
    /// Largest relative residual |A u - k B u| / (|k| + 1) measured in the B^{-1} norm.
    pub residual: f64,
}

fn residual_of(p: &SpectralProblem, kappa: f64, u: &[f64]) -> f64 {
    let au = p.apply_form(u);
    let m = p.mass();
    let r: f64 = au
        .iter()
        .zip(u)
        .zip(m)
        .map(|((a, x), b)| {
            let r = a - kappa * b * x;
            r * r / b
        })
        .sum();
    r.sqrt() / (kappa.abs() + 1.0)
}

fn symmetric_scaled(p: &SpectralProblem) -> DMatrix<f64> {
    let mut c = p.dense_form();
    let s: Vec<f64> = p.mass().iter().map(|m| 1.0 / m.sqrt()).collect();
    let n = p.len();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] *= s[i] * s[j];
        }
    }
    c
}

pub fn dense_smallest(p: &SpectralProblem, k: usize) -> EigenPairs {
    let n = p.len();
    let k = k.min(n);
    let eig = SymmetricEigen::new(symmetric_scaled(p));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut residual: f64 = 0.0;
    for &idx in order.iter().take(k) {
        let kappa = eig.eigenvalues[idx];
        let u: Vec<f64> = (0..n)
            .map(|i| eig.eigenvectors[(i, idx)] / p.mass()[i].sqrt())
            .collect();
        residual = residual.max(residual_of(p, kappa, &u));
        values.push(kappa);
        vectors.push(u);
    }
    EigenPairs {
        values,
        vectors,
        residual,
    }
}

/// Reverse Cuthill-McKee ordering; returns `perm` with perm[new] = old.
pub fn reverse_cuthill_mckee(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !seen[i])
            .min_by_key(|&i| degree[i])
            .expect("unvisited node");
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| degree[w]);
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Lower Cholesky factor of a symmetric positive definite band matrix.
struct BandCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i][i-bw..=i] at offsets 0..=bw.
    l: Vec<f64>,
}

impl BandCholesky {
    fn factor(n: usize, bw: usize, mut band: Vec<f64>) -> Option<Self> {
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = band[i * w + (j + bw - i)];
                for k in k0..j {
                    sum -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    band[i * w + bw] = sum.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = sum / band[j * w + bw];
                }
            }
        }
        Some(BandCholesky { n, bw, l: band })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.l[k * w + (i + bw - k)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w + bw];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Shift-invert Lanczos with full reorthogonalization on
/// C = B^{-1/2} A B^{-1/2}. Reflecting problems have the constant vector
/// deflated and report eigenvalue 0 for it.
pub fn lanczos_smallest(p: &SpectralProblem, k: usize) -> Result<EigenPairs> {
    let n = p.len();
    let reflecting = !p.has_killing();
    let wanted = if reflecting { k.saturating_sub(1) } else { k };
    let perm = reverse_cuthill_mckee(n, p.edges());
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let bw = p
        .edges()
        .iter()
        .map(|&(i, j, _)| inv[i].abs_diff(inv[j]))
        .max()
        .unwrap_or(0);

    let mass = p.mass();
    let sqrt_b: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let diag = p.form_diagonal();
    let c_max = diag
        .iter()
        .zip(mass)
        .map(|(d, m)| d / m)
        .fold(0.0, f64::max);
    let delta = 1e-8 * c_max.max(1e-300);

    // Band of A + delta B in permuted order.
    let w = bw + 1;
    let mut band = vec![0.0; n * w];
    for old in 0..n {
        let i = inv[old];
        band[i * w + bw] = diag[old] + delta * mass[old];
    }
    for &(a, b, c) in p.edges() {
        let (i, j) = (inv[a].max(inv[b]), inv[a].min(inv[b]));
        band[i * w + (j + bw - i)] -= c;
    }
    let chol = BandCholesky::factor(n, bw, band).ok_or(Error::NotConverged {
        iterations: 0,
        residual: f64::NAN,
    })?;

    // y = B^{1/2} (A + delta B)^{-1} B^{1/2} x
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for old in 0..n {
            r[inv[old]] = sqrt_b[old] * x[old];
        }
        chol.solve(&mut r);
        (0..n).map(|old| sqrt_b[old] * r[inv[old]]).collect()
    };

    let mut locked: Vec<Vec<f64>> = Vec::new();
    if reflecting {
        let norm = mass.iter().sum::<f64>().sqrt();
        locked.push(sqrt_b.iter().map(|s| s / norm).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_705e);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    for l in &locked {
        let c = dot(l, &q);
        axpy(&mut q, -c, l);
    }
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);

    let max_steps = (n - locked.len()).min(600);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_res = f64::INFINITY;

    for step in 0..max_steps {
        let mut wv = apply(&basis[step]);
        let a = dot(&basis[step], &wv);
        axpy(&mut wv, -a, &basis[step]);
        if step > 0 {
            axpy(&mut wv, -beta[step - 1], &basis[step - 1]);
        }
        for _ in 0..2 {
            for l in &locked {
                let c = dot(l, &wv);
                axpy(&mut wv, -c, l);
            }
            for v in &basis {
                let c = dot(v, &wv);
                axpy(&mut wv, -c, v);
            }
        }
        alpha.push(a);
        let b = dot(&wv, &wv).sqrt();
        let m = alpha.len();
        let exhausted = b <= 1e-14 * a.abs().max(1e-300) || m == max_steps;
        if m >= wanted.max(1) && (m.is_multiple_of(5) || exhausted) {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = eig.eigenvalues[order[0]].abs();
            let mut worst: f64 = 0.0;
            for &idx in order.iter().take(wanted) {
                worst = worst.max(b * eig.eigenvectors[(m - 1, idx)].abs() / top);
            }
            last_res = worst;
            if worst < 1e-11 || exhausted {
                return Ok(finish(p, &basis, &eig, &order, wanted, delta, reflecting));
            }
        }
        if exhausted {
            break;
        }
        beta.push(b);
        basis.push(wv.iter().map(|x| x / b).collect());
    }
    Err(Error::NotConverged {
        iterations: alpha.len(),
        residual: last_res,
    })
}

fn finish(
    p: &SpectralProblem,
    basis: &[Vec<f64>],
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    order: &[usize],
    wanted: usize,
    delta: f64,
    reflecting: bool,
) -> EigenPairs {
    let n = p.len();
    let mass = p.mass();
    let m = eig.eigenvalues.len();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    if reflecting {
        let total: f64 = mass.iter().sum();
        values.push(0.0);
        vectors.push(vec![1.0 / total.sqrt(); n]);
    }
    for &idx in order.iter().take(wanted) {
        let theta = eig.eigenvalues[idx];
        let kappa = 1.0 / theta - delta;
        let mut y = vec![0.0; n];
        for (j, v) in basis.iter().enumerate().take(m) {
            axpy(&mut y, eig.eigenvectors[(j, idx)], v);
        }
        let u: Vec<f64> = y.iter().zip(mass).map(|(yi, b)| yi / b.sqrt()).collect();
        let norm = p.mass_inner(&u, &u).sqrt();
        values.push(kappa);
        vectors.push(u.iter().map(|x| x / norm).collect());
    }
    let residual = values
        .iter()
        .zip(&vectors)
        .map(|(&k, u)| residual_of(p, k, u))
        .fold(0.0, f64::max);
    EigenPairs {
        values,
        vectors,
        residual,
    }
}

/// Symmetric tridiagonal form of a chain problem (edges i -> i+1 only):
/// diagonal and off-diagonal of B^{-1/2} A B^{-1/2}.
pub fn chain_tridiagonal(p: &SpectralProblem) -> (Vec<f64>, Vec<f64>) {
    let n = p.len();
    let mut off = vec![0.0; n - 1];
    for &(i, j, c) in p.edges() {
        let (a, b) = (i.min(j), i.max(j));
        assert_eq!(b, a + 1, "not a chain problem: edge ({i}, {j})");
        off[a] -= c;
    }
    let m = p.mass();
    let diag: Vec<f64> = p
        .form_diagonal()
        .iter()
        .zip(m)
        .map(|(d, b)| d / b)
        .collect();
    let off = off
        .iter()
        .enumerate()
        .map(|(i, e)| e / (m[i] * m[i + 1]).sqrt())
        .collect();
    (diag, off)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = diag[0] - x;
    if d < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if d == 0.0 { f64::EPSILON } else { d };
        d = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues of a chain problem by Sturm bisection.
pub fn sturm_smallest(p: &SpectralProblem, k: usize) -> Vec<f64> {
    let (diag, off) = chain_tridiagonal(p);
    let n = diag.len();
    let mut hi: f64 = 0.0;
    for i in 0..n {
        let r = off.get(i).map_or(0.0, |e| e.abs()) + if i > 0 { off[i - 1].abs() } else { 0.0 };
        hi = hi.max(diag[i] + r);
    }
    let lo0 = diag
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d - off.get(i).map_or(0.0, |e| e.abs()) - if i > 0 { off[i - 1].abs() } else { 0.0 }
        })
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    (0..k.min(n))
        .map(|idx| {
            let (mut lo, mut up) = (lo0 - 1e-12, hi + 1e-12);
            for _ in 0..200 {
                let mid = 0.5 * (lo + up);
                if sturm_count(&diag, &off, mid) > idx {
                    up = mid;
                } else {
                    lo = mid;
                }
                if up - lo <= 1e-15 * up.abs().max(1e-300) {
                    break;
                }
            }
            0.5 * (lo + up)
        })
        .collect()
}
