//! Finite-volume assembly of the one-particle, Laguerre and Jacobi
//! problems, plus the closed-form Rayleigh-quotient certificates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::{build_theta_form, gradient, BaseMeasure, GridFunction};
use crate::special::{
    beta_inc, beta_inc_upper, expint_e1, gamma_p, gamma_q, integrate_to_inf, ln_beta, ln_gamma,
};

use super::problem::SpectralProblem;

/// Boundary condition at the lower mass cutoff s_min.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SBoundary {
    /// Zero flux.
    Reflecting,
    /// Functions pinned to 0 at s_min.
    Absorbing,
}

/// Truncated product grid of M x [s_min, s_max] with log-spaced masses.
#[derive(Debug, Clone, PartialEq)]
pub struct HatGrid {
    theta: BaseMeasure,
    s_nodes: Vec<f64>,
    boundary: SBoundary,
    /// Dual-cell edges in s, one more than `s_nodes`.
    s_edges: Vec<f64>,
}

pub const DEFAULT_S_MIN: f64 = 1e-3;
pub const DEFAULT_S_MAX: f64 = 40.0;
pub const DEFAULT_S_NODES: usize = 200;

impl HatGrid {
    pub fn new(
        theta: &BaseMeasure,
        s_min: f64,
        s_max: f64,
        n_s: usize,
        boundary: SBoundary,
    ) -> Result<Self> {
        if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) {
            return Err(invalid("s_range", format!("need 0 < s_min < s_max, got [{s_min}, {s_max}]")));
        }
        if n_s < 3 {
            return Err(invalid("s_nodes", format!("need at least 3, got {n_s}")));
        }
        let ratio = (s_max / s_min).ln();
        let mut s_nodes: Vec<f64> = (0..n_s)
            .map(|j| s_min * (ratio * j as f64 / (n_s - 1) as f64).exp())
            .collect();
        s_nodes[n_s - 1] = s_max;
        let mut s_edges = Vec::with_capacity(n_s + 1);
        s_edges.push(s_min);
        for j in 1..n_s {
            s_edges.push(0.5 * (s_nodes[j - 1] + s_nodes[j]));
        }
        s_edges.push(s_max);
        Ok(HatGrid {
            theta: theta.clone(),
            s_nodes,
            boundary,
            s_edges,
        })
    }

    pub fn with_defaults(theta: &BaseMeasure) -> Self {
        Self::new(theta, DEFAULT_S_MIN, DEFAULT_S_MAX, DEFAULT_S_NODES, SBoundary::Absorbing)
            .expect("default truncation is valid")
    }

    pub fn theta(&self) -> &BaseMeasure {
        &self.theta
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn boundary(&self) -> SBoundary {
        self.boundary
    }

    /// First s-index carrying an unknown.
    fn first_active(&self) -> usize {
        match self.boundary {
            SBoundary::Reflecting => 0,
            SBoundary::Absorbing => 1,
        }
    }

    pub fn active_s_nodes(&self) -> &[f64] {
        &self.s_nodes[self.first_active()..]
    }

    /// int over the dual cell of s^{-1} e^{-s} ds.
    fn s_mass(&self, j: usize) -> f64 {
        expint_e1(self.s_edges[j]) - expint_e1(self.s_edges[j + 1])
    }

    /// int over the dual cell of s^{-2} e^{-s} ds.
    fn s_mass_inverse_square(&self, j: usize) -> f64 {
        let anti = |s: f64| expint_e1(s) - (-s).exp() / s;
        anti(self.s_edges[j + 1]) - anti(self.s_edges[j])
    }

    /// Cell weights s^{-1} e^{-s} ds theta(dx) of the unknowns, s-major order.
    pub fn weights(&self) -> Vec<f64> {
        let cells = self.theta.cell_masses();
        (self.first_active()..self.s_nodes.len())
            .flat_map(|j| {
                let m = self.s_mass(j);
                cells.iter().map(move |w| w * m)
            })
            .collect()
    }

    pub fn unknowns(&self) -> usize {
        (self.s_nodes.len() - self.first_active()) * self.theta.grid().len()
    }
}

/// Form int [lambda (d_s f)^2 e^{-s} + s^{-2} e^{-s} |grad_x f|^2 e^V] ds dx
/// with mass s^{-1} e^{-s} ds theta(dx).
pub fn build_one_particle_problem(hat: &HatGrid, lambda: f64) -> SpectralProblem {
    assert!(lambda > 0.0, "lambda must be positive");
    let theta = hat.theta();
    let grid = theta.grid();
    let nx = grid.len();
    let cells = theta.cell_masses();
    let v = theta.potential();
    let dx = grid.spacing();
    let first = hat.first_active();
    let ns = hat.s_nodes.len();
    let idx = |j: usize, i: usize| (j - first) * nx + i;
    let n = hat.unknowns();
    let mut edges = Vec::new();
    let mut killing = vec![0.0; n];

    for j in first..ns {
        let xs = hat.s_mass_inverse_square(j);
        for (a, b) in grid.edges() {
            let c = xs * (0.5 * (v[a] + v[b])).exp() / dx;
            edges.push((idx(j, a), idx(j, b), c));
        }
    }
    for j in 0..ns - 1 {
        let (s0, s1) = (hat.s_nodes[j], hat.s_nodes[j + 1]);
        let base = lambda * (-0.5 * (s0 + s1)).exp() / (s1 - s0);
        for (i, w) in cells.iter().enumerate() {
            let c = base * w;
            if j + 1 == first {
                // Edge to the pinned boundary node.
                killing[idx(j + 1, i)] += c;
            } else if j >= first {
                edges.push((idx(j, i), idx(j + 1, i), c));
            }
        }
    }
    let coords = (first..ns)
        .flat_map(|j| std::iter::repeat_n(hat.s_nodes[j], nx))
        .collect();
    let killing = (hat.boundary == SBoundary::Absorbing).then_some(killing);
    SpectralProblem::new(edges, killing, hat.weights(), "one-particle", coords)
}

/// Node samples of a function of s (constant in x) on the unknowns of `hat`.
pub fn lift_s_function<F: Fn(f64) -> f64>(hat: &HatGrid, f: F) -> Vec<f64> {
    let nx = hat.theta().grid().len();
    hat.active_s_nodes()
        .iter()
        .flat_map(|&s| std::iter::repeat_n(f(s), nx))
        .collect()
}

/// Discrete Rayleigh quotient of the slow mode: s - s_min under the absorbing
/// boundary, the B-centered s + 1 under the reflecting one.
pub fn slow_mode_quotient(hat: &HatGrid, problem: &SpectralProblem) -> f64 {
    match hat.boundary() {
        SBoundary::Absorbing => {
            let s_min = hat.s_nodes()[0];
            problem.rayleigh_quotient(&lift_s_function(hat, |s| s - s_min))
        }
        SBoundary::Reflecting => {
            problem.centered_rayleigh_quotient(&lift_s_function(hat, |s| s + 1.0))
        }
    }
}

/// Generator in normal coordinates as written with the extra first-order term:
/// lambda s (f_ss - f_s) - lambda f_s + s^{-1} (Delta + grad V) f.
pub fn stated_generator(lambda: f64, s: f64, f_s: f64, f_ss: f64, x_part: f64) -> f64 {
    lambda * s * (f_ss - f_s) - lambda * f_s + x_part / s
}

/// Generator of the one-particle form with respect to s^{-1} e^{-s} ds theta(dx):
/// lambda s (f_ss - f_s) + s^{-1} (Delta + grad V) f.
pub fn form_generator(lambda: f64, s: f64, f_s: f64, f_ss: f64, x_part: f64) -> f64 {
    lambda * s * (f_ss - f_s) + x_part / s
}

fn dual_edges(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(nodes[0]);
    for j in 1..n {
        e.push(0.5 * (nodes[j - 1] + nodes[j]));
    }
    e.push(nodes[n - 1]);
    e
}

/// One-cell extrinsic projection: lambda int s f'(s)^2 gamma_r(ds) on [0, s_max].
pub fn build_laguerre_problem(lambda: f64, r: f64, s_max: f64, n: usize) -> Result<SpectralProblem> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(r > 0.0) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    if !(s_max > 0.0) || n < 3 {
        return Err(invalid("grid", format!("s_max {s_max}, nodes {n}")));
    }
    let ds = s_max / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|j| j as f64 * ds).collect();
    let edges_s = dual_edges(&nodes);
    let lg = ln_gamma(r);
    let mass = (0..n)
        .map(|j| {
            let (a, b) = (edges_s[j], edges_s[j + 1]);
            if b <= r {
                gamma_p(r, b) - gamma_p(r, a)
            } else {
                gamma_q(r, a) - gamma_q(r, b)
            }
        })
        .collect::<Vec<f64>>();
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidGrid(
            "Gamma cell mass underflows; reduce s_max".into(),
        ));
    }
    let edges = (0..n - 1)
        .map(|j| {
            let s = 0.5 * (nodes[j] + nodes[j + 1]);
            let c = lambda * (r * s.ln() - s - lg).exp() / ds;
            (j, j + 1, c)
        })
        .collect();
    Ok(SpectralProblem::new(edges, None, mass, "laguerre", nodes))
}

/// Two-cell Fleming-Viot projection: lambda int x(1-x) f'(x)^2 Beta(a1, a2)(dx).
pub fn build_jacobi_problem(lambda: f64, a1: f64, a2: f64, n: usize) -> Result<SpectralProblem> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got ({a1}, {a2})")));
    }
    if n < 3 {
        return Err(invalid("nodes", format!("need at least 3, got {n}")));
    }
    let dx = 1.0 / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|j| j as f64 * dx).collect();
    let e = dual_edges(&nodes);
    let lb = ln_beta(a1, a2);
    let mass: Vec<f64> = (0..n)
        .map(|j| {
            let (a, b) = (e[j], e[j + 1]);
            if b <= 0.5 {
                beta_inc(a1, a2, b) - beta_inc(a1, a2, a)
            } else {
                beta_inc_upper(a1, a2, a) - beta_inc_upper(a1, a2, b)
            }
        })
        .collect();
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidGrid("Beta cell mass underflows".into()));
    }
    let edges = (0..n - 1)
        .map(|j| {
            let x = 0.5 * (nodes[j] + nodes[j + 1]);
            let c = lambda * (a1 * x.ln() + a2 * (1.0 - x).ln() - lb).exp() / dx;
            (j, j + 1, c)
        })
        .collect();
    Ok(SpectralProblem::new(edges, None, mass, "jacobi", nodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KklCertificate {
    /// lambda theta(M) + theta(|grad h|^2) (theta(M) + 1) for the normalized h.
    pub rayleigh_quotient: f64,
    /// The same expression with theta(|grad h|^2) replaced by lambda_theta.
    pub upper_bound_at_optimal_h: f64,
    /// lambda theta(M).
    pub lower_bound: f64,
    pub lambda_theta: f64,
    pub grad_energy: f64,
}

/// Centers and normalizes h in L^2(theta) and evaluates the Rayleigh quotient
/// of F_h for the Dirichlet-side form in closed form.
pub fn kkl_certificate(theta: &BaseMeasure, lambda: f64, h: &GridFunction) -> Result<KklCertificate> {
    let h = normalize_test_function(theta, h)?;
    let total = theta.total_mass();
    let gh = gradient(theta.grid(), &h);
    let grad_energy = theta.integrate(&gh.map(|v| v * v));
    let lambda_theta = build_theta_form(theta).gap()?.gap;
    Ok(KklCertificate {
        rayleigh_quotient: lambda * total + grad_energy * (total + 1.0),
        upper_bound_at_optimal_h: lambda * total + lambda_theta * (total + 1.0),
        lower_bound: lambda * total,
        lambda_theta,
        grad_energy,
    })
}

/// h - theta(h)/theta(M), scaled so that theta(h^2) = 1.
pub fn normalize_test_function(theta: &BaseMeasure, h: &GridFunction) -> Result<GridFunction> {
    let mean = theta.integrate(h) / theta.total_mass();
    let c = h.map(|v| v - mean);
    let norm2 = theta.integrate(&c.map(|v| v * v));
    if !(norm2 > 1e-300) {
        return Err(Error::Degenerate("test function is constant on the grid".into()));
    }
    let s = norm2.sqrt();
    Ok(c.map(|v| v / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RppCheck {
    pub eps: f64,
    pub form_value: f64,
    pub mass_value: f64,
    pub quotient: f64,
}

/// Rayleigh quotient of (s - eps)^+ for the one-particle form, by quadrature.
pub fn rpp_quadrature_check(theta: &BaseMeasure, lambda: f64, eps: f64) -> Result<RppCheck> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    let total = theta.total_mass();
    let form_value = lambda * total * integrate_to_inf(|s| (-s).exp(), eps, 1e-14);
    let mass_value =
        total * integrate_to_inf(|s| (s - eps) * (s - eps) * (-s).exp() / s, eps, 1e-14);
    Ok(RppCheck {
        eps,
        form_value,
        mass_value,
        quotient: form_value / mass_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldGrid, Potential};
    use std::f64::consts::PI;

    fn circle(n: usize) -> BaseMeasure {
        BaseMeasure::new(ManifoldGrid::circle(2.0 * PI, n).unwrap(), &Potential::Zero).unwrap()
    }

    #[test]
    fn hat_grid_weights_are_positive() {
        let hat = HatGrid::with_defaults(&circle(8));
        let w = hat.weights();
        assert_eq!(w.len(), hat.unknowns());
        assert!(w.iter().all(|&x| x > 0.0));
        assert!(HatGrid::new(&circle(8), 0.0, 1.0, 10, SBoundary::Reflecting).is_err());
    }

    #[test]
    fn inverse_square_cell_integral() {
        let hat = HatGrid::new(&circle(4), 0.01, 5.0, 12, SBoundary::Reflecting).unwrap();
        for j in [0, 5, 11] {
            let (a, b) = (hat.s_edges[j], hat.s_edges[j + 1]);
            let q = crate::special::integrate(|s| (-s).exp() / (s * s), a, b, 1e-14);
            assert!((q - hat.s_mass_inverse_square(j)).abs() < 1e-9 * q);
        }
    }

    #[test]
    fn generator_formulas_on_slow_modes() {
        for lambda in [0.5, 1.0, 2.0] {
            let v = stated_generator(lambda, 2.0, 1.0, 0.0, 0.0);
            assert!((v + 3.0 * lambda).abs() < 1e-14);
            let w = form_generator(lambda, 2.0, 1.0, 0.0, 0.0);
            assert!((w + 2.0 * lambda).abs() < 1e-14);
        }
    }

    #[test]
    fn form_generator_is_symmetric_in_s() {
        // int f (L g) s^{-1} e^{-s} ds = -lambda int f' g' e^{-s} ds for x-constant f, g.
        let lambda = 1.3;
        let f = |s: f64| (s * s, 2.0 * s);
        // g = s e^{-s/2}: first and second derivatives.
        let g = |s: f64| ((-0.5 * s).exp() * (1.0 - 0.5 * s), (-0.5 * s).exp() * (0.25 * s - 1.0));
        let lhs = integrate_to_inf(
            |s| {
                let (gs, gss) = g(s);
                f(s).0 * form_generator(lambda, s, gs, gss, 0.0) * (-s).exp() / s
            },
            0.0,
            1e-13,
        );
        let rhs = -lambda * integrate_to_inf(|s| f(s).1 * g(s).0 * (-s).exp(), 0.0, 1e-13);
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn rpp_examples() {
        let theta = circle(16).with_total_mass(1.0).unwrap();
        let r = rpp_quadrature_check(&theta, 1.0, 0.5).unwrap();
        assert!((r.form_value - (-0.5f64).exp()).abs() < 1e-10);
        let closed = 1.0 / (1.0 - 0.5 + 0.25 * 0.5f64.exp() * expint_e1(0.5));
        assert!((r.quotient - closed).abs() < 1e-10);
        assert!(rpp_quadrature_check(&theta, 1.0, 1.5).is_err());
    }

    #[test]
    fn laguerre_small_grid_matches_sturm() {
        let p = build_laguerre_problem(1.0, 1.0, 30.0, 300).unwrap();
        let d = p.smallest_eigenpairs(3).unwrap();
        let s = super::super::eigen::sturm_smallest(&p, 3);
        for i in 0..3 {
            assert!((d.values[i] - s[i]).abs() < 1e-8 * s[i].max(1.0));
        }
    }

    #[test]
    fn kkl_rejects_constant() {
        let theta = circle(16);
        assert!(kkl_certificate(&theta, 1.0, &GridFunction::constant(16, 2.0)).is_err());
    }
}
