//! Cylindrical functions F(eta) = f(<h_1, eta>, ..., <h_n, eta>), their
//! intrinsic and extrinsic derivatives, square fields, and Monte Carlo
//! estimators of the Gamma- and Dirichlet-side forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{
    divergence_term, gradient, BaseMeasure, GridFunction, GridVectorField, ManifoldGrid,
};
use crate::measure::AtomicMeasure;
use crate::sampling::{
    parallel_accumulate, DirichletMeasureSampler, DirichletMethod, GammaMeasureSampler,
    LevyTruncation,
};
use crate::stats::{Estimate, VectorAccumulator};

/// Outer functions with closed-form gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OuterFunction {
    Constant(f64),
    /// offset + sum c_i t_i
    Linear {
        coeffs: Vec<f64>,
        offset: f64,
    },
    /// c + b.t + t^T Q t with Q symmetric, row-major.
    Quadratic {
        q: Vec<f64>,
        b: Vec<f64>,
        c: f64,
    },
    /// prod t_i
    Product {
        arity: usize,
    },
    /// tanh(offset + sum c_i t_i)
    TanhLinear {
        coeffs: Vec<f64>,
        offset: f64,
    },
}

impl OuterFunction {
    pub fn arity(&self) -> Option<usize> {
        match self {
            OuterFunction::Constant(_) => None,
            OuterFunction::Linear { coeffs, .. } | OuterFunction::TanhLinear { coeffs, .. } => {
                Some(coeffs.len())
            }
            OuterFunction::Quadratic { b, .. } => Some(b.len()),
            OuterFunction::Product { arity } => Some(*arity),
        }
    }

    /// t^2 in one variable.
    pub fn square() -> Self {
        OuterFunction::Quadratic {
            q: vec![1.0],
            b: vec![0.0],
            c: 0.0,
        }
    }

    pub fn identity() -> Self {
        OuterFunction::Linear {
            coeffs: vec![1.0],
            offset: 0.0,
        }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        match self {
            OuterFunction::Constant(c) => *c,
            OuterFunction::Linear { coeffs, offset } => offset + dot(coeffs, t),
            OuterFunction::Quadratic { q, b, c } => {
                let n = b.len();
                let mut quad = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        quad += t[i] * q[i * n + j] * t[j];
                    }
                }
                c + dot(b, t) + quad
            }
            OuterFunction::Product { .. } => t.iter().product(),
            OuterFunction::TanhLinear { coeffs, offset } => (offset + dot(coeffs, t)).tanh(),
        }
    }

    pub fn gradient_into(&self, t: &[f64], out: &mut [f64]) {
        match self {
            OuterFunction::Constant(_) => out.iter_mut().for_each(|g| *g = 0.0),
            OuterFunction::Linear { coeffs, .. } => out.copy_from_slice(coeffs),
            OuterFunction::Quadratic { q, b, .. } => {
                let n = b.len();
                for i in 0..n {
                    let mut s = b[i];
                    for j in 0..n {
                        s += (q[i * n + j] + q[j * n + i]) * t[j];
                    }
                    out[i] = s;
                }
            }
            OuterFunction::Product { arity } => {
                for i in 0..*arity {
                    out[i] = (0..*arity).filter(|&j| j != i).map(|j| t[j]).product();
                }
            }
            OuterFunction::TanhLinear { coeffs, offset } => {
                let th = (offset + dot(coeffs, t)).tanh();
                let d = 1.0 - th * th;
                for (o, c) in out.iter_mut().zip(coeffs) {
                    *o = d * c;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// F = f(<h_1, .>, ..., <h_n, .>) with the node gradients of h_i cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalFunction {
    inner: Vec<GridFunction>,
    grads: Vec<GridFunction>,
    outer: OuterFunction,
}

/// Inner products, outer gradient and derivative values at one measure.
struct Jet {
    partials: Vec<f64>,
    /// mu(h_i) when the measure is normalized, else <h_i, eta> / eta(M).
    means: Vec<f64>,
}

impl CylindricalFunction {
    pub fn new(
        grid: &ManifoldGrid,
        inner: Vec<GridFunction>,
        outer: OuterFunction,
    ) -> Result<Self> {
        if inner.is_empty() {
            return Err(Error::Degenerate(
                "cylindrical function needs n >= 1".into(),
            ));
        }
        if let Some(k) = outer.arity() {
            if k != inner.len() {
                return Err(Error::Degenerate(format!(
                    "outer function takes {k} arguments, got {} inner functions",
                    inner.len()
                )));
            }
        }
        if inner.iter().any(|h| h.len() != grid.len()) {
            return Err(Error::Degenerate("inner function length mismatch".into()));
        }
        let grads = inner.iter().map(|h| gradient(grid, h)).collect();
        Ok(CylindricalFunction {
            inner,
            grads,
            outer,
        })
    }

    /// F0(eta) = eta(M).
    pub fn mass(grid: &ManifoldGrid) -> Self {
        Self::new(
            grid,
            vec![GridFunction::constant(grid.len(), 1.0)],
            OuterFunction::identity(),
        )
        .expect("valid")
    }

    /// F_h(eta) = eta(h).
    pub fn linear(grid: &ManifoldGrid, h: GridFunction) -> Result<Self> {
        Self::new(grid, vec![h], OuterFunction::identity())
    }

    pub fn constant(grid: &ManifoldGrid, c: f64) -> Self {
        Self::new(
            grid,
            vec![GridFunction::constant(grid.len(), 0.0)],
            OuterFunction::Constant(c),
        )
        .expect("valid")
    }

    pub fn inner(&self) -> &[GridFunction] {
        &self.inner
    }

    pub fn outer(&self) -> &OuterFunction {
        &self.outer
    }

    pub fn coordinates(&self, eta: &AtomicMeasure) -> Vec<f64> {
        self.inner.iter().map(|h| eta.pair(h)).collect()
    }

    fn jet(&self, eta: &AtomicMeasure) -> Jet {
        let t = self.coordinates(eta);
        let mut partials = vec![0.0; t.len()];
        self.outer.gradient_into(&t, &mut partials);
        let m = eta.total_mass();
        let means = if m > 0.0 {
            t.iter().map(|x| x / m).collect()
        } else {
            vec![0.0; t.len()]
        };
        Jet {
            partials,
            means,
        }
    }

    pub fn eval(&self, eta: &AtomicMeasure) -> f64 {
        self.outer.eval(&self.coordinates(eta))
    }

    fn ext_at(&self, jet: &Jet, node: usize) -> f64 {
        jet.partials
            .iter()
            .zip(&self.inner)
            .map(|(p, h)| p * h.at(node))
            .sum()
    }

    fn centered_at(&self, jet: &Jet, node: usize) -> f64 {
        jet.partials
            .iter()
            .zip(self.inner.iter().zip(&jet.means))
            .map(|(p, (h, m))| p * (h.at(node) - m))
            .sum()
    }

    fn int_at(&self, jet: &Jet, node: usize) -> f64 {
        jet.partials
            .iter()
            .zip(&self.grads)
            .map(|(p, g)| p * g.at(node))
            .sum()
    }

    /// Extrinsic derivative as a function on the whole grid.
    pub fn extrinsic_field(&self, eta: &AtomicMeasure) -> GridFunction {
        let jet = self.jet(eta);
        let n = self.inner[0].len();
        GridFunction::new((0..n).map(|i| self.ext_at(&jet, i)).collect())
    }

    /// Extrinsic derivative at each atom of `eta`.
    pub fn extrinsic_derivative(&self, eta: &AtomicMeasure) -> Vec<f64> {
        let jet = self.jet(eta);
        eta.atoms()
            .iter()
            .map(|a| self.ext_at(&jet, a.node))
            .collect()
    }

    /// Centered extrinsic derivative on the grid; mu must be a probability.
    pub fn centered_extrinsic_field(&self, mu: &AtomicMeasure) -> GridFunction {
        assert_normalized(mu);
        let jet = self.jet(mu);
        let n = self.inner[0].len();
        GridFunction::new((0..n).map(|i| self.centered_at(&jet, i)).collect())
    }

    pub fn centered_extrinsic_derivative(&self, mu: &AtomicMeasure) -> Vec<f64> {
        assert_normalized(mu);
        let jet = self.jet(mu);
        mu.atoms()
            .iter()
            .map(|a| self.centered_at(&jet, a.node))
            .collect()
    }

    /// Intrinsic derivative (coefficient of d/dx) at each atom.
    pub fn intrinsic_derivative(&self, eta: &AtomicMeasure) -> Vec<f64> {
        let jet = self.jet(eta);
        eta.atoms()
            .iter()
            .map(|a| self.int_at(&jet, a.node))
            .collect()
    }
}

fn assert_normalized(mu: &AtomicMeasure) {
    assert!(
        (mu.total_mass() - 1.0).abs() < 1e-9,
        "measure must be normalized, total mass {}",
        mu.total_mass()
    );
}

/// Square field with the plain extrinsic derivative, integrated against eta.
pub fn square_field_gamma(
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    eta: &AtomicMeasure,
    lambda: f64,
) -> f64 {
    let (jf, jg) = (f.jet(eta), g.jet(eta));
    eta.atoms()
        .iter()
        .map(|a| {
            let int = f.int_at(&jf, a.node) * g.int_at(&jg, a.node);
            let ext = f.ext_at(&jf, a.node) * g.ext_at(&jg, a.node);
            a.mass * (int + lambda * ext)
        })
        .sum()
}

/// Square field with centered extrinsic derivatives; mu must be a probability.
pub fn square_field_dirichlet(
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    mu: &AtomicMeasure,
    lambda: f64,
) -> f64 {
    assert_normalized(mu);
    let (jf, jg) = (f.jet(mu), g.jet(mu));
    mu.atoms()
        .iter()
        .map(|a| {
            let int = f.int_at(&jf, a.node) * g.int_at(&jg, a.node);
            let ext = f.centered_at(&jf, a.node) * g.centered_at(&jg, a.node);
            a.mass * (int + lambda * ext)
        })
        .sum()
}

/// Extrinsic-only centered square field with lambda = 1.
pub fn fleming_viot_field(
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    mu: &AtomicMeasure,
) -> f64 {
    assert_normalized(mu);
    let (jf, jg) = (f.jet(mu), g.jet(mu));
    mu.atoms()
        .iter()
        .map(|a| a.mass * f.centered_at(&jf, a.node) * g.centered_at(&jg, a.node))
        .sum()
}

/// Square field of H_F(eta) = eta(M) F(eta / eta(M)) and H_G at eta, using
/// the chain rule through the normalization map.
pub fn lifted_square_field(
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    eta: &AtomicMeasure,
    lambda: f64,
) -> f64 {
    let m = eta.total_mass();
    if m <= 0.0 {
        return 0.0;
    }
    let lift = |c: &CylindricalFunction| {
        let t = c.coordinates(eta);
        let mu_t: Vec<f64> = t.iter().map(|x| x / m).collect();
        let mut p = vec![0.0; t.len()];
        c.outer.gradient_into(&mu_t, &mut p);
        (c.outer.eval(&mu_t), p, t)
    };
    let (vf, pf, tf) = lift(f);
    let (vg, pg, tg) = lift(g);
    // d/d eta(x) of m f(t/m) = f + m sum p_i (h_i(x)/m - t_i/m^2).
    let ext = |c: &CylindricalFunction, v: f64, p: &[f64], t: &[f64], node: usize| -> f64 {
        v + m * p
            .iter()
            .zip(c.inner.iter().zip(t))
            .map(|(pi, (h, ti))| pi * (h.at(node) / m - ti / (m * m)))
            .sum::<f64>()
    };
    // Transport of atoms: m * sum p_i grad h_i(x) / m.
    let int = |c: &CylindricalFunction, p: &[f64], node: usize| -> f64 {
        m * p
            .iter()
            .zip(&c.grads)
            .map(|(pi, gr)| pi * gr.at(node) / m)
            .sum::<f64>()
    };
    eta.atoms()
        .iter()
        .map(|a| {
            let i = int(f, &pf, a.node) * int(g, &pg, a.node);
            let e = ext(f, vf, &pf, &tf, a.node) * ext(g, vg, &pg, &tg, a.node);
            a.mass * (i + lambda * e)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Gamma,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub seed: u64,
    pub samples: usize,
    pub trunc: LevyTruncation,
}

impl McConfig {
    pub fn new(seed: u64, samples: usize) -> Self {
        McConfig {
            seed,
            samples,
            trunc: LevyTruncation::default(),
        }
    }
}

// Stream offsets keep the two sides of an identity check independent.
const GAMMA_STREAMS: u64 = 0;
const DIRICHLET_STREAMS: u64 = 1 << 40;

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 2, got {n}"),
        });
    }
    Ok(())
}

/// Runs `obs` over `cfg.samples` draws of the chosen reference measure and
/// accumulates the returned k-vector.
pub fn mc_observe<O>(
    cfg: &McConfig,
    theta: &BaseMeasure,
    side: Side,
    k: usize,
    obs: O,
) -> VectorAccumulator
where
    O: Fn(&AtomicMeasure, &mut [f64]) + Sync,
{
    let gamma = GammaMeasureSampler::new(theta, cfg.trunc);
    let dir = DirichletMeasureSampler::new(theta, cfg.trunc, DirichletMethod::LevyNormalize);
    let base = match side {
        Side::Gamma => GAMMA_STREAMS,
        Side::Dirichlet => DIRICHLET_STREAMS,
    };
    parallel_accumulate(
        cfg.seed,
        base,
        cfg.samples,
        |rng, len, acc: &mut VectorAccumulator| {
            let mut buf = vec![0.0; k];
            for _ in 0..len {
                let eta = match side {
                    Side::Gamma => gamma.sample(rng),
                    Side::Dirichlet => dir.sample(rng),
                };
                obs(&eta, &mut buf);
                acc.push(&buf);
            }
        },
        |a, b| a.merge(&b),
    )
}

/// Monte Carlo estimate of the Gamma-side or Dirichlet-side form E(F, G).
pub fn mc_form(
    cfg: &McConfig,
    theta: &BaseMeasure,
    lambda: f64,
    f: &CylindricalFunction,
    g: &CylindricalFunction,
    side: Side,
) -> Result<Estimate> {
    check_n(cfg.samples)?;
    let acc = mc_observe(cfg, theta, side, 1, |eta, out| {
        out[0] = match side {
            Side::Gamma => square_field_gamma(f, g, eta, lambda),
            Side::Dirichlet => square_field_dirichlet(f, g, eta, lambda),
        };
    });
    Ok(acc.estimate(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: Estimate,
    pub second: Estimate,
    pub variance: Estimate,
}

fn moments_from(acc: &VectorAccumulator, i: usize, j: usize) -> MomentReport {
    let (m1, m2) = (acc.mean(i), acc.mean(j));
    let mut grad = vec![0.0; acc.dim()];
    grad[i] = -2.0 * m1;
    grad[j] = 1.0;
    MomentReport {
        mean: acc.estimate(i),
        second: acc.estimate(j),
        variance: acc.delta_method(m2 - m1 * m1, &grad),
    }
}

/// First and second moments of a functional under the chosen reference measure.
pub fn mc_functional_moments(
    cfg: &McConfig,
    theta: &BaseMeasure,
    f: &CylindricalFunction,
    side: Side,
) -> Result<MomentReport> {
    check_n(cfg.samples)?;
    let acc = mc_observe(cfg, theta, side, 2, |eta, out| {
        let v = f.eval(eta);
        out[0] = v;
        out[1] = v * v;
    });
    Ok(moments_from(&acc, 0, 1))
}

/// Moments of F_g(mu) = mu(g) under the Dirichlet measure.
pub fn mc_moments(cfg: &McConfig, theta: &BaseMeasure, g: &GridFunction) -> Result<MomentReport> {
    let f = CylindricalFunction::linear(theta.grid(), g.clone())?;
    mc_functional_moments(cfg, theta, &f, Side::Dirichlet)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighEstimate {
    pub form: Estimate,
    pub variance: Estimate,
    /// E(F, F) / Var(F) with a delta-method standard error.
    pub quotient: Estimate,
}

pub fn mc_rayleigh(
    cfg: &McConfig,
    theta: &BaseMeasure,
    lambda: f64,
    f: &CylindricalFunction,
    side: Side,
) -> Result<RayleighEstimate> {
    check_n(cfg.samples)?;
    let acc = mc_observe(cfg, theta, side, 3, |eta, out| {
        out[0] = match side {
            Side::Gamma => square_field_gamma(f, f, eta, lambda),
            Side::Dirichlet => square_field_dirichlet(f, f, eta, lambda),
        };
        let v = f.eval(eta);
        out[1] = v;
        out[2] = v * v;
    });
    let (e, m1, m2) = (acc.mean(0), acc.mean(1), acc.mean(2));
    let var = m2 - m1 * m1;
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "functional has zero sample variance".into(),
        ));
    }
    let grad = [1.0 / var, 2.0 * m1 * e / (var * var), -e / (var * var)];
    Ok(RayleighEstimate {
        form: acc.estimate(0),
        variance: moments_from(&acc, 1, 2).variance,
        quotient: acc.delta_method(e / var, &grad),
    })
}

/// Outcome of a Monte Carlo identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityCheck {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub z: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub config: BTreeMap<String, serde_json::Value>,
}

impl IdentityCheck {
    pub fn passes(&self, z_max: f64) -> bool {
        self.z.abs() < z_max
    }
}

/// E_G(F0 (F o Psi), F0 (G o Psi)) against
/// theta(M) E_D(F, G) + lambda theta(M) D(F G), from independent samples.
pub fn check_crucial_identity(
    cfg: &McConfig,
    theta: &BaseMeasure,
    lambda: f64,
    f: &CylindricalFunction,
    g: &CylindricalFunction,
) -> Result<IdentityCheck> {
    check_n(cfg.samples)?;
    let total = theta.total_mass();
    let lhs = mc_observe(cfg, theta, Side::Gamma, 1, |eta, out| {
        out[0] = lifted_square_field(f, g, eta, lambda);
    })
    .estimate(0);
    let rhs = mc_observe(cfg, theta, Side::Dirichlet, 1, |mu, out| {
        out[0] =
            total * (square_field_dirichlet(f, g, mu, lambda) + lambda * f.eval(mu) * g.eval(mu));
    })
    .estimate(0);
    Ok(IdentityCheck {
        lhs: lhs.value,
        lhs_stderr: lhs.stderr,
        rhs: rhs.value,
        rhs_stderr: rhs.stderr,
        z: lhs.z_against(&rhs),
        n: cfg.samples as u64,
        seed: cfg.seed,
        config: BTreeMap::new(),
    })
}

/// Integration by parts on the truncated class: E[d_v (F o psi_eps)] against
/// -E[(F o psi_eps) B_{eps,v}] over Gamma samples. Both sides are evaluated on
/// the same draws, so the z-score comes from the paired difference.
pub fn check_ibp(
    cfg: &McConfig,
    theta: &BaseMeasure,
    f: &CylindricalFunction,
    v: &GridVectorField,
    eps: f64,
) -> Result<IdentityCheck> {
    check_n(cfg.samples)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("truncation level must be positive, got {eps}"),
        });
    }
    let div = divergence_term(theta, v);
    let phi = v.values();
    let acc = mc_observe(cfg, theta, Side::Gamma, 3, |eta, out| {
        let kept = eta.truncate(eps);
        let t = f.coordinates(&kept);
        let mut p = vec![0.0; t.len()];
        f.outer.gradient_into(&t, &mut p);
        let mut lhs = 0.0;
        for (pi, gr) in p.iter().zip(&f.grads) {
            lhs += pi
                * kept
                    .atoms()
                    .iter()
                    .map(|a| a.mass * phi[a.node] * gr.at(a.node))
                    .sum::<f64>();
        }
        let b: f64 = kept.atoms().iter().map(|a| div.at(a.node)).sum();
        let rhs = -f.outer.eval(&t) * b;
        out[0] = lhs;
        out[1] = rhs;
        out[2] = lhs - rhs;
    });
    let (lhs, rhs, diff) = (acc.estimate(0), acc.estimate(1), acc.estimate(2));
    Ok(IdentityCheck {
        lhs: lhs.value,
        lhs_stderr: lhs.stderr,
        rhs: rhs.value,
        rhs_stderr: rhs.stderr,
        z: diff.z_to(0.0),
        n: cfg.samples as u64,
        seed: cfg.seed,
        config: BTreeMap::new(),
    })
}

/// Sample mean of a scalar observable under the chosen reference measure.
pub fn mc_scalar<O>(cfg: &McConfig, theta: &BaseMeasure, side: Side, obs: O) -> Estimate
where
    O: Fn(&AtomicMeasure) -> f64 + Sync,
{
    mc_observe(cfg, theta, side, 1, |eta, out| out[0] = obs(eta)).estimate(0)
}
