//! One-dimensional base manifolds (circle or interval), the base measure
//! theta = e^V dx, difference operators and the weighted Laplacian form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    Circle {
        length: f64,
    },
    /// Closed interval with reflecting ends.
    Interval {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldGrid {
    kind: GridKind,
    nodes: Vec<f64>,
    dx: f64,
}

impl ManifoldGrid {
    /// Nodes at 0, L/n, ..., (n-1)L/n with periodic adjacency.
    pub fn circle(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("circle length {length}")));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {n}"
            )));
        }
        let dx = length / n as f64;
        Ok(ManifoldGrid {
            kind: GridKind::Circle { length },
            nodes: (0..n).map(|i| i as f64 * dx).collect(),
            dx,
        })
    }

    /// Nodes at a, a+dx, ..., b.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidGrid(format!("interval [{a}, {b}]")));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {n}"
            )));
        }
        let dx = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * dx).collect();
        nodes[n - 1] = b;
        Ok(ManifoldGrid {
            kind: GridKind::Interval { a, b },
            nodes,
            dx,
        })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.kind, GridKind::Circle { .. })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    /// Nearest-neighbour edges; the circle includes the wraparound edge.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut e: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        if self.is_circle() {
            e.push((n - 1, 0));
        }
        e
    }

    /// Index of the node closest to `x` (periodic distance on the circle).
    pub fn nearest_node(&self, x: f64) -> usize {
        let n = self.len();
        match self.kind {
            GridKind::Circle { length } => {
                let t = x.rem_euclid(length) / self.dx;
                (t.round() as usize) % n
            }
            GridKind::Interval { a, .. } => {
                let t = ((x - a) / self.dx).round();
                t.clamp(0.0, (n - 1) as f64) as usize
            }
        }
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction::new(self.nodes.iter().map(|&x| f(x)).collect())
    }
}

/// Log-density presets for theta = e^V dx.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Zero,
    /// V(x) = amplitude * cos(x).
    Cosine {
        amplitude: f64,
    },
    Nodes(Vec<f64>),
}

impl Potential {
    fn values(&self, grid: &ManifoldGrid) -> Result<Vec<f64>> {
        let v = match self {
            Potential::Zero => vec![0.0; grid.len()],
            Potential::Cosine { amplitude } => {
                grid.nodes().iter().map(|x| amplitude * x.cos()).collect()
            }
            Potential::Nodes(v) => {
                if v.len() != grid.len() {
                    return Err(Error::InvalidGrid(format!(
                        "potential has {} values for {} nodes",
                        v.len(),
                        grid.len()
                    )));
                }
                v.clone()
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("potential must be finite".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    grid: ManifoldGrid,
    v: Vec<f64>,
    cell_mass: Vec<f64>,
    total_mass: f64,
}

impl BaseMeasure {
    /// Cell masses are e^{V_i} dx; on intervals the two end cells are half cells.
    pub fn new(grid: ManifoldGrid, potential: &Potential) -> Result<Self> {
        let v = potential.values(&grid)?;
        Ok(Self::from_parts(grid, v))
    }

    fn from_parts(grid: ManifoldGrid, v: Vec<f64>) -> Self {
        let n = grid.len();
        let dx = grid.spacing();
        let circle = grid.is_circle();
        let cell_mass: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, vi)| {
                let w = vi.exp() * dx;
                if !circle && (i == 0 || i == n - 1) {
                    0.5 * w
                } else {
                    w
                }
            })
            .collect();
        let total_mass = cell_mass.iter().sum();
        BaseMeasure {
            grid,
            v,
            cell_mass,
            total_mass,
        }
    }

    /// Shifts V by a constant so that the total mass becomes `mass`.
    pub fn with_total_mass(&self, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidMeasure(format!("total mass {mass}")));
        }
        let c = (mass / self.total_mass).ln();
        let v = self.v.iter().map(|x| x + c).collect();
        Ok(Self::from_parts(self.grid.clone(), v))
    }

    /// Adds `c` to V; every cell mass scales by e^c.
    pub fn shifted(&self, c: f64) -> Self {
        Self::from_parts(self.grid.clone(), self.v.iter().map(|x| x + c).collect())
    }

    pub fn grid(&self) -> &ManifoldGrid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.v
    }

    pub fn cell_masses(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.cell_mass.iter().map(|w| w / self.total_mass).collect()
    }

    pub fn integrate(&self, h: &GridFunction) -> f64 {
        assert_eq!(h.len(), self.grid.len(), "grid function length mismatch");
        h.values()
            .iter()
            .zip(&self.cell_mass)
            .map(|(a, w)| a * w)
            .sum()
    }

    pub fn mass_of(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.cell_mass[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        GridFunction { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        GridFunction::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridFunction, f: F) -> Self {
        assert_eq!(self.len(), other.len(), "grid function length mismatch");
        GridFunction::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

/// Coefficient phi of the vector field phi d/dx.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVectorField {
    values: Vec<f64>,
}

impl GridVectorField {
    pub fn new(grid: &ManifoldGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "vector field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !grid.is_circle() && (values[0] != 0.0 || values[values.len() - 1] != 0.0) {
            return Err(Error::InvalidGrid(
                "vector field must vanish at interval endpoints".into(),
            ));
        }
        Ok(GridVectorField { values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &ManifoldGrid, f: F) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_function(&self) -> GridFunction {
        GridFunction::new(self.values.clone())
    }
}

/// Central differences; periodic on the circle, one-sided at interval ends.
pub fn gradient(grid: &ManifoldGrid, h: &GridFunction) -> GridFunction {
    let n = grid.len();
    assert_eq!(h.len(), n, "grid function length mismatch");
    let dx = grid.spacing();
    let v = h.values();
    let out = (0..n)
        .map(|i| {
            if grid.is_circle() {
                (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * dx)
            } else if i == 0 {
                (v[1] - v[0]) / dx
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / dx
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * dx)
            }
        })
        .collect();
    GridFunction::new(out)
}

/// div(v) + <v, grad V> = phi' + phi V', discretized as the exact adjoint of
/// `gradient` in the cell-mass inner product: div_j = -(D^T (w phi))_j / w_j.
pub fn divergence_term(theta: &BaseMeasure, v: &GridVectorField) -> GridFunction {
    let grid = theta.grid();
    let n = grid.len();
    let dx = grid.spacing();
    let w = theta.cell_masses();
    let wphi: Vec<f64> = v.values().iter().zip(w).map(|(p, m)| p * m).collect();
    let mut dt = vec![0.0; n];
    for (i, &x) in wphi.iter().enumerate() {
        if grid.is_circle() {
            dt[(i + 1) % n] += x / (2.0 * dx);
            dt[(i + n - 1) % n] -= x / (2.0 * dx);
        } else if i == 0 {
            dt[1] += x / dx;
            dt[0] -= x / dx;
        } else if i == n - 1 {
            dt[n - 1] += x / dx;
            dt[n - 2] -= x / dx;
        } else {
            dt[i + 1] += x / (2.0 * dx);
            dt[i - 1] -= x / (2.0 * dx);
        }
    }
    GridFunction::new(dt.iter().zip(w).map(|(d, m)| -d / m).collect())
}

/// -(Delta + grad V . grad) applied node-wise through the form matrix: (A h)_i / w_i.
pub fn weighted_laplacian(theta: &BaseMeasure, h: &GridFunction) -> GridFunction {
    let p = build_theta_form(theta);
    let ah = p.apply_form(h.values());
    GridFunction::new(
        ah.iter()
            .zip(theta.cell_masses())
            .map(|(a, w)| -a / w)
            .collect(),
    )
}

/// Finite-volume matrix pair of the form int |h'|^2 dtheta.
pub fn build_theta_form(theta: &BaseMeasure) -> SpectralProblem {
    let grid = theta.grid();
    let dx = grid.spacing();
    let v = theta.potential();
    let edges = grid
        .edges()
        .into_iter()
        .map(|(i, j)| (i, j, (0.5 * (v[i] + v[j])).exp() / dx))
        .collect();
    SpectralProblem::new(
        edges,
        None,
        theta.cell_masses().to_vec(),
        "theta-form",
        grid.nodes().to_vec(),
    )
}
