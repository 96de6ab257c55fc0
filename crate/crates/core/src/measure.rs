//! Finite atomic measures on the grid, point configurations on the product
//! space M x (0, inf), and the maps between them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{GridFunction, ManifoldGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub node: usize,
    pub mass: f64,
}

/// Finite discrete measure with atoms snapped to grid nodes, kept sorted by
/// node with coincident atoms merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    total: f64,
}

impl AtomicMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| !(a.mass > 0.0 && a.mass.is_finite())) {
            return Err(Error::InvalidMeasure(format!(
                "atom at node {} has mass {}",
                a.node, a.mass
            )));
        }
        atoms.sort_by_key(|a| a.node);
        Ok(Self::from_sorted(atoms))
    }

    /// Atoms from (node, mass) pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(node, mass)| Atom { node, mass })
                .collect(),
        )
    }

    fn from_sorted(atoms: Vec<Atom>) -> Self {
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.node == a.node => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        let total = merged.iter().map(|a| a.mass).sum();
        AtomicMeasure {
            atoms: merged,
            total,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn merge(&self, other: &AtomicMeasure) -> AtomicMeasure {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        atoms.extend_from_slice(&self.atoms);
        atoms.extend_from_slice(&other.atoms);
        atoms.sort_by_key(|a| a.node);
        Self::from_sorted(atoms)
    }

    /// eta / eta(M); undefined at the zero measure.
    pub fn normalize(&self) -> Result<AtomicMeasure> {
        if self.is_empty() || self.total <= 0.0 {
            return Err(Error::ZeroMeasure);
        }
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|a| Atom {
                node: a.node,
                mass: a.mass / self.total,
            })
            .collect();
        let total = atoms.iter().map(|a| a.mass).sum();
        Ok(AtomicMeasure { atoms, total })
    }

    /// Keeps exactly the atoms of mass at least `eps`.
    pub fn truncate(&self, eps: f64) -> AtomicMeasure {
        assert!(eps > 0.0, "truncation level must be positive");
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .copied()
            .filter(|a| a.mass >= eps)
            .collect();
        let total = atoms.iter().map(|a| a.mass).sum();
        AtomicMeasure { atoms, total }
    }

    pub fn pair(&self, h: &GridFunction) -> f64 {
        self.atoms.iter().map(|a| a.mass * h.at(a.node)).sum()
    }

    pub fn partition_masses(&self, partition: &Partition) -> Vec<f64> {
        let mut out = vec![0.0; partition.len()];
        for a in &self.atoms {
            out[partition.cell_of(a.node)] += a.mass;
        }
        out
    }

    /// CSV with header `x,mass` and 17 significant digits.
    pub fn to_csv(&self, grid: &ManifoldGrid) -> String {
        let mut s = String::from("x,mass\n");
        for a in &self.atoms {
            let _ = writeln!(s, "{:.16e},{:.16e}", grid.nodes()[a.node], a.mass);
        }
        s
    }

    /// Parses the `to_csv` format, snapping locations to the nearest node.
    pub fn from_csv(text: &str, grid: &ManifoldGrid) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "x,mass" => {}
            other => {
                return Err(Error::InvalidMeasure(format!("bad CSV header {other:?}")));
            }
        }
        let mut atoms = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidMeasure(format!("bad CSV row {}", k + 2)))
            };
            let x = parse(parts.next())?;
            let mass = parse(parts.next())?;
            atoms.push(Atom {
                node: grid.nearest_node(x),
                mass,
            });
        }
        Self::new(atoms)
    }
}

/// Finite configuration of points (x, s) with s > 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointConfiguration {
    points: Vec<(usize, f64)>,
}

impl PointConfiguration {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
            return Err(Error::InvalidMeasure(format!("point mark s = {}", p.1)));
        }
        Ok(PointConfiguration { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn union(&self, other: &PointConfiguration) -> PointConfiguration {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PointConfiguration { points }
    }

    /// Sum of s_i.
    pub fn mark_sum(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    /// Pairing with the lifted function (x, s) -> s h(x).
    pub fn pair_lifted(&self, h: &GridFunction) -> f64 {
        self.points.iter().map(|&(x, s)| s * h.at(x)).sum()
    }
}

/// Sum s_i delta_{x_i}.
pub fn phi(gamma: &PointConfiguration) -> AtomicMeasure {
    let mut atoms: Vec<Atom> = gamma
        .points
        .iter()
        .map(|&(node, mass)| Atom { node, mass })
        .collect();
    atoms.sort_by_key(|a| a.node);
    AtomicMeasure::from_sorted(atoms)
}

/// Disjoint node sets covering the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl Partition {
    pub fn new(n_nodes: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidPartition("no cells".into()));
        }
        let mut cell_of = vec![usize::MAX; n_nodes];
        for (c, cell) in cells.iter().enumerate() {
            for &i in cell {
                if i >= n_nodes {
                    return Err(Error::InvalidPartition(format!("node {i} out of range")));
                }
                if cell_of[i] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("node {i} in two cells")));
                }
                cell_of[i] = c;
            }
        }
        if let Some(i) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!("node {i} not covered")));
        }
        Ok(Partition { cells, cell_of })
    }

    /// k consecutive runs of nodes of near-equal length.
    pub fn contiguous(n_nodes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n_nodes {
            return Err(Error::InvalidPartition(format!(
                "{k} cells for {n_nodes} nodes"
            )));
        }
        let cells = (0..k)
            .map(|c| (c * n_nodes / k..(c + 1) * n_nodes / k).collect())
            .collect();
        Self::new(n_nodes, cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_of(&self, node: usize) -> usize {
        self.cell_of[node]
    }

    pub fn indicator(&self, cell: usize) -> GridFunction {
        GridFunction::new(
            self.cell_of
                .iter()
                .map(|&c| if c == cell { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(p: &[(usize, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs(p).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert!(phi(&PointConfiguration::default()).is_empty());
        let two = phi(&PointConfiguration::new(vec![(3, 1.0), (7, 2.0)]).unwrap());
        assert_eq!(two.atoms(), m(&[(3, 1.0), (7, 2.0)]).atoms());
        assert_eq!(two.total_mass(), 3.0);
        let same = phi(&PointConfiguration::new(vec![(3, 1.0), (3, 2.0)]).unwrap());
        assert_eq!(same.atoms(), &[Atom { node: 3, mass: 3.0 }]);
    }

    #[test]
    fn normalize_examples() {
        let n = m(&[(0, 1.0), (1, 3.0)]).normalize().unwrap();
        assert_eq!(n.atoms()[0].mass, 0.25);
        assert_eq!(n.atoms()[1].mass, 0.75);
        let again = n.normalize().unwrap();
        for (a, b) in again.atoms().iter().zip(n.atoms()) {
            assert!((a.mass - b.mass).abs() < 1e-12);
        }
        assert_eq!(m(&[(4, 2.0)]).normalize().unwrap().atoms()[0].mass, 1.0);
        assert!(matches!(
            AtomicMeasure::zero().normalize(),
            Err(Error::ZeroMeasure)
        ));
    }

    #[test]
    fn truncate_examples() {
        let eta = m(&[(0, 0.5), (1, 2.0)]);
        assert_eq!(eta.truncate(1.0).atoms(), &[Atom { node: 1, mass: 2.0 }]);
        assert!(eta.truncate(5.0).is_empty());
        assert_eq!(eta.truncate(0.1), eta);
    }

    #[test]
    fn pair_examples() {
        let eta = m(&[(0, 0.5), (2, 2.0)]);
        let one = GridFunction::constant(3, 1.0);
        assert_eq!(eta.pair(&one), 2.5);
        let h = GridFunction::new(vec![0.0, 0.0, 3.0]);
        assert_eq!(m(&[(2, 2.0)]).pair(&h), 6.0);
        let mu = eta.normalize().unwrap();
        assert!((mu.pair(&h) - eta.pair(&h) / 2.5).abs() < 1e-14);
    }

    #[test]
    fn partition_examples() {
        let eta = m(&[(0, 1.0), (1, 2.0)]);
        let whole = Partition::contiguous(2, 1).unwrap();
        assert_eq!(eta.partition_masses(&whole), vec![3.0]);
        let split = Partition::new(2, vec![vec![0], vec![1]]).unwrap();
        assert_eq!(eta.partition_masses(&split), vec![1.0, 2.0]);
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let grid = ManifoldGrid::circle(1.0, 10).unwrap();
        let eta = m(&[(1, 0.123456789012345678), (9, 2.5)]);
        let text = eta.to_csv(&grid);
        assert!(text.starts_with("x,mass\n"));
        let back = AtomicMeasure::from_csv(&text, &grid).unwrap();
        assert_eq!(back, eta);
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(AtomicMeasure::from_pairs(&[(0, 0.0)]).is_err());
        assert!(AtomicMeasure::from_pairs(&[(0, -1.0)]).is_err());
        assert!(PointConfiguration::new(vec![(0, 0.0)]).is_err());
    }
}
