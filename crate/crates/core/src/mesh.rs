//! Uniform cell meshes over a bounding box of the domain.
//!
//! Cells are squares (intervals in 1D) of side `h`. A cell carries a degree
//! of freedom only if it lies entirely in the closed domain; cells cut by the
//! boundary count as exterior, so discrete functions vanish outside Ω.

use serde::{Deserialize, Serialize};

use crate::error::{NonlocalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Self {
        Domain::Interval { a, b }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Domain::Ball { center, radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain::Interval { a, b } => a.is_finite() && b.is_finite() && b > a,
            Domain::Box { lo, hi } => {
                !lo.is_empty()
                    && lo.len() == hi.len()
                    && lo.iter().zip(hi).all(|(l, h)| l.is_finite() && h.is_finite() && h > l)
            }
            Domain::Ball { center, radius } => {
                !center.is_empty() && center.iter().all(|c| c.is_finite()) && radius.is_finite() && *radius > 0.0
            }
        };
        if !ok {
            return Err(NonlocalError::domain(format!("degenerate domain {self:?}")));
        }
        if !(1..=2).contains(&self.dim()) {
            return Err(NonlocalError::domain("only dimensions 1 and 2 are supported"));
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Interval { a, b } => (vec![*a], vec![*b]),
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Domain::Ball { center, radius } => match center.len() {
                1 => 2.0 * radius,
                _ => std::f64::consts::PI * radius * radius,
            },
        }
    }

    /// Signed distance to the complement: positive inside, ≤ 0 outside.
    pub fn depth(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Domain::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((l, h), v)| (v - l).min(h - v))
                .fold(f64::INFINITY, f64::min),
            Domain::Ball { center, radius } => {
                let d: f64 = center.iter().zip(x).map(|(c, v)| (v - c).powi(2)).sum::<f64>().sqrt();
                radius - d
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.depth(x) > 0.0
    }

    /// Distance from `x` (inside) to the boundary along the unit direction
    /// `dir`. The domain is convex so the ray leaves it exactly once.
    pub fn exit_distance(&self, x: &[f64], dir: &[f64]) -> f64 {
        match self {
            Domain::Interval { a, b } => {
                if dir[0] > 0.0 {
                    (b - x[0]) / dir[0]
                } else {
                    (a - x[0]) / dir[0]
                }
            }
            Domain::Box { lo, hi } => {
                let mut t = f64::INFINITY;
                for i in 0..x.len() {
                    if dir[i] > 0.0 {
                        t = t.min((hi[i] - x[i]) / dir[i]);
                    } else if dir[i] < 0.0 {
                        t = t.min((lo[i] - x[i]) / dir[i]);
                    }
                }
                t
            }
            Domain::Ball { center, radius } => {
                // |x - c + t d|² = R²
                let p: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let pd: f64 = p.iter().zip(dir).map(|(a, b)| a * b).sum();
                let pp: f64 = p.iter().map(|a| a * a).sum();
                -pd + (pd * pd - pp + radius * radius).max(0.0).sqrt()
            }
        }
    }

    /// Largest radius of a ball contained in the domain.
    pub fn inradius(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => 0.5 * (b - a),
            Domain::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    /// Classifies the closed cell `[lo, lo + h]^N`.
    fn classify(&self, lo: &[f64], h: f64) -> CellClass {
        let tol = 1e-12 * h;
        match self {
            Domain::Interval { .. } | Domain::Box { .. } => {
                let (blo, bhi) = self.bounding_box();
                let inside = (0..lo.len()).all(|i| lo[i] >= blo[i] - tol && lo[i] + h <= bhi[i] + tol);
                let disjoint = (0..lo.len()).any(|i| lo[i] >= bhi[i] - tol || lo[i] + h <= blo[i] + tol);
                if inside {
                    CellClass::Interior
                } else if disjoint {
                    CellClass::Exterior
                } else {
                    CellClass::BoundaryCut
                }
            }
            Domain::Ball { center, radius } => {
                let mut far2 = 0.0;
                let mut near2 = 0.0;
                for i in 0..lo.len() {
                    let (a, b) = (lo[i] - center[i], lo[i] + h - center[i]);
                    far2 += a.abs().max(b.abs()).powi(2);
                    let nearest = if a > 0.0 {
                        a
                    } else if b < 0.0 {
                        b
                    } else {
                        0.0
                    };
                    near2 += nearest * nearest;
                }
                if far2.sqrt() <= radius + tol {
                    CellClass::Interior
                } else if near2.sqrt() >= radius - tol {
                    CellClass::Exterior
                } else {
                    CellClass::BoundaryCut
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Interior,
    BoundaryCut,
    Exterior,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Domain,
    h: f64,
    origin: Vec<f64>,
    counts: Vec<usize>,
    classes: Vec<CellClass>,
    dof_of_cell: Vec<Option<usize>>,
    cell_of_dof: Vec<usize>,
}

impl Mesh {
    /// Uniform mesh with `n_per_axis` cells along the longest side of the
    /// bounding box; shorter sides get as many cells of the same size as
    /// needed to cover them.
    pub fn build(domain: &Domain, n_per_axis: usize) -> Result<Self> {
        domain.validate()?;
        if n_per_axis < 2 {
            return Err(NonlocalError::domain(format!(
                "need at least 2 cells per axis, got {n_per_axis}"
            )));
        }
        let (lo, hi) = domain.bounding_box();
        let extent = lo.iter().zip(&hi).map(|(l, u)| u - l).fold(0.0, f64::max);
        let h = extent / n_per_axis as f64;
        let mut origin = Vec::with_capacity(lo.len());
        let mut counts = Vec::with_capacity(lo.len());
        for (l, u) in lo.iter().zip(&hi) {
            let n = (((u - l) / h) - 1e-9).ceil().max(1.0) as usize;
            // center the covering cells on the box
            origin.push(0.5 * (l + u) - 0.5 * n as f64 * h);
            counts.push(n);
        }
        let total: usize = counts.iter().product();
        let mut classes = Vec::with_capacity(total);
        let mut dof_of_cell = Vec::with_capacity(total);
        let mut cell_of_dof = Vec::new();
        let mut mesh = Self {
            domain: domain.clone(),
            h,
            origin,
            counts,
            classes: Vec::new(),
            dof_of_cell: Vec::new(),
            cell_of_dof: Vec::new(),
        };
        for cell in 0..total {
            let corner: Vec<f64> = mesh.cell_corner(cell);
            let class = domain.classify(&corner, h);
            classes.push(class);
            if class == CellClass::Interior {
                dof_of_cell.push(Some(cell_of_dof.len()));
                cell_of_dof.push(cell);
            } else {
                dof_of_cell.push(None);
            }
        }
        mesh.classes = classes;
        mesh.dof_of_cell = dof_of_cell;
        mesh.cell_of_dof = cell_of_dof;
        Ok(mesh)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn cell_size(&self) -> f64 {
        self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_cells(&self) -> usize {
        self.classes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.cell_of_dof.len()
    }

    pub fn class(&self, cell: usize) -> CellClass {
        self.classes[cell]
    }

    pub fn dof_of_cell(&self, cell: usize) -> Option<usize> {
        self.dof_of_cell[cell]
    }

    pub fn cell_of_dof(&self, dof: usize) -> usize {
        self.cell_of_dof[dof]
    }

    /// Multi-index of a cell on the lattice.
    pub fn cell_index(&self, cell: usize) -> Vec<i64> {
        let mut rem = cell;
        self.counts
            .iter()
            .map(|n| {
                let i = rem % n;
                rem /= n;
                i as i64
            })
            .collect()
    }

    /// Cell id of a lattice multi-index, if inside the bounding lattice.
    pub fn cell_at(&self, idx: &[i64]) -> Option<usize> {
        let mut id = 0usize;
        let mut stride = 1usize;
        for (i, n) in idx.iter().zip(&self.counts) {
            if *i < 0 || *i as usize >= *n {
                return None;
            }
            id += *i as usize * stride;
            stride *= n;
        }
        Some(id)
    }

    pub fn dof_index(&self, dof: usize) -> Vec<i64> {
        self.cell_index(self.cell_of_dof[dof])
    }

    /// Lower corner of the lattice cell with multi-index `idx` (may lie
    /// outside the bounding lattice).
    pub fn lattice_corner(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter().zip(&self.origin).map(|(i, o)| o + *i as f64 * self.h).collect()
    }

    pub fn lattice_center(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .map(|(i, o)| o + (*i as f64 + 0.5) * self.h)
            .collect()
    }

    fn cell_corner(&self, cell: usize) -> Vec<f64> {
        self.lattice_corner(&self.cell_index(cell))
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.lattice_center(&self.cell_index(cell))
    }

    pub fn dof_center(&self, dof: usize) -> Vec<f64> {
        self.cell_center(self.cell_of_dof[dof])
    }

    /// Whether the lattice cell `idx` carries a degree of freedom.
    pub fn dof_at(&self, idx: &[i64]) -> Option<usize> {
        self.cell_at(idx).and_then(|c| self.dof_of_cell[c])
    }

    pub fn interior_volume(&self) -> f64 {
        self.n_dofs() as f64 * self.cell_volume()
    }

    /// Degrees of freedom whose cell centers lie at distance at least
    /// `margin` from the complement of the domain.
    pub fn select_subdomain(&self, margin: f64) -> Result<Subdomain> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(NonlocalError::domain(format!("margin must be positive, got {margin}")));
        }
        let tol = 1e-12 * self.h;
        let dofs: Vec<usize> = (0..self.n_dofs())
            .filter(|&d| self.domain.depth(&self.dof_center(d)) >= margin - tol)
            .collect();
        if dofs.is_empty() {
            return Err(NonlocalError::EmptySubdomain { margin });
        }
        Ok(Subdomain { margin, dofs })
    }

    pub fn stats(&self) -> MeshStats {
        let count = |c: CellClass| self.classes.iter().filter(|k| **k == c).count();
        MeshStats {
            dim: self.dim(),
            cell_size: self.h,
            cells_per_axis: self.counts.clone(),
            n_cells: self.n_cells(),
            n_interior: count(CellClass::Interior),
            n_boundary_cut: count(CellClass::BoundaryCut),
            n_exterior: count(CellClass::Exterior),
            interior_volume: self.interior_volume(),
            domain_measure: self.domain.measure(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub margin: f64,
    pub dofs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub dim: usize,
    pub cell_size: f64,
    pub cells_per_axis: Vec<usize>,
    pub n_cells: usize,
    pub n_interior: usize,
    pub n_boundary_cut: usize,
    pub n_exterior: usize,
    pub interior_volume: f64,
    pub domain_measure: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_tiles_exactly() {
        let m = Mesh::build(&Domain::interval(-1.0, 1.0), 4).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_dofs(), 4);
        assert_eq!(m.cell_size(), 0.5);
        assert_eq!(m.dof_center(0), vec![-0.75]);
        assert_eq!(m.dof_center(3), vec![0.75]);
        let fine = Mesh::build(&Domain::interval(-1.0, 1.0), 8).unwrap();
        assert_eq!(fine.cell_size(), 0.5 * m.cell_size());
    }

    #[test]
    fn ball_corner_cells_are_not_dofs() {
        let m = Mesh::build(&Domain::ball(vec![0.0, 0.0], 1.0), 4).unwrap();
        assert_eq!(m.n_cells(), 16);
        let corner = m.cell_at(&[3, 3]).unwrap();
        assert_eq!(m.cell_center(corner), vec![0.75, 0.75]);
        assert!(m.dof_of_cell(corner).is_none());
        for d in 0..m.n_dofs() {
            assert!(m.domain().contains(&m.dof_center(d)));
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(Mesh::build(&Domain::interval(1.0, 1.0), 4).is_err());
        assert!(Mesh::build(&Domain::interval(-1.0, 1.0), 1).is_err());
        assert!(Mesh::build(&Domain::ball(vec![0.0, 0.0], 0.0), 4).is_err());
    }

    #[test]
    fn dof_numbering_is_a_bijection() {
        let m = Mesh::build(&Domain::ball(vec![0.0, 0.0], 1.0), 16).unwrap();
        let mut seen = vec![false; m.n_dofs()];
        for c in 0..m.n_cells() {
            if let Some(d) = m.dof_of_cell(c) {
                assert!(!seen[d]);
                seen[d] = true;
                assert_eq!(m.cell_of_dof(d), c);
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn subdomain_examples() {
        let m = Mesh::build(&Domain::interval(-1.0, 1.0), 4).unwrap();
        let sub = m.select_subdomain(0.5).unwrap();
        let centers: Vec<f64> = sub.dofs.iter().map(|d| m.dof_center(*d)[0]).collect();
        assert_eq!(centers, vec![-0.25, 0.25]);
        assert!(m.select_subdomain(0.0).is_err());
        assert!(matches!(
            m.select_subdomain(1.1),
            Err(NonlocalError::EmptySubdomain { .. })
        ));
    }

    #[test]
    fn exit_distances() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0);
        assert!((b.exit_distance(&[0.5, 0.0], &[1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((b.exit_distance(&[0.5, 0.0], &[-1.0, 0.0]) - 1.5).abs() < 1e-15);
        let i = Domain::interval(-1.0, 1.0);
        assert_eq!(i.exit_distance(&[0.75], &[1.0]), 0.25);
        assert_eq!(i.exit_distance(&[0.75], &[-1.0]), 1.75);
    }
}
