//! Assembly of the discrete nonlocal form on piecewise-constant cells.
//!
//! For cells `T_i`, `T_k` of side `h` at lattice offset `d = idx_k - idx_i`
//! the interaction weight is
//!
//! ```text
//! w_ik = ∫_{T_i}∫_{T_k} j(x - y) dy dx = ∫ j(z) ρ_d(z) dz,
//! ```
//!
//! where `ρ_d(z) = |T_i ∩ (T_k - z)|` is a product of tents centred at
//! `d h`. Every weight therefore depends only on the offset and reduces to a
//! one-dimensional radial integral of `j` against the angular integral of
//! `ρ_d`. Because the tents of all offsets sum to `h^N`, the killing term of
//! cell `i` is `κ_i = T - Σ_{k≠i} w_ik` with `T = ∫ j(z) (h^N - ρ_0(z)) dz`,
//! i.e. every diagonal entry of the stiffness equals `T`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NonlocalError, Result};
use crate::expr::Expr;
use crate::kernels::Kernel;
use crate::mesh::{Domain, Mesh};
use crate::quadrature::{self, QuadConfig};
use crate::special::sphere_area;

/// Assembled discrete objects for `b_j` on the mesh degrees of freedom.
#[derive(Debug, Clone)]
pub struct NonlocalForm {
    /// w_ik for i ≠ k, zero diagonal.
    pub weights: DMatrix<f64>,
    /// D_ii = Σ_k w_ik.
    pub degree: DVector<f64>,
    /// κ_i = ∫_{T_i} κ_{j,Ω_h}.
    pub kappa: DVector<f64>,
    /// Diagonal of the mass matrix (cell volumes).
    pub mass: DVector<f64>,
    /// ∫ j(z) (h^N - ρ_0(z)) dz.
    pub self_term: f64,
}

impl NonlocalForm {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Builds a form from weights and killing data directly.
    pub fn from_parts(weights: DMatrix<f64>, kappa: DVector<f64>, mass: DVector<f64>) -> Self {
        let degree = row_sums(&weights);
        let self_term = (0..degree.len())
            .map(|i| degree[i] + kappa[i])
            .fold(0.0, f64::max);
        Self {
            weights,
            degree,
            kappa,
            mass,
            self_term,
        }
    }

    /// The form without killing term (interior form `D - W`).
    pub fn without_killing(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            degree: self.degree.clone(),
            kappa: DVector::zeros(self.n()),
            mass: self.mass.clone(),
            self_term: self.self_term,
        }
    }

    /// A = D - W + diag(κ).
    pub fn stiffness(&self) -> DMatrix<f64> {
        let mut a = -self.weights.clone();
        for i in 0..self.n() {
            a[(i, i)] = self.degree[i] + self.kappa[i];
        }
        a
    }

    /// D - W.
    pub fn interior_operator(&self) -> DMatrix<f64> {
        let mut a = -self.weights.clone();
        for i in 0..self.n() {
            a[(i, i)] = self.degree[i];
        }
        a
    }

    /// A u without forming A.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = -(&self.weights * u);
        for i in 0..self.n() {
            out[i] += (self.degree[i] + self.kappa[i]) * u[i];
        }
        out
    }

    /// uᵀ A u.
    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        u.dot(&self.apply(u))
    }

    /// uᵀ (D - W) u computed through the stiffness diagonal.
    pub fn interior_energy(&self, u: &DVector<f64>) -> f64 {
        let wu = &self.weights * u;
        (0..self.n()).map(|i| u[i] * (self.degree[i] * u[i] - wu[i])).sum()
    }

    /// ½ Σ_ik w_ik (u_i - u_k)², evaluated pairwise.
    pub fn pairwise_energy(&self, u: &DVector<f64>) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for k in 0..n {
            for i in 0..n {
                let d = u[i] - u[k];
                acc += self.weights[(i, k)] * d * d;
            }
        }
        0.5 * acc
    }

    /// Sum of two forms on the same mesh.
    pub fn add(&self, other: &NonlocalForm) -> NonlocalForm {
        NonlocalForm {
            weights: &self.weights + &other.weights,
            degree: &self.degree + &other.degree,
            kappa: &self.kappa + &other.kappa,
            mass: self.mass.clone(),
            self_term: self.self_term + other.self_term,
        }
    }

    /// Coordinate-format text `row col value` of the stiffness, nonzeros only.
    pub fn stiffness_coo(&self) -> String {
        let a = self.stiffness();
        let mut out = String::new();
        for i in 0..a.nrows() {
            for k in 0..a.ncols() {
                let v = a[(i, k)];
                if v != 0.0 {
                    let _ = writeln!(out, "{i} {k} {v:e}");
                }
            }
        }
        out
    }

    /// Dense CSV of the stiffness.
    pub fn stiffness_csv(&self) -> String {
        let a = self.stiffness();
        let mut out = String::new();
        for i in 0..a.nrows() {
            let row: Vec<String> = (0..a.ncols()).map(|k| format!("{:e}", a[(i, k)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Mesh, kernel and assembled form for one problem.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub kernel: Kernel,
    pub form: NonlocalForm,
    pub quad: QuadConfig,
}

impl Discretization {
    pub fn new(domain: &Domain, kernel: &Kernel, n_per_axis: usize, quad: &QuadConfig) -> Result<Self> {
        kernel.validate()?;
        let mesh = Mesh::build(domain, n_per_axis)?;
        let form = assemble_stiffness(&mesh, kernel, quad)?;
        Ok(Self {
            mesh,
            kernel: kernel.clone(),
            form,
            quad: *quad,
        })
    }

    /// Values of `f` at the degree-of-freedom centres.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> DVector<f64> {
        DVector::from_iterator(self.mesh.n_dofs(), (0..self.mesh.n_dofs()).map(|i| f(&self.mesh.dof_center(i))))
    }
}

fn row_sums(w: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(w.nrows(), (0..w.nrows()).map(|i| w.row(i).sum()))
}

/// Angular integral `∫_{S^{N-1}} j(rω) g(rω) dω` of a piecewise-bilinear
/// weight `g` with breaks on the given axis-parallel lines.
fn angular_integral<G: Fn(&[f64]) -> f64>(
    kernel: &Kernel,
    r: f64,
    g: &G,
    lines: &[Vec<f64>],
) -> f64 {
    match kernel.dim() {
        1 => kernel.value(&[r]) * g(&[r]) + kernel.value(&[-r]) * g(&[-r]),
        _ => {
            let mut angles = vec![0.0, 2.0 * PI];
            for c in &lines[0] {
                if c.abs() < r {
                    let t = (c / r).acos();
                    angles.push(t);
                    angles.push(2.0 * PI - t);
                }
            }
            for c in &lines[1] {
                if c.abs() < r {
                    let t = (c / r).asin();
                    angles.push(t.rem_euclid(2.0 * PI));
                    angles.push(PI - t);
                }
            }
            angles.sort_by(f64::total_cmp);
            let rule = quadrature::gauss_legendre_16();
            let radial_value = kernel.is_radial().then(|| kernel.sphere_mean(r));
            let mut acc = 0.0;
            for w in angles.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b - a <= 1e-15 {
                    continue;
                }
                let pieces = ((b - a) / (PI / 4.0)).ceil().max(1.0) as usize;
                let step = (b - a) / pieces as f64;
                for p in 0..pieces {
                    let lo = a + p as f64 * step;
                    acc += quadrature::fixed_gauss(
                        &|t: f64| {
                            let z = [r * t.cos(), r * t.sin()];
                            let jv = match radial_value {
                                Some(v) => v,
                                None => kernel.value(&z),
                            };
                            jv * g(&z)
                        },
                        lo,
                        lo + step,
                        rule,
                    );
                }
            }
            acc
        }
    }
}

fn tent(t: f64, h: f64) -> f64 {
    (h - t.abs()).max(0.0)
}

/// Geometry of the correlation weight for one lattice offset.
struct OffsetGeometry {
    center: Vec<f64>,
    lines: Vec<Vec<f64>>,
    radii: Vec<f64>,
    r_max: f64,
    r_min: f64,
}

impl OffsetGeometry {
    fn new(offset: &[i64], h: f64) -> Self {
        let center: Vec<f64> = offset.iter().map(|d| *d as f64 * h).collect();
        let lines: Vec<Vec<f64>> = center.iter().map(|c| vec![c - h, *c, c + h]).collect();
        let mut radii = Vec::new();
        // distances to the break lines and to the lattice corners
        for l in &lines {
            radii.extend(l.iter().map(|c| c.abs()));
        }
        if center.len() == 2 {
            for a in &lines[0] {
                for b in &lines[1] {
                    radii.push((a * a + b * b).sqrt());
                }
            }
        }
        let r_max = center.iter().map(|c| (c.abs() + h).powi(2)).sum::<f64>().sqrt();
        let r_min = center
            .iter()
            .map(|c| (c.abs() - h).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        radii.retain(|r| *r > 0.0);
        Self {
            center,
            lines,
            radii,
            r_max,
            r_min,
        }
    }

    fn rho(&self, z: &[f64], h: f64) -> f64 {
        z.iter().zip(&self.center).map(|(a, c)| tent(a - c, h)).product()
    }
}

fn radial_points(kernel: &Kernel, lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(kernel.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
    pts.extend(extra.iter().copied().filter(|b| *b > lo && *b < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    pts
}

fn integrate_radial<F: Fn(f64) -> f64>(f: &F, pts: &[f64], cfg: &QuadConfig) -> Result<f64> {
    let mut total = 0.0;
    for (i, w) in pts.windows(2).enumerate() {
        if w[1] <= w[0] {
            continue;
        }
        let est = if i == 0 && w[0] == 0.0 {
            quadrature::singular_at_left(f, w[0], w[1], cfg)?
        } else {
            quadrature::adaptive(f, w[0], w[1], cfg)?
        };
        total += est.value;
    }
    Ok(total)
}

/// `∫ j(z) ρ_d(z) dz` for the lattice offset `d`.
pub fn correlation_weight(kernel: &Kernel, offset: &[i64], h: f64, cfg: &QuadConfig) -> Result<f64> {
    let geo = OffsetGeometry::new(offset, h);
    let mut lo = geo.r_min.max(kernel.window.inner);
    let mut hi = geo.r_max;
    if let Some(s) = kernel.support_radius() {
        hi = hi.min(s);
    }
    if hi <= lo {
        return Ok(0.0);
    }
    if lo < 1e-300 {
        lo = 0.0;
    }
    let n1 = kernel.dim() as i32 - 1;
    let g = |z: &[f64]| geo.rho(z, h);
    let f = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        r.powi(n1) * angular_integral(kernel, r, &g, &geo.lines)
    };
    let pts = radial_points(kernel, lo, hi, &geo.radii);
    integrate_radial(&f, &pts, cfg)
}

/// `T = ∫ j(z) (h^N - ρ_0(z)) dz`, the common diagonal of the stiffness.
pub fn self_interaction(kernel: &Kernel, h: f64, cfg: &QuadConfig) -> Result<f64> {
    let dim = kernel.dim();
    let zero = vec![0i64; dim];
    let geo = OffsetGeometry::new(&zero, h);
    let vol = h.powi(dim as i32);
    let n1 = dim as i32 - 1;
    let g = |z: &[f64]| vol - geo.rho(z, h);
    let f = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        r.powi(n1) * angular_integral(kernel, r, &g, &geo.lines)
    };
    let corner = geo.r_max;
    let hi = kernel.support_radius().map_or(corner, |s| s.min(corner));
    let lo = kernel.window.inner.min(hi);
    let pts = radial_points(kernel, lo, hi, &geo.radii);
    let near = if hi > lo { integrate_radial(&f, &pts, cfg)? } else { 0.0 };
    let far = vol * kernel.tail_mass(corner, cfg)?;
    if !far.is_finite() {
        return Err(NonlocalError::ToleranceNotMet {
            what: "kernel tail mass".into(),
            residual: f64::INFINITY,
        });
    }
    Ok(near + far)
}

/// Correlation weights for every lattice offset in `(-extent, extent)^N`.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    extent: Vec<i64>,
    values: Vec<f64>,
    pub h: f64,
}

impl CorrelationTable {
    pub fn build(kernel: &Kernel, h: f64, extent: &[usize], cfg: &QuadConfig) -> Result<Self> {
        let extent: Vec<i64> = extent.iter().map(|e| *e as i64).collect();
        let radial = kernel.is_radial();
        // canonical offsets: reflections (and the axis swap for square
        // lattices) leave the weight of a radial kernel unchanged; any even
        // kernel is invariant under d -> -d
        let mut keys: Vec<Vec<i64>> = Vec::new();
        let total: usize = extent.iter().map(|e| (2 * e - 1) as usize).product();
        let mut index_of_key: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut slot_key = Vec::with_capacity(total);
        for flat in 0..total {
            let d = Self::unflatten(&extent, flat);
            let key = canonical(&d, radial, &extent);
            let id = *index_of_key.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            });
            slot_key.push(id);
        }
        let computed: Vec<Result<f64>> = keys
            .par_iter()
            .map(|d| {
                if d.iter().all(|v| *v == 0) {
                    Ok(0.0)
                } else {
                    correlation_weight(kernel, d, h, cfg)
                }
            })
            .collect();
        let mut key_values = Vec::with_capacity(keys.len());
        for (d, v) in keys.iter().zip(computed) {
            match v {
                Ok(v) => key_values.push(v),
                Err(NonlocalError::ToleranceNotMet { residual, .. }) => {
                    return Err(NonlocalError::CellPair {
                        row: 0,
                        col: d.iter().map(|v| v.unsigned_abs() as usize).sum(),
                        residual,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let values = slot_key.into_iter().map(|id| key_values[id]).collect();
        Ok(Self { extent, values, h })
    }

    fn unflatten(extent: &[i64], mut flat: usize) -> Vec<i64> {
        extent
            .iter()
            .map(|e| {
                let w = (2 * e - 1) as usize;
                let v = (flat % w) as i64 - (e - 1);
                flat /= w;
                v
            })
            .collect()
    }

    pub fn get(&self, offset: &[i64]) -> Option<f64> {
        let mut flat = 0usize;
        let mut stride = 1usize;
        for (d, e) in offset.iter().zip(&self.extent) {
            if d.abs() >= *e {
                return None;
            }
            flat += (d + e - 1) as usize * stride;
            stride *= (2 * e - 1) as usize;
        }
        Some(self.values[flat])
    }
}

fn canonical(d: &[i64], radial: bool, extent: &[i64]) -> Vec<i64> {
    if radial {
        let mut a: Vec<i64> = d.iter().map(|v| v.abs()).collect();
        if a.len() == 2 && extent[0] == extent[1] && a[0] > a[1] {
            a.swap(0, 1);
        }
        a
    } else {
        let neg: Vec<i64> = d.iter().map(|v| -v).collect();
        if neg > d.to_vec() {
            neg
        } else {
            d.to_vec()
        }
    }
}

fn offset(mesh: &Mesh, from: usize, to: usize) -> Vec<i64> {
    let a = mesh.dof_index(from);
    let b = mesh.dof_index(to);
    b.iter().zip(&a).map(|(x, y)| x - y).collect()
}

fn weights_from_table(mesh: &Mesh, table: &CorrelationTable) -> DMatrix<f64> {
    let n = mesh.n_dofs();
    let idx: Vec<Vec<i64>> = (0..n).map(|d| mesh.dof_index(d)).collect();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            (0..n)
                .map(|i| {
                    if i == k {
                        0.0
                    } else {
                        let d: Vec<i64> = idx[k].iter().zip(&idx[i]).map(|(a, b)| a - b).collect();
                        table.get(&d).expect("offset within table")
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, k| columns[k][i])
}

/// Assembles W, κ and M for the kernel on the mesh.
pub fn assemble_stiffness(mesh: &Mesh, kernel: &Kernel, cfg: &QuadConfig) -> Result<NonlocalForm> {
    check_dims(mesh, kernel)?;
    let h = mesh.cell_size();
    let table = CorrelationTable::build(kernel, h, mesh.counts(), cfg)
        .map_err(|e| name_cell_pair(mesh, e))?;
    let weights = weights_from_table(mesh, &table);
    let self_term = self_interaction(kernel, h, cfg)?;
    let degree = row_sums(&weights);
    let kappa = DVector::from_iterator(mesh.n_dofs(), degree.iter().map(|d| (self_term - d).max(0.0)));
    let mass = DVector::from_element(mesh.n_dofs(), mesh.cell_volume());
    Ok(NonlocalForm {
        weights,
        degree,
        kappa,
        mass,
        self_term,
    })
}

fn name_cell_pair(mesh: &Mesh, err: NonlocalError) -> NonlocalError {
    // translate the failing offset into a concrete pair of degrees of freedom
    if let NonlocalError::CellPair { col, residual, .. } = err {
        for i in 0..mesh.n_dofs() {
            for k in 0..mesh.n_dofs() {
                let d = offset(mesh, i, k);
                if d.iter().map(|v| v.unsigned_abs() as usize).sum::<usize>() == col {
                    return NonlocalError::CellPair { row: i, col: k, residual };
                }
            }
        }
        return NonlocalError::CellPair { row: 0, col, residual };
    }
    err
}

fn check_dims(mesh: &Mesh, kernel: &Kernel) -> Result<()> {
    if mesh.dim() != kernel.dim() {
        return Err(NonlocalError::domain(format!(
            "mesh dimension {} does not match kernel dimension {}",
            mesh.dim(),
            kernel.dim()
        )));
    }
    Ok(())
}

/// Lower-accuracy mode for general two-point kernels `k(x, y)`: weights and
/// killing entries are sampled at cell centres, `w_ik ≈ k(c_i, c_k) vol²`.
/// Exterior cells are taken from a band of width `exterior_radius`.
pub fn assemble_two_point<K>(mesh: &Mesh, k: K, exterior_radius: f64) -> Result<NonlocalForm>
where
    K: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = mesh.n_dofs();
    let vol = mesh.cell_volume();
    let centers: Vec<Vec<f64>> = (0..n).map(|i| mesh.dof_center(i)).collect();
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for m in (i + 1)..n {
            let v = 0.5 * (k(&centers[i], &centers[m]) + k(&centers[m], &centers[i])) * vol * vol;
            if !v.is_finite() || v < 0.0 {
                return Err(NonlocalError::CellPair { row: i, col: m, residual: v });
            }
            weights[(i, m)] = v;
            weights[(m, i)] = v;
        }
    }
    let pad = (exterior_radius / mesh.cell_size()).ceil() as i64;
    let outside: Vec<Vec<f64>> = lattice_band(mesh, pad)
        .into_iter()
        .filter(|idx| mesh.dof_at(idx).is_none())
        .map(|idx| mesh.lattice_center(&idx))
        .collect();
    let kappa: Vec<f64> = centers
        .par_iter()
        .map(|c| outside.iter().map(|y| k(c, y)).sum::<f64>() * vol * vol)
        .collect();
    let mass = DVector::from_element(n, vol);
    Ok(NonlocalForm::from_parts(weights, DVector::from_vec(kappa), mass))
}

/// All lattice indices of the bounding lattice padded by `pad` cells.
fn lattice_band(mesh: &Mesh, pad: i64) -> Vec<Vec<i64>> {
    let ranges: Vec<(i64, i64)> = mesh.counts().iter().map(|c| (-pad, *c as i64 + pad)).collect();
    let mut out = vec![vec![]];
    for (lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                (lo..hi).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Cell integrals of the killing density κ_{j,Ω_h}.
pub fn assemble_killing(mesh: &Mesh, kernel: &Kernel, cfg: &QuadConfig) -> Result<DVector<f64>> {
    Ok(assemble_stiffness(mesh, kernel, cfg)?.kappa)
}

/// Pointwise killing density `κ(x) = ∫_{ℝ^N \ Ω} j(x - y) dy` for `x ∈ Ω`
/// on the continuous (convex) domain.
pub fn killing_density(domain: &Domain, kernel: &Kernel, x: &[f64], cfg: &QuadConfig) -> Result<f64> {
    if !domain.contains(x) {
        return Err(NonlocalError::domain("killing density requested outside the domain"));
    }
    let dim = kernel.dim();
    let area = sphere_area(dim);
    let along = |dir: &[f64]| -> Result<f64> {
        let exit = domain.exit_distance(x, dir);
        if kernel.is_radial() {
            Ok(kernel.tail_mass(exit, cfg)? / area)
        } else {
            let f = |r: f64| {
                let z: Vec<f64> = dir.iter().map(|d| d * r).collect();
                kernel.value(&z) * r.powi(dim as i32 - 1)
            };
            Ok(kernel.integrate_profile(&f, exit, f64::INFINITY, cfg)?.value)
        }
    };
    match dim {
        1 => Ok(along(&[1.0])? + along(&[-1.0])?),
        _ => {
            let mut breaks = vec![0.0, 2.0 * PI];
            if let Domain::Box { lo, hi } = domain {
                for cx in [lo[0], hi[0]] {
                    for cy in [lo[1], hi[1]] {
                        breaks.push((cy - x[1]).atan2(cx - x[0]).rem_euclid(2.0 * PI));
                    }
                }
            }
            breaks.sort_by(f64::total_cmp);
            let err = std::cell::Cell::new(None);
            let f = |t: f64| match along(&[t.cos(), t.sin()]) {
                Ok(v) => v,
                Err(e) => {
                    err.set(Some(e.to_string()));
                    0.0
                }
            };
            let est = quadrature::adaptive_pieces(&f, &breaks, cfg)?;
            if let Some(msg) = err.take() {
                return Err(NonlocalError::ToleranceNotMet {
                    what: msg,
                    residual: f64::INFINITY,
                });
            }
            Ok(est.value)
        }
    }
}

/// Galerkin discretization of `u ↦ h ∗ u`, normalized by the cell volume
/// so that `(H u)_i` approximates `(h ∗ u)(x_i)`.
#[derive(Debug, Clone)]
pub struct ConvolutionOperator {
    pub matrix: DMatrix<f64>,
    pub cell_volume: f64,
    pub l1_norm: f64,
}

impl ConvolutionOperator {
    pub fn zero(n: usize, cell_volume: f64) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
            cell_volume,
            l1_norm: 0.0,
        }
    }

    /// Galerkin matrix `∫_{T_i}∫_{T_k} h(x - y)`, i.e. `vol · H`.
    pub fn galerkin(&self) -> DMatrix<f64> {
        &self.matrix * self.cell_volume
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u
    }

    /// Maximum absolute row sum.
    pub fn row_sum_norm(&self) -> f64 {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Assembles the convolution operator for an integrable, square-integrable
/// kernel-like `h`.
pub fn assemble_convolution(mesh: &Mesh, h: &Kernel, cfg: &QuadConfig) -> Result<ConvolutionOperator> {
    check_dims(mesh, h)?;
    let l1 = h.tail_mass(0.0, cfg)?;
    if !l1.is_finite() {
        return Err(NonlocalError::domain("convolution kernel is not integrable"));
    }
    let area = sphere_area(h.dim());
    let n1 = h.dim() as i32 - 1;
    let sq = |r: f64| area * h.sphere_mean_with(r, |z| h.value(z)) * r.powi(n1);
    let l2 = h.integrate_profile(&sq, 0.0, f64::INFINITY, cfg);
    if !matches!(l2, Ok(ref e) if e.value.is_finite()) {
        return Err(NonlocalError::domain("convolution kernel is not square integrable"));
    }
    let n = mesh.n_dofs();
    let vol = mesh.cell_volume();
    if l1 == 0.0 {
        return Ok(ConvolutionOperator::zero(n, vol));
    }
    let cell = mesh.cell_size();
    let table = CorrelationTable::build(h, cell, mesh.counts(), cfg)?;
    let diag = correlation_weight(h, &vec![0; h.dim()], cell, cfg)?;
    let mut matrix = weights_from_table(mesh, &table);
    for i in 0..n {
        matrix[(i, i)] = diag;
    }
    matrix /= vol;
    Ok(ConvolutionOperator {
        matrix,
        cell_volume: vol,
        l1_norm: l1,
    })
}

/// Exterior Dirichlet data: `g` given by an expression, vanishing at
/// distance more than `radius` from the bounding box of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorData {
    pub expr: Expr,
    pub radius: f64,
}

/// `ℓ_i = ∫_{T_i} ∫_{ℝ^N \ Ω_h} g(y) j(x - y) dy dx` with `g` sampled at
/// exterior cell centres.
#[derive(Debug, Clone)]
pub struct ExteriorLoad {
    pub values: DVector<f64>,
    pub truncation_radius: f64,
}

/// Precomputed exterior cells and correlation weights, reusable for many
/// exterior data sets on the same mesh.
#[derive(Debug, Clone)]
pub struct ExteriorAssembler {
    cells: Vec<(Vec<i64>, Vec<f64>)>,
    dofs: Vec<Vec<i64>>,
    table: CorrelationTable,
    radius: f64,
}

impl ExteriorAssembler {
    /// Covers every lattice cell outside `Ω_h` within `radius` of the
    /// bounding lattice.
    pub fn new(mesh: &Mesh, kernel: &Kernel, radius: f64, cfg: &QuadConfig) -> Result<Self> {
        check_dims(mesh, kernel)?;
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(NonlocalError::domain("exterior truncation radius must be finite"));
        }
        let h = mesh.cell_size();
        let mut pad = (radius / h).ceil() as i64;
        if let Some(s) = kernel.support_radius() {
            // cells farther than the kernel reach never contribute
            pad = pad.min((s / h).ceil() as i64 + 1);
        }
        let cells: Vec<(Vec<i64>, Vec<f64>)> = lattice_band(mesh, pad)
            .into_iter()
            .filter(|idx| mesh.dof_at(idx).is_none())
            .map(|idx| {
                let c = mesh.lattice_center(&idx);
                (idx, c)
            })
            .collect();
        let extent: Vec<usize> = mesh.counts().iter().map(|c| c + 2 * pad as usize + 1).collect();
        let table = CorrelationTable::build(kernel, h, &extent, cfg)?;
        let dofs = (0..mesh.n_dofs()).map(|i| mesh.dof_index(i)).collect();
        Ok(Self {
            cells,
            dofs,
            table,
            radius,
        })
    }

    /// Load vector for data sampled by `g` at exterior cell centres.
    pub fn load<G: Fn(&[f64]) -> f64>(&self, g: G) -> Result<ExteriorLoad> {
        let mut data = Vec::new();
        for (idx, c) in &self.cells {
            let v = g(c);
            if !v.is_finite() {
                return Err(NonlocalError::domain("exterior data is unbounded"));
            }
            if v != 0.0 {
                data.push((idx, v));
            }
        }
        let values: Vec<f64> = self
            .dofs
            .par_iter()
            .map(|xi| {
                data.iter()
                    .map(|(k, v)| {
                        let d: Vec<i64> = k.iter().zip(xi).map(|(a, b)| a - b).collect();
                        v * self.table.get(&d).expect("offset within table")
                    })
                    .sum()
            })
            .collect();
        Ok(ExteriorLoad {
            values: DVector::from_vec(values),
            truncation_radius: self.radius,
        })
    }
}

/// Exterior load for data sampled by `g` at cell centres of every lattice
/// cell outside `Ω_h` within `radius` of the bounding lattice.
pub fn exterior_load_with<G: Fn(&[f64]) -> f64>(
    mesh: &Mesh,
    kernel: &Kernel,
    radius: f64,
    g: G,
    cfg: &QuadConfig,
) -> Result<ExteriorLoad> {
    ExteriorAssembler::new(mesh, kernel, radius, cfg)?.load(g)
}

pub fn exterior_load(mesh: &Mesh, kernel: &Kernel, data: &ExteriorData, cfg: &QuadConfig) -> Result<ExteriorLoad> {
    exterior_load_with(mesh, kernel, data.radius, |y| data.expr.eval(y), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn adjacent_weight_log_laplacian_closed_form() {
        // ∫_0^h∫_h^{2h} (y - x)^{-1} dy dx = 2h ln 2
        let k = Kernel::log_laplacian(1).unwrap();
        let h = 0.25;
        let w = correlation_weight(&k, &[1], h, &cfg()).unwrap();
        assert!((w - 2.0 * h * 2f64.ln()).abs() < 1e-12, "{w}");
    }

    #[test]
    fn self_term_log_laplacian_closed_form() {
        // T = 2∫_0^h r·r^{-1} dr + 2h∫_h^1 r^{-1} dr = 2h + 2h ln(1/h)
        let k = Kernel::log_laplacian(1).unwrap();
        let h = 0.125;
        let t = self_interaction(&k, h, &cfg()).unwrap();
        assert!((t - (2.0 * h + 2.0 * h * (1.0 / h).ln())).abs() < 1e-12, "{t}");
    }

    #[test]
    fn constants_are_in_the_kernel_of_the_interior_form() {
        let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), 32).unwrap();
        let k = Kernel::fractional(1, 0.3).unwrap();
        let form = assemble_stiffness(&mesh, &k, &cfg()).unwrap();
        let ones = DVector::from_element(form.n(), 1.0);
        assert!(form.interior_energy(&ones).abs() < 1e-12 * form.self_term * form.n() as f64);
        let expected: f64 = form.kappa.sum();
        assert!((form.energy(&ones) - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn gaussian_convolution_preserves_mass() {
        let mesh = Mesh::build(&Domain::interval(-4.0, 4.0), 160).unwrap();
        let g = Kernel::gaussian(1, 1.0, 0.1).unwrap();
        let op = assemble_convolution(&mesh, &g, &cfg()).unwrap();
        let ones = DVector::from_element(mesh.n_dofs(), 1.0);
        let hu = op.apply(&ones);
        let mid = mesh.n_dofs() / 2;
        assert!((hu[mid] - 1.0).abs() < 1e-9, "{}", hu[mid]);
        assert!(op.row_sum_norm() <= op.l1_norm * (1.0 + 1e-9));
        assert_eq!(op.matrix, op.matrix.transpose());
    }

    #[test]
    fn convolution_rejects_non_integrable() {
        let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), 8).unwrap();
        let k = Kernel::log_laplacian(1).unwrap();
        assert!(assemble_convolution(&mesh, &k, &cfg()).is_err());
        let zero = Kernel::gaussian(1, 0.0, 0.3).unwrap();
        let op = assemble_convolution(&mesh, &zero, &cfg()).unwrap();
        assert_eq!(op.matrix.abs().max(), 0.0);
    }

    #[test]
    fn exterior_load_support_and_sign() {
        let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), 16).unwrap();
        let k = Kernel::log_laplacian(1).unwrap();
        let zero = exterior_load_with(&mesh, &k, 2.0, |_| 0.0, &cfg()).unwrap();
        assert_eq!(zero.values.abs().max(), 0.0);
        let pos = exterior_load_with(&mesh, &k, 2.0, |y| 1.0 + y[0].abs(), &cfg()).unwrap();
        assert!(pos.values.iter().all(|v| *v >= 0.0));
        assert!(pos.values.max() > 0.0);
        // data on 3 ≤ |y| ≤ 4 is out of reach of a kernel supported in B_1
        let far = exterior_load_with(
            &mesh,
            &k,
            3.5,
            |y| if y[0].abs() >= 3.0 { 1.0 } else { 0.0 },
            &cfg(),
        )
        .unwrap();
        assert_eq!(far.values.abs().max(), 0.0);
        assert!(exterior_load_with(&mesh, &k, 1.0, |_| f64::INFINITY, &cfg()).is_err());
    }
}
