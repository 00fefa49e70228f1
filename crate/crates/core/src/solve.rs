//! Eigenproblem, Poisson problem and the shifted equation with convolution.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{ConvolutionOperator, ExteriorLoad, NonlocalForm};
use crate::error::{NonlocalError, Result};

/// Largest size for which `EigenMethod::Auto` uses the dense solver.
pub const DENSE_LIMIT: usize = 512;

const START_SEED: u64 = 0x5eed_1a2c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    pub tol: f64,
    pub method: EigenMethod,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            method: EigenMethod::Auto,
        }
    }
}

/// Lowest part of the spectrum of the pencil `(A, M)`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
    /// ‖A u - λ M u‖₂ per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub method: EigenMethod,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// λ_2 - λ_1, if two eigenvalues were computed.
    pub fn gap(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }

    /// Simplicity of λ_1 as a gap assertion; `gap_tol` defaults to 1e-8 λ_1.
    pub fn first_is_simple(&self, gap_tol: Option<f64>) -> bool {
        match self.gap() {
            Some(g) => g > gap_tol.unwrap_or(1e-8 * self.eigenvalues[0].abs()),
            None => false,
        }
    }
}

/// Flips each column so that its entry of largest magnitude is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for x in col.iter() {
            if x.abs() > best.abs() {
                best = *x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// `M^{-1/2} A M^{-1/2}` for diagonal `M`.
fn symmetric_scaled(a: &DMatrix<f64>, mass: &DVector<f64>) -> DMatrix<f64> {
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| a[(i, k)] * s[i] * s[k])
}

fn residuals(a: &DMatrix<f64>, mass: &DVector<f64>, lambda: &[f64], u: &DMatrix<f64>) -> Vec<f64> {
    lambda
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let ui = u.column(i);
            let r = a * ui - mass.component_mul(&ui.into_owned()) * *l;
            r.norm()
        })
        .collect()
}

/// Smallest `count` eigenpairs of the generalized problem `A u = λ M u`.
pub fn solve_eigen(form: &NonlocalForm, count: usize, opts: &EigenOptions) -> Result<Spectrum> {
    solve_pencil(&form.stiffness(), &form.mass, count, opts)
}

/// Smallest `count` eigenpairs of `A u = λ M u` for a symmetric `A` and
/// positive diagonal `M`.
pub fn solve_pencil(a: &DMatrix<f64>, mass: &DVector<f64>, count: usize, opts: &EigenOptions) -> Result<Spectrum> {
    let n = a.nrows();
    if count > n {
        return Err(NonlocalError::config(format!(
            "requested {count} eigenpairs but the mesh has {n} degrees of freedom"
        )));
    }
    let method = match opts.method {
        EigenMethod::Auto if n <= DENSE_LIMIT || 2 * count >= n => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Lanczos,
        m => m,
    };
    if count == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![],
            vectors: DMatrix::zeros(n, 0),
            residuals: vec![],
            iterations: 0,
            method,
        });
    }
    let b = symmetric_scaled(a, mass);
    let (values, v, iterations) = match method {
        EigenMethod::Lanczos => shift_invert_lanczos(&b, count, opts.tol)?,
        _ => {
            let eig = SymmetricEigen::new(b);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|x, y| eig.eigenvalues[*x].total_cmp(&eig.eigenvalues[*y]));
            let values: Vec<f64> = order[..count].iter().map(|i| eig.eigenvalues[*i]).collect();
            let v = DMatrix::from_fn(n, count, |r, c| eig.eigenvectors[(r, order[c])]);
            (values, v, 1)
        }
    };
    let mut u = DMatrix::from_fn(n, count, |r, c| v[(r, c)] / mass[r].sqrt());
    normalize_signs(&mut u);
    let residuals = residuals(a, mass, &values, &u);
    Ok(Spectrum {
        eigenvalues: values,
        vectors: u,
        residuals,
        iterations,
        method,
    })
}

/// Lanczos with full reorthogonalization on `(B - σ)^{-1}` for the smallest
/// eigenvalues of the symmetric positive semidefinite `B`.
fn shift_invert_lanczos(b: &DMatrix<f64>, count: usize, tol: f64) -> Result<(Vec<f64>, DMatrix<f64>, usize)> {
    let n = b.nrows();
    let scale = b.diagonal().amax().max(f64::MIN_POSITIVE);
    let shift = -1e-6 * scale;
    let mut shifted = b.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let chol = Cholesky::new(shifted).ok_or(NonlocalError::Indefinite {
        smallest: f64::NAN,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q0 = DVector::from_fn(n, |_, _| 1.0 + 0.1 * rng.gen::<f64>());
    q0 /= q0.norm();
    let mut basis: Vec<DVector<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let floor = 1e-8 * scale;
    let mut j = 0;
    loop {
        let mut w = chol.solve(&basis[j]);
        let a_j = basis[j].dot(&w);
        alpha.push(a_j);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let b_j = w.norm();
        let m = j + 1;
        let check = m >= count && (m % 4 == 0 || m == n || b_j <= 1e-14 * a_j.abs());
        if check {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]));
            let mut values = Vec::with_capacity(count);
            let mut vectors = DMatrix::zeros(n, count);
            let mut worst = 0.0f64;
            for (c, idx) in order[..count].iter().enumerate() {
                let theta = eig.eigenvalues[*idx];
                let lambda = shift + 1.0 / theta;
                let mut y = DVector::zeros(n);
                for (r, q) in basis.iter().enumerate() {
                    y.axpy(eig.eigenvectors[(r, *idx)], q, 1.0);
                }
                y /= y.norm();
                let res = (b * &y - &y * lambda).norm() / lambda.abs().max(floor);
                worst = worst.max(res);
                values.push(lambda);
                vectors.set_column(c, &y);
            }
            history.push(worst);
            if worst <= tol {
                // Ritz vectors of a Krylov space are orthonormal; re-sort ascending
                let mut idx: Vec<usize> = (0..count).collect();
                idx.sort_by(|x, y| values[*x].total_cmp(&values[*y]));
                let sorted: Vec<f64> = idx.iter().map(|i| values[*i]).collect();
                let vecs = DMatrix::from_fn(n, count, |r, c| vectors[(r, idx[c])]);
                return Ok((sorted, vecs, m));
            }
        }
        if m == n || b_j <= 1e-14 * a_j.abs() {
            return Err(NonlocalError::NotConverged {
                solver: "lanczos",
                iterations: m,
                residual: history.last().copied().unwrap_or(f64::INFINITY),
                history,
            });
        }
        beta.push(b_j);
        basis.push(w / b_j);
        j += 1;
    }
}

/// Smallest eigenvalue estimate from a short plain Lanczos run.
pub fn lanczos_smallest_estimate(op: &DMatrix<f64>, steps: usize) -> f64 {
    let n = op.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    q /= q.norm();
    let mut prev = DVector::zeros(n);
    let mut basis = vec![q.clone()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps.min(n) {
        let mut w = op * &q;
        let a = q.dot(&w);
        alpha.push(a);
        w.axpy(-a, &q, 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &prev, 1.0);
        }
        for v in &basis {
            let c = v.dot(&w);
            w.axpy(-c, v, 1.0);
        }
        let b = w.norm();
        if b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        prev = q;
        q = w / b;
        basis.push(q.clone());
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r.abs_diff(c) == 1 {
            beta[r.min(c)]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t).eigenvalues.min()
}

/// Discrete solution of a linear problem.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: DVector<f64>,
    pub rhs: String,
    /// ‖b - K u‖₂ / ‖b‖₂ (0 for a zero right-hand side).
    pub residual: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn max_norm(&self) -> f64 {
        self.u.amax()
    }

    /// Discrete L² norm `(Σ vol_i u_i²)^{1/2}`.
    pub fn l2_norm(&self, mass: &DVector<f64>) -> f64 {
        self.u.iter().zip(mass.iter()).map(|(u, m)| m * u * u).sum::<f64>().sqrt()
    }
}

/// Conjugate gradient for a symmetric positive definite dense matrix.
pub fn conjugate_gradient(k: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<(DVector<f64>, f64, usize)> {
    let n = b.len();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok((DVector::zeros(n), 0.0, 0));
    }
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut history = Vec::new();
    let max_iter = 10 * n + 100;
    for it in 1..=max_iter {
        let kp = k * &p;
        let pkp = p.dot(&kp);
        if pkp <= 0.0 {
            return Err(NonlocalError::Indefinite { smallest: pkp / p.dot(&p) });
        }
        let step = rr / pkp;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &kp, 1.0);
        let rr_new = r.dot(&r);
        let rel = rr_new.sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            // report the true residual rather than the recursive one
            let true_rel = (b - k * &x).norm() / bnorm;
            return Ok((x, true_rel, it));
        }
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    if history.len() > 50 {
        history.drain(..history.len() - 50);
    }
    Err(NonlocalError::NotConverged {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: last,
        history,
    })
}

/// Solves `A u = M f` for pointwise values `f` at the degrees of freedom.
pub fn solve_poisson(form: &NonlocalForm, f: &DVector<f64>, tol: f64) -> Result<Solution> {
    if form.kappa.iter().all(|k| *k <= 0.0) {
        return Err(NonlocalError::Indefinite { smallest: 0.0 });
    }
    let b = form.mass.component_mul(f);
    let (u, residual, iterations) = conjugate_gradient(&form.stiffness(), &b, tol)?;
    Ok(Solution {
        u,
        rhs: "poisson".into(),
        residual,
        iterations,
    })
}

/// Right-hand side and operator pieces of the shifted equation.
#[derive(Debug, Clone, Copy)]
pub struct GeneralProblem<'a> {
    pub lambda: f64,
    pub convolution: Option<&'a ConvolutionOperator>,
    pub exterior: Option<&'a ExteriorLoad>,
}

impl Default for GeneralProblem<'_> {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            convolution: None,
            exterior: None,
        }
    }
}

/// `A - diag(c) M - M H` for a multiplier field `c`.
pub fn shifted_operator(form: &NonlocalForm, c: &DVector<f64>, h: Option<&ConvolutionOperator>) -> DMatrix<f64> {
    let mut k = form.stiffness();
    for i in 0..form.n() {
        k[(i, i)] -= c[i] * form.mass[i];
    }
    if let Some(h) = h {
        for col in 0..form.n() {
            for row in 0..form.n() {
                k[(row, col)] -= form.mass[row] * h.matrix[(row, col)];
            }
        }
    }
    k
}

/// Smallest eigenvalue of the pencil `(K, M)`, densely.
fn smallest_pencil_eigenvalue(k: &DMatrix<f64>, mass: &DVector<f64>) -> f64 {
    if k.nrows() <= 2 * DENSE_LIMIT {
        SymmetricEigen::new(symmetric_scaled(k, mass)).eigenvalues.min()
    } else {
        lanczos_smallest_estimate(&symmetric_scaled(k, mass), 20)
    }
}

/// Positive-definiteness gate: a Cholesky factorization is attempted and the
/// smallest pencil eigenvalue is reported when it fails.
pub fn spd_gate(k: &DMatrix<f64>, mass: &DVector<f64>) -> Result<()> {
    if Cholesky::new(k.clone()).is_some() {
        return Ok(());
    }
    Err(NonlocalError::Indefinite {
        smallest: smallest_pencil_eigenvalue(k, mass),
    })
}

/// Solves `(A - diag(c) M - M H) u = M f + ℓ` with a multiplier field `c`.
pub fn solve_shifted(
    form: &NonlocalForm,
    c: &DVector<f64>,
    h: Option<&ConvolutionOperator>,
    f: &DVector<f64>,
    g: Option<&ExteriorLoad>,
    tol: f64,
) -> Result<Solution> {
    let k = shifted_operator(form, c, h);
    spd_gate(&k, &form.mass)?;
    let mut b = form.mass.component_mul(f);
    if let Some(g) = g {
        b += &g.values;
    }
    let (u, residual, iterations) = conjugate_gradient(&k, &b, tol)?;
    Ok(Solution {
        u,
        rhs: "shifted".into(),
        residual,
        iterations,
    })
}

/// Solves `I_j u = λ u + h ∗ u + f` in Ω with exterior data entering via `ℓ`.
pub fn solve_general(form: &NonlocalForm, problem: &GeneralProblem, f: &DVector<f64>, tol: f64) -> Result<Solution> {
    if problem.lambda == 0.0 && problem.convolution.is_none() && problem.exterior.is_none() {
        return solve_poisson(form, f, tol);
    }
    let c = DVector::from_element(form.n(), problem.lambda);
    let mut sol = solve_shifted(form, &c, problem.convolution, f, problem.exterior, tol)?;
    sol.rhs = "general".into();
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_stiffness;
    use crate::kernels::Kernel;
    use crate::mesh::{Domain, Mesh};
    use crate::quadrature::QuadConfig;

    fn form(n: usize) -> NonlocalForm {
        let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), n).unwrap();
        assemble_stiffness(&mesh, &Kernel::log_laplacian(1).unwrap(), &QuadConfig::default()).unwrap()
    }

    #[test]
    fn lanczos_matches_dense() {
        let f = form(96);
        let dense = solve_eigen(&f, 3, &EigenOptions { tol: 1e-10, method: EigenMethod::Dense }).unwrap();
        let lanczos = solve_eigen(&f, 3, &EigenOptions { tol: 1e-10, method: EigenMethod::Lanczos }).unwrap();
        for i in 0..3 {
            let rel = (dense.eigenvalues[i] - lanczos.eigenvalues[i]).abs() / dense.eigenvalues[i];
            assert!(rel < 1e-10, "{i}: {rel}");
        }
        let diff = (dense.vector(0) - lanczos.vector(0)).amax();
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal() {
        let f = form(64);
        let s = solve_eigen(&f, 4, &EigenOptions::default()).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                let ip: f64 = (0..f.n()).map(|r| s.vectors[(r, i)] * f.mass[r] * s.vectors[(r, k)]).sum();
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10);
            }
            let u = s.vector(i);
            let rq = f.energy(&u) / u.dot(&f.mass.component_mul(&u));
            assert!((rq - s.eigenvalues[i]).abs() < 1e-10 * s.eigenvalues[i]);
        }
        assert!(s.first_is_simple(None));
    }

    #[test]
    fn zero_count_and_oversized_requests() {
        let f = form(8);
        assert!(solve_eigen(&f, 0, &EigenOptions::default()).unwrap().is_empty());
        assert!(matches!(solve_eigen(&f, 9, &EigenOptions::default()), Err(NonlocalError::Config(_))));
    }

    #[test]
    fn poisson_zero_and_positive_loads() {
        let f = form(64);
        let zero = solve_poisson(&f, &DVector::zeros(f.n()), 1e-12).unwrap();
        assert_eq!(zero.u.amax(), 0.0);
        let one = solve_poisson(&f, &DVector::from_element(f.n(), 1.0), 1e-12).unwrap();
        assert!(one.u.min() > 0.0);
        assert!(one.residual <= 1e-12);
    }

    #[test]
    fn general_reduces_to_poisson_and_gates_indefinite_shifts() {
        let f = form(48);
        let rhs = DVector::from_fn(f.n(), |i, _| (i as f64 * 0.3).sin().abs());
        let p = solve_poisson(&f, &rhs, 1e-12).unwrap();
        let g = solve_general(&f, &GeneralProblem::default(), &rhs, 1e-12).unwrap();
        assert_eq!(p.u, g.u);
        let lam1 = solve_eigen(&f, 1, &EigenOptions::default()).unwrap().eigenvalues[0];
        let bad = GeneralProblem {
            lambda: lam1 + 0.1,
            ..Default::default()
        };
        match solve_general(&f, &bad, &rhs, 1e-12) {
            Err(NonlocalError::Indefinite { smallest }) => assert!((smallest + 0.1).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }
}
