//! Linear algebra shared by the closed-form estimators and the EM iteration.
//!
//! For fixed variance components `(D, σ²)` and smoothing `(λ, λ_v)`:
//!
//! * `D_v = (D⁻¹ + λ_v G)⁻¹`, computed as `(I + λ_v D G)⁻¹ D` so that a
//!   singular `D` is allowed;
//! * `V_i = X_i D_v X_iᵀ + σ² I`;
//! * `η̂ = (Σ X_iᵀ V_i⁻¹ X_i + λ G)⁻¹ Σ X_iᵀ V_i⁻¹ y_i`;
//! * `v̂_i = D_v X_iᵀ V_i⁻¹ (y_i − X_i η̂)`.
//!
//! The EM iteration decreases the penalized objective with the individual
//! curves integrated out,
//! `Σ_i [rᵢᵀ V_i⁻¹ rᵢ + log|V_i| + log|I + λ_v D G|] + λ ηᵀ G η`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::data::LongitudinalSample;
use crate::error::{MessError, Result};

pub(crate) const SIGMA2_FLOOR: f64 = 1e-10;
pub(crate) const EIGEN_FLOOR_REL: f64 = 1e-8;
const EIGEN_FLOOR_ABS: f64 = 1e-14;

pub(crate) fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

/// `(D_v, log|I + λ_v D G|)`.
pub(crate) fn regularize(
    d: &DMatrix<f64>,
    g: &DMatrix<f64>,
    lambda_v: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let m = d.nrows();
    if lambda_v == 0.0 {
        return Ok((d.clone(), 0.0));
    }
    let a = DMatrix::identity(m, m) + d * g * lambda_v;
    let lu = a.lu();
    let det = lu.determinant();
    if !(det.is_finite() && det > 0.0) {
        return Err(MessError::DegenerateComponents);
    }
    let mut dv = lu.solve(d).ok_or(MessError::DegenerateComponents)?;
    symmetrize(&mut dv);
    Ok((dv, det.ln()))
}

/// Floor the eigenvalues of `D` at `1e-8 · tr(D) / m`. Returns whether any
/// eigenvalue was raised.
pub(crate) fn floor_eigenvalues(d: &mut DMatrix<f64>) -> bool {
    symmetrize(d);
    let m = d.nrows() as f64;
    let floor = (EIGEN_FLOOR_REL * d.trace() / m).max(EIGEN_FLOOR_ABS);
    let eig = SymmetricEigen::new(d.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return false;
    }
    let lam = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    *d = q * DMatrix::from_diagonal(&lam) * q.transpose();
    symmetrize(d);
    true
}

/// Per-individual factorisations of `V_i` for fixed components.
pub(crate) struct Factored {
    pub d_v: DMatrix<f64>,
    pub pen_logdet: f64,
    pub chols: Vec<Cholesky<f64, Dyn>>,
    pub logdets: Vec<f64>,
}

pub(crate) struct Model<'a> {
    pub sample: &'a LongitudinalSample,
    pub g: &'a DMatrix<f64>,
    pub lambda: f64,
    pub lambda_v: f64,
}

pub(crate) struct EStep {
    pub v_hat: Vec<DVector<f64>>,
    pub cond_cov: Vec<DMatrix<f64>>,
}

impl<'a> Model<'a> {
    pub fn factor(&self, d: &DMatrix<f64>, sigma2: f64) -> Result<Factored> {
        let (d_v, pen_logdet) = regularize(d, self.g, self.lambda_v)?;
        let mut chols = Vec::with_capacity(self.sample.n_individuals());
        let mut logdets = Vec::with_capacity(self.sample.n_individuals());
        for rec in self.sample.records() {
            let o = rec.incidence.columns();
            let mut v = submatrix(&d_v, o, o);
            for k in 0..o.len() {
                v[(k, k)] += sigma2;
            }
            let chol = Cholesky::new(v).ok_or(MessError::DegenerateComponents)?;
            logdets.push(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>());
            chols.push(chol);
        }
        Ok(Factored {
            d_v,
            pen_logdet,
            chols,
            logdets,
        })
    }

    /// Left-hand side `Σ X_iᵀ V_i⁻¹ X_i` (without the penalty) and the
    /// right-hand side `Σ X_iᵀ V_i⁻¹ y_i`.
    pub fn normal_equations(&self, f: &Factored) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.sample.grid().len();
        let mut lhs = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (rec, chol) in self.sample.records().iter().zip(&f.chols) {
            let o = rec.incidence.columns();
            let vinv = chol.inverse();
            let vinv_y = chol.solve(&rec.y);
            for (a, &ca) in o.iter().enumerate() {
                rhs[ca] += vinv_y[a];
                for (b, &cb) in o.iter().enumerate() {
                    lhs[(ca, cb)] += vinv[(a, b)];
                }
            }
        }
        (lhs, rhs)
    }

    pub fn mean(&self, f: &Factored) -> Result<DVector<f64>> {
        let (lhs, rhs) = self.normal_equations(f);
        let mut h = lhs + self.g * self.lambda;
        symmetrize(&mut h);
        solve_spd(h, &rhs)
    }

    pub fn residual(&self, i: usize, eta: &DVector<f64>) -> DVector<f64> {
        let rec = &self.sample.records()[i];
        let o = rec.incidence.columns();
        DVector::from_fn(o.len(), |k, _| rec.y[k] - eta[o[k]])
    }

    pub fn objective(&self, f: &Factored, eta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for (i, chol) in f.chols.iter().enumerate() {
            let r = self.residual(i, eta);
            total += r.dot(&chol.solve(&r)) + f.logdets[i] + f.pen_logdet;
        }
        total + self.lambda * eta.dot(&(self.g * eta))
    }

    pub fn e_step(&self, f: &Factored, eta: &DVector<f64>) -> EStep {
        let m = self.sample.grid().len();
        let all: Vec<usize> = (0..m).collect();
        let n = self.sample.n_individuals();
        let mut v_hat = Vec::with_capacity(n);
        let mut cond_cov = Vec::with_capacity(n);
        for (i, (rec, chol)) in self.sample.records().iter().zip(&f.chols).enumerate() {
            let o = rec.incidence.columns();
            let cross = submatrix(&f.d_v, &all, o); // D_v X_iᵀ
            let alpha = chol.solve(&self.residual(i, eta));
            v_hat.push(&cross * alpha);
            let w = chol.solve(&cross.transpose());
            let mut c = &f.d_v - &cross * w;
            symmetrize(&mut c);
            cond_cov.push(c);
        }
        EStep { v_hat, cond_cov }
    }

    /// M-step updates `(D, σ²)` for fixed `η`.
    pub fn m_step(&self, e: &EStep, eta: &DVector<f64>) -> (DMatrix<f64>, f64) {
        let m = self.sample.grid().len();
        let n = self.sample.n_individuals() as f64;
        let big_n = self.sample.n_observations() as f64;
        let mut d = DMatrix::zeros(m, m);
        let mut ss = 0.0;
        for (i, rec) in self.sample.records().iter().enumerate() {
            let v = &e.v_hat[i];
            let c = &e.cond_cov[i];
            d += v * v.transpose() + c;
            let o = rec.incidence.columns();
            for (k, &col) in o.iter().enumerate() {
                let r = rec.y[k] - eta[col] - v[col];
                ss += r * r + c[(col, col)];
            }
        }
        d /= n;
        symmetrize(&mut d);
        (d, ss / big_n)
    }
}

pub(crate) fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = h.diagonal().amax();
    if let Some(chol) = Cholesky::new(h.clone()) {
        let l = chol.l_dirty();
        let dmin = l.diagonal().min();
        if dmin > 0.0 && dmin * dmin > 1e-13 * scale {
            return Ok(chol.solve(rhs));
        }
    }
    Err(MessError::MeanSystemSingular)
}
