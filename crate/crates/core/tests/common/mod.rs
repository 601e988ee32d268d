//! Independent reference computations used by the integration tests. Nothing
//! here calls into the library's numerical code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Piecewise cubic `a + b·u + c·u² + d·u³` with `u = t − x_j` on `[x_j, x_{j+1}]`.
pub struct DenseSpline {
    pub knots: Vec<f64>,
    pub coefs: Vec<[f64; 4]>,
}

/// Natural cubic interpolant by full collocation: 4(m−1) unknowns, interpolation
/// at both ends of every piece, C¹ and C² continuity at interior knots, and
/// zero second derivative at both ends.
pub fn dense_natural_spline(x: &[f64], y: &[f64]) -> DenseSpline {
    let m = x.len();
    let n = 4 * (m - 1);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut row = 0;
    for j in 0..m - 1 {
        let h = x[j + 1] - x[j];
        let c = 4 * j;
        a[(row, c)] = 1.0;
        rhs[row] = y[j];
        row += 1;
        for p in 0..4 {
            a[(row, c + p)] = h.powi(p as i32);
        }
        rhs[row] = y[j + 1];
        row += 1;
    }
    for j in 0..m - 2 {
        let h = x[j + 1] - x[j];
        let c = 4 * j;
        // first derivative
        a[(row, c + 1)] = 1.0;
        a[(row, c + 2)] = 2.0 * h;
        a[(row, c + 3)] = 3.0 * h * h;
        a[(row, c + 5)] = -1.0;
        row += 1;
        // second derivative
        a[(row, c + 2)] = 2.0;
        a[(row, c + 3)] = 6.0 * h;
        a[(row, c + 6)] = -2.0;
        row += 1;
    }
    a[(row, 2)] = 2.0;
    row += 1;
    let last = 4 * (m - 2);
    let h = x[m - 1] - x[m - 2];
    a[(row, last + 2)] = 2.0;
    a[(row, last + 3)] = 6.0 * h;
    let sol = a.lu().solve(&rhs).expect("collocation system is regular");
    DenseSpline {
        knots: x.to_vec(),
        coefs: (0..m - 1)
            .map(|j| [sol[4 * j], sol[4 * j + 1], sol[4 * j + 2], sol[4 * j + 3]])
            .collect(),
    }
}

impl DenseSpline {
    fn piece(&self, t: f64) -> usize {
        let m = self.knots.len();
        (0..m - 1).rev().find(|&j| t >= self.knots[j]).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let j = self.piece(t);
        let u = t - self.knots[j];
        let [a, b, c, d] = self.coefs[j];
        a + u * (b + u * (c + u * d))
    }

    pub fn second(&self, t: f64) -> f64 {
        let j = self.piece(t);
        let u = t - self.knots[j];
        let [_, _, c, d] = self.coefs[j];
        2.0 * c + 6.0 * d * u
    }

    /// `∫ s″²`, Simpson per piece (exact because s″² is quadratic there).
    pub fn roughness(&self) -> f64 {
        (0..self.coefs.len())
            .map(|j| {
                let (l, r) = (self.knots[j], self.knots[j + 1]);
                let [_, _, c, d] = self.coefs[j];
                let s = |u: f64| (2.0 * c + 6.0 * d * u).powi(2);
                let h = r - l;
                h / 6.0 * (s(0.0) + 4.0 * s(0.5 * h) + s(h))
            })
            .sum()
    }
}

/// Roughness matrix assembled from the dense oracle by polarisation.
pub fn dense_roughness(x: &[f64]) -> DMatrix<f64> {
    let m = x.len();
    let basis: Vec<DenseSpline> = (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            dense_natural_spline(x, &e)
        })
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut y = vec![0.0; m];
            y[i] += 1.0;
            y[j] += 1.0;
            let both = dense_natural_spline(x, &y).roughness();
            g[(i, j)] = 0.5 * (both - basis[i].roughness() - basis[j].roughness());
        }
    }
    g
}

/// Composite Simpson rule with `n` (odd) nodes.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n % 2 == 1 && n >= 3);
    let h = (hi - lo) / (n - 1) as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n - 1 {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + k as f64 * h);
    }
    s * h / 3.0
}

/// One individual's data for the dense likelihood oracles.
pub struct DenseIndividual {
    /// Grid columns observed, in order.
    pub cols: Vec<usize>,
    pub y: Vec<f64>,
}

pub fn design(cols: &[usize], m: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(cols.len(), m);
    for (r, &c) in cols.iter().enumerate() {
        x[(r, c)] = 1.0;
    }
    x
}

/// Penalized generalized log-likelihood (−2 log scale), term by term.
#[allow(clippy::too_many_arguments)]
pub fn dense_gll(
    g: &DMatrix<f64>,
    data: &[DenseIndividual],
    eta: &DVector<f64>,
    vs: &[DVector<f64>],
    d: &DMatrix<f64>,
    sigma2: f64,
    lambda: f64,
    lambda_v: f64,
) -> f64 {
    let m = g.nrows();
    let d_inv = d.clone().try_inverse().expect("invertible D");
    let log_det_d = d.determinant().ln();
    let mut total = lambda * (eta.transpose() * g * eta)[(0, 0)];
    for (ind, v) in data.iter().zip(vs) {
        let x = design(&ind.cols, m);
        let y = DVector::from_column_slice(&ind.y);
        let e = &y - &x * (eta + v);
        total += e.norm_squared() / sigma2;
        total += log_det_d;
        total += (v.transpose() * &d_inv * v)[(0, 0)];
        total += ind.y.len() as f64 * sigma2.ln();
        total += lambda_v * (v.transpose() * g * v)[(0, 0)];
    }
    total
}

/// Marginal objective with the individual curves integrated out and the mean
/// at its GLS estimate; returns `(objective, η̂)`.
pub fn dense_marginal(
    g: &DMatrix<f64>,
    data: &[DenseIndividual],
    d: &DMatrix<f64>,
    sigma2: f64,
    lambda: f64,
    lambda_v: f64,
) -> (f64, DVector<f64>) {
    let m = g.nrows();
    let pen = DMatrix::identity(m, m) + d * g * lambda_v;
    let d_v = pen.clone().try_inverse().expect("regular penalty") * d;
    let d_v = (&d_v + d_v.transpose()) * 0.5;
    let mut lhs = g * lambda;
    let mut rhs = DVector::zeros(m);
    let mut v_inv = Vec::new();
    for ind in data {
        let x = design(&ind.cols, m);
        let v = &x * &d_v * x.transpose() + DMatrix::identity(ind.y.len(), ind.y.len()) * sigma2;
        let vi = v.clone().try_inverse().expect("V invertible");
        lhs += x.transpose() * &vi * &x;
        rhs += x.transpose() * &vi * DVector::from_column_slice(&ind.y);
        v_inv.push((x, v, vi));
    }
    let eta = lhs.try_inverse().expect("mean system") * rhs;
    let mut total = lambda * (eta.transpose() * g * &eta)[(0, 0)];
    let pen_logdet = pen.determinant().ln();
    for (ind, (x, v, vi)) in data.iter().zip(&v_inv) {
        let r = DVector::from_column_slice(&ind.y) - x * &eta;
        total += (r.transpose() * vi * &r)[(0, 0)] + v.determinant().ln() + pen_logdet;
    }
    (total, eta)
}

/// Golden-section line search on `[lo, hi]`.
pub fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate descent with golden-section steps in a window around
/// the current point.
pub fn coordinate_descent<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], width: f64, sweeps: usize) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut w = width;
    for _ in 0..sweeps {
        for k in 0..x.len() {
            let centre = x[k];
            let best = golden(
                |t| {
                    let mut y = x.clone();
                    y[k] = t;
                    f(&y)
                },
                centre - w,
                centre + w,
                1e-10,
            );
            x[k] = best;
        }
        w = (w * 0.7).max(1e-3);
    }
    x
}

/// Mann–Whitney estimate of P(score_pos > score_neg) with ties counted half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let (mut p, mut n) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    wins / (p * n) as f64
}
