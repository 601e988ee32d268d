//! Natural cubic smoothing-spline primitives.
//!
//! Curves are represented by their values at the design time points. The
//! natural cubic interpolant through those values is the curve; its roughness
//! `∫ s''(t)² dt` is the quadratic form `yᵀ G y` with `G = Q R⁻¹ Qᵀ`, where `Q`
//! is the banded `m × (m-2)` second-difference matrix and `R` the tridiagonal
//! `(m-2) × (m-2)` matrix of the Green–Silverman construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{MessError, Result};

/// Observation times are rounded to this resolution before grid matching.
pub const TIME_RESOLUTION: f64 = 1e-9;

/// Number of Simpson nodes used for L2 distances (2¹⁰ + 1).
pub const L2_QUADRATURE_POINTS: usize = (1 << 10) + 1;

pub fn canonical_time(t: f64) -> f64 {
    let r = (t / TIME_RESOLUTION).round() * TIME_RESOLUTION;
    // avoid -0.0 leaking into output
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Distinct, strictly increasing design time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    gaps: Vec<f64>,
}

impl TimeGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Column index of a (canonically rounded) time on the grid.
    pub fn position(&self, t: f64) -> Option<usize> {
        let t = canonical_time(t);
        self.points
            .binary_search_by(|p| p.partial_cmp(&t).expect("grid points are finite"))
            .ok()
    }

    /// `n` equally spaced times spanning the grid, endpoints included.
    pub fn uniform_samples(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.start(), self.end());
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n)
                .map(|k| {
                    if k == n - 1 {
                        b
                    } else {
                        a + (b - a) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

/// Sort and deduplicate pooled observation times into a design grid.
pub fn build_time_grid(times: &[f64]) -> Result<TimeGrid> {
    if let Some(&bad) = times.iter().find(|t| !t.is_finite()) {
        return Err(MessError::InvalidTime(bad));
    }
    let mut points: Vec<f64> = times.iter().map(|&t| canonical_time(t)).collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    if points.len() < 3 {
        return Err(MessError::GridTooSmall(points.len()));
    }
    let gaps = points.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(TimeGrid { points, gaps })
}

/// Solve a symmetric tridiagonal system in place (Thomas algorithm).
/// `diag` has length n, `off` length n-1.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    rhs[0] /= d;
    for i in 1..n {
        c[i - 1] = off[i - 1] / d;
        d = diag[i] - off[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Tridiagonal `R` of the construction, as (diagonal, off-diagonal).
fn r_bands(h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = h.len() - 1;
    let diag = (0..k).map(|j| (h[j] + h[j + 1]) / 3.0).collect();
    let off = (0..k.saturating_sub(1)).map(|j| h[j + 1] / 6.0).collect();
    (diag, off)
}

/// `Qᵀ y` for the banded second-difference matrix.
fn q_transpose_times(h: &[f64], y: &[f64]) -> Vec<f64> {
    (0..h.len() - 1)
        .map(|j| {
            (y[j + 2] - y[j + 1]) / h[j + 1] - (y[j + 1] - y[j]) / h[j]
        })
        .collect()
}

/// Second derivatives of the natural cubic interpolant at every grid point.
fn natural_second_derivatives(grid: &TimeGrid, values: &[f64]) -> Vec<f64> {
    let h = grid.gaps();
    let (diag, off) = r_bands(h);
    let mut gamma = q_transpose_times(h, values);
    solve_tridiagonal(&diag, &off, &mut gamma);
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    out.extend(gamma);
    out.push(0.0);
    out
}

/// Roughness penalty matrix `G`: `yᵀ G y = ∫ s''(t)² dt` for the natural
/// cubic interpolant `s` of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessMatrix(DMatrix<f64>);

impl RoughnessMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn quadratic_form(&self, y: &[f64]) -> f64 {
        let v = DVector::from_column_slice(y);
        v.dot(&(&self.0 * &v))
    }
}

pub fn roughness_matrix(grid: &TimeGrid) -> Result<RoughnessMatrix> {
    let m = grid.len();
    if m < 3 {
        return Err(MessError::GridTooSmall(m));
    }
    let h = grid.gaps();
    let (diag, off) = r_bands(h);
    // column r of R⁻¹Qᵀ is R⁻¹ (Qᵀ e_r)
    let mut rinv_qt = DMatrix::zeros(m - 2, m);
    let mut e = vec![0.0; m];
    for r in 0..m {
        e[r] = 1.0;
        let mut col = q_transpose_times(h, &e);
        solve_tridiagonal(&diag, &off, &mut col);
        rinv_qt.column_mut(r).copy_from_slice(&col);
        e[r] = 0.0;
    }
    let mut q = DMatrix::zeros(m, m - 2);
    for j in 0..m - 2 {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
    }
    let mut g = q * rinv_qt;
    // exact symmetry
    for i in 0..m {
        for j in i + 1..m {
            let s = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    Ok(RoughnessMatrix(g))
}

/// Binary incidence matrix mapping one individual's observation times onto
/// the design grid. Stored as the grid column of each observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    columns: Vec<usize>,
    grid_len: usize,
}

impl IncidenceMatrix {
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn rows(&self) -> usize {
        self.columns.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.columns.len(), self.grid_len);
        for (row, &col) in self.columns.iter().enumerate() {
            x[(row, col)] = 1.0;
        }
        x
    }
}

pub fn incidence_matrix(times: &[f64], grid: &TimeGrid) -> Result<IncidenceMatrix> {
    let columns = times
        .iter()
        .map(|&t| grid.position(t).ok_or(MessError::OffGrid(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IncidenceMatrix {
        columns,
        grid_len: grid.len(),
    })
}

/// A natural cubic spline given by its values on a design grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOnGrid {
    grid: TimeGrid,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CurveOnGrid {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MessError::Dimension(format!(
                "curve has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let second = natural_second_derivatives(&grid, &values);
        Ok(Self {
            grid,
            values,
            second,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Second derivatives at the grid points (zero at both ends).
    pub fn second_derivatives(&self) -> &[f64] {
        &self.second
    }

    /// Times are matched to grid points after canonical rounding, like
    /// observation times.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.grid.start(), self.grid.end());
        let tc = canonical_time(t);
        if !(lo..=hi).contains(&tc) {
            return Err(MessError::Extrapolation { t, lo, hi });
        }
        let pts = self.grid.points();
        let i = match pts.binary_search_by(|p| p.total_cmp(&tc)) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i - 1,
        };
        Ok(self.eval_in(i, t.clamp(lo, hi)))
    }

    /// Evaluate on interval `[τ_i, τ_{i+1}]`.
    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let pts = self.grid.points();
        let h = self.grid.gaps()[i];
        let (a, b) = (t - pts[i], pts[i + 1] - t);
        let (g0, g1) = (self.values[i], self.values[i + 1]);
        let (c0, c1) = (self.second[i], self.second[i + 1]);
        (a * g1 + b * g0) / h
            - a * b / 6.0 * ((1.0 + a / h) * c1 + (1.0 + b / h) * c0)
    }

    /// Values at an ascending sequence of times inside the grid range.
    pub fn eval_sorted(&self, ts: &[f64]) -> Result<Vec<f64>> {
        let last = self.grid.len() - 2;
        let mut i = 0;
        ts.iter()
            .map(|&t| {
                let (lo, hi) = (self.grid.start(), self.grid.end());
                if !(lo..=hi).contains(&canonical_time(t)) {
                    return Err(MessError::Extrapolation { t, lo, hi });
                }
                let t = t.clamp(lo, hi);
                while i < last && t > self.grid.points()[i + 1] {
                    i += 1;
                }
                Ok(self.eval_in(i, t))
            })
            .collect()
    }
}

pub fn eval_spline(curve: &CurveOnGrid, t: f64) -> Result<f64> {
    curve.eval(t)
}

/// `∫ (a(t) - b(t))² dt` over the grid range by composite Simpson with
/// `n_points` (odd, ≥ 3) equally spaced nodes.
pub fn l2_distance_simpson(a: &CurveOnGrid, b: &CurveOnGrid, n_points: usize) -> Result<f64> {
    if a.grid != b.grid {
        return Err(MessError::GridMismatch);
    }
    if n_points < 3 || n_points % 2 == 0 {
        return Err(MessError::InvalidParameter(format!(
            "Simpson needs an odd node count >= 3, got {n_points}"
        )));
    }
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    if diff.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let curve = CurveOnGrid::new(a.grid.clone(), diff)?;
    let ts = a.grid.uniform_samples(n_points);
    let f = curve.eval_sorted(&ts)?;
    let step = (a.grid.end() - a.grid.start()) / (n_points - 1) as f64;
    let mut acc = f[0] * f[0] + f[n_points - 1] * f[n_points - 1];
    for (k, v) in f.iter().enumerate().take(n_points - 1).skip(1) {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * v * v;
    }
    Ok((acc * step / 3.0).max(0.0))
}

/// Squared L2 distance between two curves on a shared grid.
pub fn l2_distance(a: &CurveOnGrid, b: &CurveOnGrid) -> Result<f64> {
    l2_distance_simpson(a, b, L2_QUADRATURE_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(ts: &[f64]) -> TimeGrid {
        build_time_grid(ts).unwrap()
    }

    #[test]
    fn grid_sorts_and_dedupes() {
        let g = grid(&[0.0, 2.0, 6.0, 12.0, 24.0, 2.0, 0.0]);
        assert_eq!(g.points(), &[0.0, 2.0, 6.0, 12.0, 24.0]);
        assert_eq!(g.gaps(), &[2.0, 4.0, 6.0, 12.0]);
        let g = grid(&[0.0, 1.0, 2.0]);
        assert_eq!(g.gaps(), &[1.0, 1.0]);
    }

    #[test]
    fn grid_errors() {
        assert_eq!(build_time_grid(&[5.0, 5.0, 5.0]), Err(MessError::GridTooSmall(1)));
        assert!(matches!(
            build_time_grid(&[0.0, f64::NAN, 1.0, 2.0]),
            Err(MessError::InvalidTime(_))
        ));
    }

    #[test]
    fn grid_merges_float_noise() {
        let g = grid(&[0.0, 2.0 + 1e-12, 2.0, 6.0]);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn three_point_roughness() {
        let g = roughness_matrix(&grid(&[0.0, 1.0, 2.0])).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1.5, -3.0, 1.5, -3.0, 6.0, -3.0, 1.5, -3.0, 1.5],
        );
        assert!((g.matrix() - expected).abs().max() < 1e-14);
        assert_abs_diff_eq!(g.quadratic_form(&[0.0, 1.0, 0.0]), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn roughness_annihilates_lines() {
        let gr = grid(&[0.0, 2.0, 6.0, 12.0, 24.0]);
        let g = roughness_matrix(&gr).unwrap();
        let line: Vec<f64> = gr.points().iter().map(|t| 0.3 - 1.7 * t).collect();
        assert!(g.quadratic_form(&line).abs() < 1e-10);
    }

    #[test]
    fn incidence_skips_missing_time() {
        let gr = grid(&[0.0, 2.0, 6.0, 12.0, 24.0]);
        let x = incidence_matrix(&[0.0, 2.0, 6.0, 24.0], &gr).unwrap();
        assert_eq!(x.columns(), &[0, 1, 2, 4]);
        let dense = x.to_dense();
        assert_eq!(dense.shape(), (4, 5));
        assert_eq!(dense.column(3).sum(), 0.0);
        for r in 0..4 {
            assert_eq!(dense.row(r).sum(), 1.0);
        }
        let full = incidence_matrix(gr.points(), &gr).unwrap().to_dense();
        assert_eq!(full, DMatrix::identity(5, 5));
        assert_eq!(incidence_matrix(&[3.0], &gr), Err(MessError::OffGrid(3.0)));
    }

    #[test]
    fn spline_known_value() {
        let c = CurveOnGrid::new(grid(&[0.0, 1.0, 2.0]), vec![0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(c.eval(0.5).unwrap(), 0.6875, epsilon = 1e-14);
        assert_eq!(c.eval(1.0).unwrap(), 1.0);
        assert!(matches!(c.eval(2.5), Err(MessError::Extrapolation { .. })));
        assert!(matches!(c.eval(-0.1), Err(MessError::Extrapolation { .. })));
    }

    #[test]
    fn collinear_values_give_the_line() {
        let gr = grid(&[0.0, 2.0, 6.0, 12.0, 24.0]);
        let vals = gr.points().iter().map(|t| 1.0 + 0.5 * t).collect();
        let c = CurveOnGrid::new(gr, vals).unwrap();
        for t in [0.3, 4.4, 11.0, 19.5] {
            assert_abs_diff_eq!(c.eval(t).unwrap(), 1.0 + 0.5 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn l2_constant_shift() {
        let gr = grid(&[0.0, 2.0, 6.0, 12.0, 24.0]);
        let a = CurveOnGrid::new(gr.clone(), vec![1.0, 2.0, 0.5, -1.0, 3.0]).unwrap();
        let b = CurveOnGrid::new(gr.clone(), vec![2.0, 3.0, 1.5, 0.0, 4.0]).unwrap();
        assert_abs_diff_eq!(l2_distance(&a, &b).unwrap(), 24.0, epsilon = 1e-9);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let other = CurveOnGrid::new(grid(&[0.0, 1.0, 2.0]), vec![0.0; 3]).unwrap();
        assert_eq!(l2_distance(&a, &other), Err(MessError::GridMismatch));
    }
}
