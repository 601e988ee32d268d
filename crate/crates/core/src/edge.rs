//! Simplified EDGE-style comparator.
//!
//! Each group mean is a B-spline curve and every individual contributes a
//! scalar shift, centred to sum to zero within its group. The full model has
//! one curve per group; the null model shares a single curve. Genes are scored
//! with the residual ratio `F = (RSS_null − RSS_full) / RSS_full`.
//!
//! This is a reduced re-implementation of the model family, not a port of the
//! released EDGE software: knot selection, permutation machinery and q-value
//! estimation are not included.

use nalgebra::{DMatrix, DVector};

use crate::data::{GeneData, GroupSeries};
use crate::error::{MessError, Result};
use crate::simgen::BsplineBasis;

pub const DEFAULT_BASIS_DIM: usize = 5;

/// Basis of the requested dimension on `[lo, hi]`: polynomial (no interior
/// knots) up to dimension 4, cubic with `dim − 4` equally spaced interior
/// knots beyond that.
pub fn edge_basis(lo: f64, hi: f64, dim: usize) -> Result<BsplineBasis> {
    match dim {
        0 | 1 => Err(MessError::InvalidParameter(format!(
            "basis dimension must be >= 2, got {dim}"
        ))),
        2..=4 => BsplineBasis::new(lo, hi, &[], dim - 1),
        _ => BsplineBasis::uniform(lo, hi, dim - 4, 3),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFit {
    /// Full-model curve coefficients, one vector per group.
    pub coefficients: [DVector<f64>; 2],
    /// Null-model shared curve coefficients.
    pub null_coefficients: DVector<f64>,
    /// Full-model centred shifts per group.
    pub shifts: [Vec<f64>; 2],
    pub rss_full: f64,
    pub rss_null: f64,
    pub basis_dim: usize,
    /// `Σ y²`, used as the scale for treating an RSS as zero.
    pub total_ss: f64,
}

struct Rows {
    group: Vec<usize>,
    individual: Vec<usize>,
    basis: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn collect_rows(gene: &GeneData, basis: &BsplineBasis) -> Result<Rows> {
    let mut rows = Rows {
        group: Vec::new(),
        individual: Vec::new(),
        basis: Vec::new(),
        y: Vec::new(),
    };
    for (g, grp) in gene.groups.iter().enumerate() {
        for (i, ind) in grp.individuals.iter().enumerate() {
            for (&t, &v) in ind.times.iter().zip(&ind.values) {
                rows.group.push(g);
                rows.individual.push(i);
                rows.basis.push(basis.row(t)?);
                rows.y.push(v);
            }
        }
    }
    Ok(rows)
}

/// Columns for centred shifts: individual `i < n−1` gets `e_i − e_{n−1}`.
fn shift_value(i: usize, col: usize, n: usize) -> f64 {
    if i == col {
        1.0
    } else if i == n - 1 {
        -1.0
    } else {
        0.0
    }
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * x.nrows().max(x.ncols()) as f64;
    if svd.rank(tol) < x.ncols() {
        return Err(MessError::BasisTooRich(format!(
            "{} columns but rank {}",
            x.ncols(),
            svd.rank(tol)
        )));
    }
    let beta = svd
        .solve(y, tol)
        .map_err(|e| MessError::BasisTooRich(e.to_string()))?;
    let rss = (y - x * &beta).norm_squared();
    Ok((beta, rss))
}

fn centred_shifts(params: &DVector<f64>, offset: usize, n: usize) -> Vec<f64> {
    let free: Vec<f64> = (0..n - 1).map(|k| params[offset + k]).collect();
    let mut s = free.clone();
    s.push(-free.iter().sum::<f64>());
    s
}

fn check_group(grp: &GroupSeries) -> Result<()> {
    if grp.individuals.is_empty() {
        return Err(MessError::InvalidSample(format!("group {} is empty", grp.label)));
    }
    Ok(())
}

pub fn fit_edge(gene: &GeneData, basis_dim: usize) -> Result<EdgeFit> {
    for grp in &gene.groups {
        check_group(grp)?;
    }
    let grid = gene.grid()?;
    let basis = edge_basis(grid.start(), grid.end(), basis_dim)?;
    let p = basis.dim();
    let rows = collect_rows(gene, &basis)?;
    let n_obs = rows.y.len();
    let sizes = [gene.groups[0].individuals.len(), gene.groups[1].individuals.len()];
    let shift_cols = sizes[0] - 1 + sizes[1] - 1;
    let shift_offset = |g: usize| if g == 0 { 0 } else { sizes[0] - 1 };
    let y = DVector::from_vec(rows.y.clone());

    let fill_shifts = |x: &mut DMatrix<f64>, base: usize| {
        for r in 0..n_obs {
            let g = rows.group[r];
            let n = sizes[g];
            for c in 0..n - 1 {
                x[(r, base + shift_offset(g) + c)] = shift_value(rows.individual[r], c, n);
            }
        }
    };

    let mut full = DMatrix::zeros(n_obs, 2 * p + shift_cols);
    for r in 0..n_obs {
        let base = rows.group[r] * p;
        for c in 0..p {
            full[(r, base + c)] = rows.basis[r][c];
        }
    }
    fill_shifts(&mut full, 2 * p);
    let (beta_full, rss_full) = least_squares(&full, &y)?;

    let mut null = DMatrix::zeros(n_obs, p + shift_cols);
    for r in 0..n_obs {
        for c in 0..p {
            null[(r, c)] = rows.basis[r][c];
        }
    }
    fill_shifts(&mut null, p);
    let (beta_null, rss_null) = least_squares(&null, &y)?;

    Ok(EdgeFit {
        coefficients: [
            beta_full.rows(0, p).into_owned(),
            beta_full.rows(p, p).into_owned(),
        ],
        null_coefficients: beta_null.rows(0, p).into_owned(),
        shifts: [
            centred_shifts(&beta_full, 2 * p, sizes[0]),
            centred_shifts(&beta_full, 2 * p + sizes[0] - 1, sizes[1]),
        ],
        // nesting holds exactly; clip rounding so the ordering survives
        rss_full: rss_full.min(rss_null),
        rss_null,
        basis_dim: p,
        total_ss: y.norm_squared(),
    })
}

/// `(RSS_null − RSS_full) / RSS_full`; `+∞` when the full model is exact and
/// the null model is not, `0` when both are exact.
pub fn f_statistic(fit: &EdgeFit) -> f64 {
    let zero = 1e-24 * (fit.total_ss + 1.0);
    let full_exact = fit.rss_full <= zero;
    let null_exact = fit.rss_null <= zero;
    match (full_exact, null_exact) {
        (true, true) => 0.0,
        (true, false) => f64::INFINITY,
        _ => ((fit.rss_null - fit.rss_full) / fit.rss_full).max(0.0),
    }
}
