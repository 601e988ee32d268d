//! Mixed-effects smoothing-spline fit of one gene in one group.
//!
//! The model is `y_i = X_i η + X_i v_i + ε_i` with `v_i ~ N(0, D)` and
//! `ε_i ~ N(0, σ² I)`. Roughness penalties `λ ηᵀGη` and `λ_v Σ v_iᵀGv_i` are
//! added to the generalized log-likelihood; variance components are estimated
//! by EM for fixed `(λ, λ_v)`, and the smoothing pair is chosen by minimising
//! AICc with a downhill simplex in log₁₀ space.

mod em;

use nalgebra::{DMatrix, DVector};

use crate::data::{GeneData, LongitudinalSample};
use crate::error::{MessError, Result};
use crate::simplex::{self, SimplexOptions};
use crate::spline::{roughness_matrix, CurveOnGrid};

use em::{floor_eigenvalues, solve_spd, symmetrize, Model, SIGMA2_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents {
    /// Covariance of the individual deviations at the design points.
    pub d: DMatrix<f64>,
    /// Error variance, `R_i = σ² I`.
    pub sigma2: f64,
}

impl VarianceComponents {
    pub fn new(d: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if !d.is_square() || d.iter().any(|x| !x.is_finite()) {
            return Err(MessError::DegenerateComponents);
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(MessError::DegenerateComponents);
        }
        Ok(Self { d, sigma2 })
    }
}

/// Smoothing parameters for the mean curve (`lambda`) and the shared
/// individual-curve penalty (`lambda_v`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingPair {
    pub lambda: f64,
    pub lambda_v: f64,
}

impl SmoothingPair {
    pub fn new(lambda: f64, lambda_v: f64) -> Result<Self> {
        for v in [lambda, lambda_v] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MessError::InvalidParameter(format!(
                    "smoothing parameter must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self { lambda, lambda_v })
    }

    pub fn from_log10(log_lambda: f64, log_lambda_v: f64) -> Self {
        Self {
            lambda: 10f64.powf(log_lambda),
            lambda_v: 10f64.powf(log_lambda_v),
        }
    }

    pub fn log10(&self) -> (f64, f64) {
        (self.lambda.log10(), self.lambda_v.log10())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative change of the objective that counts as converged.
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Box for `(log₁₀ λ, log₁₀ λ_v)`.
    pub log_lower: f64,
    pub log_upper: f64,
    pub initial_simplex: [[f64; 2]; 3],
    pub spread_tol: f64,
    pub max_evals: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            log_lower: -6.0,
            log_upper: 6.0,
            initial_simplex: [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            spread_tol: 1e-4,
            max_evals: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitConfig {
    pub em: EmConfig,
    pub search: SearchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub eta_hat: CurveOnGrid,
    pub v_hat: Vec<CurveOnGrid>,
    pub components: VarianceComponents,
    pub smoothing: SmoothingPair,
    /// `D_v = (D⁻¹ + λ_v G)⁻¹`.
    pub d_v: DMatrix<f64>,
    /// `V_i = X_i D_v X_iᵀ + σ² I`, one per individual.
    pub v_matrices: Vec<DMatrix<f64>>,
    /// Penalized generalized log-likelihood (−2 log scale) at the fitted values.
    pub penalized_gll: f64,
    /// Penalized objective with the individual curves integrated out; the
    /// quantity EM decreases.
    pub objective: f64,
    /// Objective after initialisation and after every EM iteration.
    pub objective_trace: Vec<f64>,
    pub aicc: f64,
    pub edf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// σ² hit its floor (degenerate, near noise-free data).
    pub sigma2_floored: bool,
}

impl GroupFit {
    pub fn sigma2(&self) -> f64 {
        self.components.sigma2
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn curve(sample: &LongitudinalSample, v: &DVector<f64>) -> Result<CurveOnGrid> {
    CurveOnGrid::new(sample.grid().clone(), to_vec(v))
}

fn check_dims(sample: &LongitudinalSample, d: &DMatrix<f64>) -> Result<()> {
    let m = sample.grid().len();
    if d.nrows() != m || d.ncols() != m {
        return Err(MessError::Dimension(format!(
            "D is {}x{} but the grid has {m} points",
            d.nrows(),
            d.ncols()
        )));
    }
    Ok(())
}

/// Twice the negative generalized log-likelihood plus both roughness
/// penalties, evaluated at the given curves and components. Smaller is better.
pub fn penalized_gll(
    sample: &LongitudinalSample,
    eta: &CurveOnGrid,
    v_list: &[CurveOnGrid],
    components: &VarianceComponents,
    smoothing: &SmoothingPair,
) -> Result<f64> {
    let g = roughness_matrix(sample.grid())?;
    let eta = DVector::from_column_slice(eta.values());
    let vs: Vec<DVector<f64>> = v_list
        .iter()
        .map(|c| DVector::from_column_slice(c.values()))
        .collect();
    penalized_gll_raw(sample, g.matrix(), &eta, &vs, components, smoothing)
}

fn penalized_gll_raw(
    sample: &LongitudinalSample,
    g: &DMatrix<f64>,
    eta: &DVector<f64>,
    vs: &[DVector<f64>],
    components: &VarianceComponents,
    smoothing: &SmoothingPair,
) -> Result<f64> {
    check_dims(sample, &components.d)?;
    let m = sample.grid().len();
    if eta.len() != m || vs.len() != sample.n_individuals() || vs.iter().any(|v| v.len() != m) {
        return Err(MessError::Dimension("curve lengths do not match the sample".into()));
    }
    let chol = nalgebra::Cholesky::new(components.d.clone()).ok_or(MessError::DegenerateComponents)?;
    let logdet_d = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    if !logdet_d.is_finite() {
        return Err(MessError::DegenerateComponents);
    }
    let sigma2 = components.sigma2;
    let mut total = 0.0;
    for (rec, v) in sample.records().iter().zip(vs) {
        let o = rec.incidence.columns();
        let rss: f64 = o
            .iter()
            .enumerate()
            .map(|(k, &c)| (rec.y[k] - eta[c] - v[c]).powi(2))
            .sum();
        total += rss / sigma2
            + logdet_d
            + v.dot(&chol.solve(v))
            + o.len() as f64 * sigma2.ln()
            + smoothing.lambda_v * v.dot(&(g * v));
    }
    Ok(total + smoothing.lambda * eta.dot(&(g * eta)))
}

/// Closed-form penalized GLS estimate of the mean curve.
pub fn estimate_mean(
    sample: &LongitudinalSample,
    components: &VarianceComponents,
    smoothing: &SmoothingPair,
) -> Result<CurveOnGrid> {
    check_dims(sample, &components.d)?;
    let g = roughness_matrix(sample.grid())?;
    let model = Model {
        sample,
        g: g.matrix(),
        lambda: smoothing.lambda,
        lambda_v: smoothing.lambda_v,
    };
    let f = model.factor(&components.d, components.sigma2)?;
    curve(sample, &model.mean(&f)?)
}

/// Best linear unbiased predictions of the individual deviations given a mean.
pub fn blup_individuals(
    sample: &LongitudinalSample,
    eta: &CurveOnGrid,
    components: &VarianceComponents,
    smoothing: &SmoothingPair,
) -> Result<Vec<CurveOnGrid>> {
    check_dims(sample, &components.d)?;
    let g = roughness_matrix(sample.grid())?;
    let model = Model {
        sample,
        g: g.matrix(),
        lambda: smoothing.lambda,
        lambda_v: smoothing.lambda_v,
    };
    let f = model.factor(&components.d, components.sigma2)?;
    let eta = DVector::from_column_slice(eta.values());
    model
        .e_step(&f, &eta)
        .v_hat
        .iter()
        .map(|v| curve(sample, v))
        .collect()
}

/// Penalized objective with the individual curves integrated out, with the
/// mean profiled at its closed-form estimate. Returns `(objective, η̂)`.
pub fn marginal_objective(
    sample: &LongitudinalSample,
    components: &VarianceComponents,
    smoothing: &SmoothingPair,
) -> Result<(f64, CurveOnGrid)> {
    check_dims(sample, &components.d)?;
    let g = roughness_matrix(sample.grid())?;
    let model = Model {
        sample,
        g: g.matrix(),
        lambda: smoothing.lambda,
        lambda_v: smoothing.lambda_v,
    };
    let f = model.factor(&components.d, components.sigma2)?;
    let eta = model.mean(&f)?;
    Ok((model.objective(&f, &eta), curve(sample, &eta)?))
}

/// EM estimation of `(D, σ²)` for fixed smoothing, returning the full fit.
pub fn em_fit(
    sample: &LongitudinalSample,
    smoothing: &SmoothingPair,
    config: &EmConfig,
) -> Result<GroupFit> {
    let g = roughness_matrix(sample.grid())?;
    let g = g.matrix();
    let m = sample.grid().len();
    let model = Model {
        sample,
        g,
        lambda: smoothing.lambda,
        lambda_v: smoothing.lambda_v,
    };

    // σ² from the residuals of the mean curve fitted alone
    let (mut lhs, mut rhs) = (DMatrix::<f64>::zeros(m, m), DVector::<f64>::zeros(m));
    for rec in sample.records() {
        for (k, &c) in rec.incidence.columns().iter().enumerate() {
            lhs[(c, c)] += 1.0;
            rhs[c] += rec.y[k];
        }
    }
    let mut h0 = lhs + g * smoothing.lambda;
    symmetrize(&mut h0);
    let eta0 = solve_spd(h0, &rhs)?;
    let ss0: f64 = (0..sample.n_individuals())
        .map(|i| model.residual(i, &eta0).norm_squared())
        .sum();
    let mut sigma2_floored = false;
    let mut sigma2 = ss0 / sample.n_observations() as f64;
    if !(sigma2 > SIGMA2_FLOOR) {
        sigma2 = SIGMA2_FLOOR;
        sigma2_floored = true;
    }
    let mut d = DMatrix::identity(m, m) * 0.1;

    let mut factored = model.factor(&d, sigma2)?;
    let mut eta = model.mean(&factored)?;
    let mut obj = model.objective(&factored, &eta);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let e = model.e_step(&factored, &eta);
        let (mut d_new, mut s_new) = model.m_step(&e, &eta);
        floor_eigenvalues(&mut d_new);
        if !(s_new > SIGMA2_FLOOR) {
            s_new = SIGMA2_FLOOR;
            sigma2_floored = true;
        }
        let f_new = model.factor(&d_new, s_new)?;
        let eta_new = model.mean(&f_new)?;
        let obj_new = model.objective(&f_new, &eta_new);
        if !obj_new.is_finite() {
            return Err(MessError::DegenerateComponents);
        }
        let change = (obj - obj_new).abs() / obj.abs().max(1.0);
        d = d_new;
        sigma2 = s_new;
        factored = f_new;
        eta = eta_new;
        obj = obj_new;
        trace.push(obj);
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let e = model.e_step(&factored, &eta);
    let components = VarianceComponents { d, sigma2 };
    let pgll = penalized_gll_raw(sample, g, &eta, &e.v_hat, &components, smoothing)
        .unwrap_or(f64::NAN);

    let v_matrices = sample
        .records()
        .iter()
        .map(|rec| {
            let o = rec.incidence.columns();
            let mut v = em::submatrix(&factored.d_v, o, o);
            for k in 0..o.len() {
                v[(k, k)] += sigma2;
            }
            v
        })
        .collect();

    let (edf, aicc_value) = information(&model, &factored, &eta, &e.v_hat, &components)?;

    Ok(GroupFit {
        eta_hat: curve(sample, &eta)?,
        v_hat: e.v_hat.iter().map(|v| curve(sample, v)).collect::<Result<_>>()?,
        d_v: factored.d_v.clone(),
        v_matrices,
        components,
        smoothing: *smoothing,
        penalized_gll: pgll,
        objective: obj,
        objective_trace: trace,
        aicc: aicc_value,
        edf,
        iterations,
        converged,
        sigma2_floored,
    })
}

/// Effective degrees of freedom `k = tr(A) + mean_i tr(S_i) + 2`.
fn effective_df(model: &Model, f: &em::Factored) -> Result<f64> {
    let (lhs, _) = model.normal_equations(f);
    let mut h = &lhs + model.g * model.lambda;
    symmetrize(&mut h);
    let chol = nalgebra::Cholesky::new(h).ok_or(MessError::MeanSystemSingular)?;
    let mean_trace = chol.solve(&lhs).trace();
    let mut indiv = 0.0;
    for (rec, c) in model.sample.records().iter().zip(&f.chols) {
        let o = rec.incidence.columns();
        let dvo = em::submatrix(&f.d_v, o, o);
        // tr(D_v[o,o] V⁻¹)
        indiv += c.solve(&dvo).trace();
    }
    Ok(mean_trace + indiv / model.sample.n_individuals() as f64 + 2.0)
}

fn information(
    model: &Model,
    f: &em::Factored,
    eta: &DVector<f64>,
    v_hat: &[DVector<f64>],
    components: &VarianceComponents,
) -> Result<(f64, f64)> {
    let k = effective_df(model, f)?;
    let unpenalized = SmoothingPair {
        lambda: 0.0,
        lambda_v: 0.0,
    };
    let neg2ll = penalized_gll_raw(model.sample, model.g, eta, v_hat, components, &unpenalized)
        .unwrap_or(f64::INFINITY);
    Ok((k, aicc_formula(neg2ll, k, model.sample.n_observations())))
}

/// `−2ℓ + 2kN/(N−k−1)`, saturating to `+∞` when `N − k − 1 ≤ 0`.
pub fn aicc_formula(neg2_loglik: f64, k: f64, n_obs: usize) -> f64 {
    let n = n_obs as f64;
    let denom = n - k - 1.0;
    if denom <= 0.0 || !neg2_loglik.is_finite() {
        return f64::INFINITY;
    }
    neg2_loglik + 2.0 * k * n / denom
}

/// Corrected AIC of a completed fit, recomputed from its components.
pub fn aicc(fit: &GroupFit, sample: &LongitudinalSample) -> Result<f64> {
    let g = roughness_matrix(sample.grid())?;
    let model = Model {
        sample,
        g: g.matrix(),
        lambda: fit.smoothing.lambda,
        lambda_v: fit.smoothing.lambda_v,
    };
    let f = model.factor(&fit.components.d, fit.components.sigma2)?;
    let eta = DVector::from_column_slice(fit.eta_hat.values());
    let vs: Vec<DVector<f64>> = fit
        .v_hat
        .iter()
        .map(|c| DVector::from_column_slice(c.values()))
        .collect();
    Ok(information(&model, &f, &eta, &vs, &fit.components)?.1)
}

/// One evaluated vertex of the smoothing search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPoint {
    pub log_lambda: f64,
    pub log_lambda_v: f64,
    pub outcome: std::result::Result<f64, MessError>,
}

/// Choose `(λ, λ_v)` by minimising AICc with a downhill simplex over the
/// log₁₀ box. Returns the best fit evaluated.
pub fn select_smoothing(sample: &LongitudinalSample, config: &FitConfig) -> Result<GroupFit> {
    let s = &config.search;
    let mut opts = SimplexOptions::boxed(vec![s.log_lower; 2], vec![s.log_upper; 2]);
    opts.spread_tol = s.spread_tol;
    opts.max_evals = s.max_evals;
    let initial: Vec<Vec<f64>> = s.initial_simplex.iter().map(|p| p.to_vec()).collect();

    let mut best: Option<GroupFit> = None;
    let mut log: Vec<SearchPoint> = Vec::new();
    simplex::minimize(
        |x| {
            if let Some(p) = log
                .iter()
                .find(|p| p.log_lambda == x[0] && p.log_lambda_v == x[1])
            {
                return p.outcome.clone().unwrap_or(f64::INFINITY);
            }
            let pair = SmoothingPair::from_log10(x[0], x[1]);
            let outcome = em_fit(sample, &pair, &config.em).map(|fit| {
                let score = fit.aicc;
                if best.as_ref().is_none_or(|b| score < b.aicc) {
                    best = Some(fit);
                }
                score
            });
            let score = outcome.clone().unwrap_or(f64::INFINITY);
            log.push(SearchPoint {
                log_lambda: x[0],
                log_lambda_v: x[1],
                outcome,
            });
            score
        },
        &initial,
        &opts,
    );

    match best {
        Some(fit) => Ok(fit),
        None => Err(MessError::SelectionFailed(
            log.iter()
                .map(|p| match &p.outcome {
                    Ok(v) => format!("({:.3},{:.3}) aicc={v}", p.log_lambda, p.log_lambda_v),
                    Err(e) => format!("({:.3},{:.3}) {e}", p.log_lambda, p.log_lambda_v),
                })
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

/// Fit both groups of a gene independently on the grid of all observed times.
pub fn fit_gene(gene: &GeneData, config: &FitConfig) -> Result<(GroupFit, GroupFit)> {
    let grid = gene.grid()?;
    let a = LongitudinalSample::new(&gene.id, &gene.groups[0], &grid)?;
    let b = LongitudinalSample::new(&gene.id, &gene.groups[1], &grid)?;
    Ok((select_smoothing(&a, config)?, select_smoothing(&b, config)?))
}
