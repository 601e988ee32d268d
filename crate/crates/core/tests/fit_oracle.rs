mod common;

use common::{coordinate_descent, dense_gll, dense_marginal, dense_roughness, design, DenseIndividual};
use mess_core::fit::{
    blup_individuals, em_fit, estimate_mean, marginal_objective, penalized_gll, EmConfig, SmoothingPair,
    VarianceComponents,
};
use mess_core::rng;
use mess_core::simgen::{simulate_gene, SimConfig};
use mess_core::spline::CurveOnGrid;
use mess_core::LongitudinalSample;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn instance(seed: u64, dropout: f64) -> LongitudinalSample {
    let config = SimConfig {
        group_sizes: [5, 5],
        dropout,
        de_probability: 0.0,
        ..SimConfig::default()
    };
    let mut r = rng::stream(seed, 7, &[]);
    let gene = simulate_gene(&mut r, "g", &config).unwrap();
    let grid = gene.data.grid().unwrap();
    LongitudinalSample::new("g", &gene.data.groups[0], &grid).unwrap()
}

fn dense_view(sample: &LongitudinalSample) -> Vec<DenseIndividual> {
    sample
        .records()
        .iter()
        .map(|r| DenseIndividual {
            cols: r.incidence.columns().to_vec(),
            y: r.y.iter().copied().collect(),
        })
        .collect()
}

fn random_spd(seed: u64, m: usize) -> DMatrix<f64> {
    let mut r = rng::stream(seed, 8, &[]);
    let a = DMatrix::from_fn(m, m, |_, _| r.random_range(-0.5..0.5));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.05
}

#[test]
fn gll_matches_term_by_term_oracle() {
    for seed in 0..10 {
        let s = instance(seed, 0.2);
        let m = s.grid().len();
        let g = dense_roughness(s.grid().points());
        let mut r = rng::stream(seed, 9, &[]);
        let eta: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let vs: Vec<Vec<f64>> = (0..s.n_individuals())
            .map(|_| (0..m).map(|_| r.random_range(-0.3..0.3)).collect())
            .collect();
        let d = random_spd(seed, m);
        let comps = VarianceComponents::new(d.clone(), 0.07).unwrap();
        let pair = SmoothingPair::new(2.5, 0.4).unwrap();
        let curve = |v: &[f64]| CurveOnGrid::new(s.grid().clone(), v.to_vec()).unwrap();
        let got = penalized_gll(&s, &curve(&eta), &vs.iter().map(|v| curve(v)).collect::<Vec<_>>(), &comps, &pair).unwrap();
        let want = dense_gll(
            &g,
            &dense_view(&s),
            &DVector::from_vec(eta.clone()),
            &vs.iter().map(|v| DVector::from_vec(v.clone())).collect::<Vec<_>>(),
            &d,
            0.07,
            2.5,
            0.4,
        );
        assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn marginal_objective_matches_dense_oracle() {
    for seed in 0..10 {
        let s = instance(seed, 0.2);
        let m = s.grid().len();
        let g = dense_roughness(s.grid().points());
        let d = random_spd(seed + 100, m);
        let comps = VarianceComponents::new(d.clone(), 0.05).unwrap();
        let pair = SmoothingPair::new(3.0, 1.5).unwrap();
        let (obj, eta) = marginal_objective(&s, &comps, &pair).unwrap();
        let (want, want_eta) = dense_marginal(&g, &dense_view(&s), &d, 0.05, 3.0, 1.5);
        assert!((obj - want).abs() < 1e-7 * want.abs().max(1.0), "seed {seed}: {obj} vs {want}");
        for (a, b) in eta.values().iter().zip(want_eta.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn blups_minimise_the_penalized_likelihood() {
    for seed in 0..4 {
        let s = instance(seed, 0.0);
        let m = s.grid().len();
        let d = random_spd(seed + 200, m);
        let comps = VarianceComponents::new(d.clone(), 0.1).unwrap();
        let pair = SmoothingPair::new(1.0, 0.5).unwrap();
        let eta = estimate_mean(&s, &comps, &pair).unwrap();
        let blups = blup_individuals(&s, &eta, &comps, &pair).unwrap();
        let zeros: Vec<CurveOnGrid> = (0..s.n_individuals())
            .map(|_| CurveOnGrid::new(s.grid().clone(), vec![0.0; m]).unwrap())
            .collect();
        // each v_i enters its own terms only, so minimise one individual at a time
        for i in 0..s.n_individuals() {
            let objective = |v: &[f64]| {
                let mut vs = zeros.clone();
                vs[i] = CurveOnGrid::new(s.grid().clone(), v.to_vec()).unwrap();
                penalized_gll(&s, &eta, &vs, &comps, &pair).unwrap()
            };
            let best = coordinate_descent(objective, &vec![0.0; m], 2.0, 60);
            for (a, b) in best.iter().zip(blups[i].values()) {
                assert!((a - b).abs() < 1e-4, "seed {seed} individual {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn fitted_mean_solves_penalized_normal_equations() {
    for seed in 0..5 {
        let s = instance(seed, 0.15);
        let m = s.grid().len();
        let g = dense_roughness(s.grid().points());
        let pair = SmoothingPair::from_log10(1.0, 0.5);
        let fit = em_fit(&s, &pair, &EmConfig::default()).unwrap();
        let mut lhs = &g * pair.lambda;
        let mut rhs = DVector::zeros(m);
        for (rec, v) in s.records().iter().zip(&fit.v_matrices) {
            let x = design(rec.incidence.columns(), m);
            let vi = v.clone().try_inverse().unwrap();
            lhs += x.transpose() * &vi * &x;
            rhs += x.transpose() * &vi * &rec.y;
        }
        let eta = DVector::from_column_slice(fit.eta_hat.values());
        let resid = (&lhs * &eta - &rhs).norm();
        assert!(resid < 1e-8 * rhs.norm().max(1.0), "seed {seed}: {resid}");

        // each BLUP solves (XᵀX/σ² + D⁻¹ + λ_v G) v = Xᵀ(y − Xη)/σ²
        let d_inv = fit.components.d.clone().try_inverse().unwrap();
        let s2 = fit.sigma2();
        for (rec, v) in s.records().iter().zip(&fit.v_hat) {
            let x = design(rec.incidence.columns(), m);
            let a = x.transpose() * &x / s2 + &d_inv + &g * pair.lambda_v;
            let b = x.transpose() * (&rec.y - &x * &eta) / s2;
            let v = DVector::from_column_slice(v.values());
            assert!((a * v - &b).norm() < 1e-6 * b.norm().max(1.0));
        }
    }
}

fn explicit_df(s: &LongitudinalSample, fit: &mess_core::GroupFit) -> f64 {
    let m = s.grid().len();
    let g = dense_roughness(s.grid().points());
    let n_obs = s.n_observations();
    let mut x = DMatrix::zeros(n_obs, m);
    let mut w = DMatrix::zeros(n_obs, n_obs);
    let mut row = 0;
    let mut indiv = 0.0;
    let mut h = &g * fit.smoothing.lambda;
    for (rec, v) in s.records().iter().zip(&fit.v_matrices) {
        let xi = design(rec.incidence.columns(), m);
        let vi = v.clone().try_inverse().unwrap();
        let k = xi.nrows();
        x.view_mut((row, 0), (k, m)).copy_from(&xi);
        w.view_mut((row, row), (k, k)).copy_from(&vi);
        h += xi.transpose() * &vi * &xi;
        let smoother = &xi * &fit.d_v * xi.transpose() * &vi;
        indiv += smoother.trace();
        row += k;
    }
    let hat = &x * h.try_inverse().unwrap() * x.transpose() * &w;
    hat.trace() + indiv / s.n_individuals() as f64 + 2.0
}

#[test]
fn degrees_of_freedom_match_explicit_hat_matrices() {
    for seed in 0..5 {
        let s = instance(seed, 0.1);
        let fit = em_fit(&s, &SmoothingPair::from_log10(0.5, 1.0), &EmConfig::default()).unwrap();
        let k = explicit_df(&s, &fit);
        assert!((fit.edf - k).abs() < 1e-8 * k, "seed {seed}: {} vs {k}", fit.edf);
    }
    // heavy smoothing: the mean contributes a line, the individual smoother
    // little beyond its own line
    let s = instance(3, 0.0);
    let fit = em_fit(&s, &SmoothingPair::from_log10(9.0, 9.0), &EmConfig::default()).unwrap();
    let k = explicit_df(&s, &fit);
    assert!((fit.edf - k).abs() < 1e-6 * k);
    assert!(fit.edf > 4.0 - 1e-6 && fit.edf < 6.0 + 1e-6, "{}", fit.edf);
}

#[test]
fn individual_roughness_shrinks_with_penalty() {
    for seed in 0..5 {
        let s = instance(seed, 0.1);
        let m = s.grid().len();
        let g = dense_roughness(s.grid().points());
        let comps = VarianceComponents::new(random_spd(seed + 300, m), 0.05).unwrap();
        let base = SmoothingPair::new(1.0, 1.0).unwrap();
        let eta = estimate_mean(&s, &comps, &base).unwrap();
        let mut last = f64::INFINITY;
        for log_lv in [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 6.0] {
            let pair = SmoothingPair::from_log10(0.0, log_lv);
            let v = blup_individuals(&s, &eta, &comps, &pair).unwrap();
            let rough: f64 = v
                .iter()
                .map(|c| {
                    let x = DVector::from_column_slice(c.values());
                    (x.transpose() * &g * &x)[(0, 0)]
                })
                .sum();
            assert!(rough <= last * (1.0 + 1e-9) + 1e-12, "seed {seed}: {rough} > {last}");
            last = rough;
        }
    }
}

#[test]
fn em_objective_is_monotone_on_simulated_genes() {
    for seed in 0..30 {
        let s = instance(seed, if seed % 3 == 0 { 0.2 } else { 0.0 });
        let mut r = rng::stream(seed, 10, &[]);
        let pair = SmoothingPair::from_log10(r.random_range(-6.0..6.0), r.random_range(-6.0..6.0));
        let fit = em_fit(&s, &pair, &EmConfig::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0), "seed {seed}: {w:?}");
        }
        for v in &fit.v_matrices {
            assert!(nalgebra::Cholesky::new(v.clone()).is_some());
        }
    }
}
