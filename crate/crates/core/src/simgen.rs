//! Simulation of replicated two-group time courses from a B-spline
//! mixed-effects model.
//!
//! Group means and individual deviations share one clamped cubic B-spline
//! basis with a single interior knot at the centre of the time range.
//! Coefficient covariances have the AR(1) form `D(τ, ρ)[r, s] = τ ρ^|r−s|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::data::{GeneData, GroupSeries, IndividualSeries};
use crate::error::{MessError, Result};
use crate::rng;

/// `D(τ, ρ)`: AR(1)-structured covariance of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Covariance {
    pub tau: f64,
    pub rho: f64,
    pub dim: usize,
}

pub fn ar1_covariance(tau: f64, rho: f64, dim: usize) -> Result<Ar1Covariance> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(MessError::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(MessError::InvalidParameter(format!("rho must be in [0, 1], got {rho}")));
    }
    if dim == 0 {
        return Err(MessError::InvalidParameter("dimension must be >= 1".into()));
    }
    Ok(Ar1Covariance { tau, rho, dim })
}

impl Ar1Covariance {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, s| {
            self.tau * self.rho.powi((r as i32 - s as i32).abs())
        })
    }

    /// Closed-form lower Cholesky factor; at `ρ = 1` only the first column is
    /// non-zero, so every draw is one scalar broadcast over all coefficients.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let root_tau = self.tau.sqrt();
        let innov = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        DMatrix::from_fn(self.dim, self.dim, |r, s| {
            if s > r {
                0.0
            } else if s == 0 {
                root_tau * self.rho.powi(r as i32)
            } else {
                root_tau * self.rho.powi((r - s) as i32) * innov
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        // AR(1) recursion, equivalent to L z with the factor above
        let root_tau = self.tau.sqrt();
        let innov = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        let mut out = DVector::zeros(self.dim);
        let mut prev = 0.0;
        for r in 0..self.dim {
            let z: f64 = StandardNormal.sample(rng);
            prev = if r == 0 { z } else { self.rho * prev + innov * z };
            out[r] = root_tau * prev;
        }
        out
    }
}

/// Clamped B-spline basis on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsplineBasis {
    degree: usize,
    knots: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl BsplineBasis {
    pub fn new(lo: f64, hi: f64, interior: &[f64], degree: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(MessError::InvalidParameter(format!("empty range [{lo}, {hi}]")));
        }
        if interior.iter().any(|&k| !(k > lo && k < hi)) {
            return Err(MessError::InvalidParameter(
                "interior knots must lie strictly inside the range".into(),
            ));
        }
        if interior.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MessError::InvalidParameter("interior knots must increase".into()));
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            knots,
            lo,
            hi,
        })
    }

    /// Cubic basis with `n` equally spaced interior knots.
    pub fn uniform(lo: f64, hi: f64, n_interior: usize, degree: usize) -> Result<Self> {
        let interior: Vec<f64> = (1..=n_interior)
            .map(|k| lo + (hi - lo) * k as f64 / (n_interior + 1) as f64)
            .collect();
        Self::new(lo, hi, &interior, degree)
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Cox–de Boor evaluation of every basis function at `t`.
    pub fn row(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= self.lo && t <= self.hi) {
            return Err(MessError::InvalidParameter(format!(
                "time {t} outside basis range [{}, {}]",
                self.lo, self.hi
            )));
        }
        let k = &self.knots;
        let n0 = k.len() - 1;
        // the last non-empty span is closed on the right
        let last_span = (0..n0).rev().find(|&i| k[i] < k[i + 1]).unwrap();
        let mut b: Vec<f64> = (0..n0)
            .map(|i| {
                let inside = k[i] <= t && t < k[i + 1];
                if inside || (i == last_span && t == self.hi) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for p in 1..=self.degree {
            let next: Vec<f64> = (0..n0 - p)
                .map(|i| {
                    let left = if k[i + p] > k[i] {
                        (t - k[i]) / (k[i + p] - k[i]) * b[i]
                    } else {
                        0.0
                    };
                    let right = if k[i + p + 1] > k[i + 1] {
                        (k[i + p + 1] - t) / (k[i + p + 1] - k[i + 1]) * b[i + 1]
                    } else {
                        0.0
                    };
                    left + right
                })
                .collect();
            b = next;
        }
        Ok(b)
    }

    pub fn design(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(times.len(), self.dim());
        for (r, &t) in times.iter().enumerate() {
            for (c, v) in self.row(t)?.into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        Ok(x)
    }

    /// `∫ B_a(t) B_b(t) dt` over the range, exact for degree ≤ 3.
    pub fn gram(&self) -> DMatrix<f64> {
        const NODES: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const WEIGHTS: [f64; 4] = [
            0.347_854_845_137_453_8,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_8,
        ];
        let p = self.dim();
        let mut gm = DMatrix::zeros(p, p);
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, wt) in NODES.iter().zip(WEIGHTS) {
                let row = self.row(mid + half * x).expect("node inside range");
                for i in 0..p {
                    for j in 0..p {
                        gm[(i, j)] += wt * half * row[i] * row[j];
                    }
                }
            }
        }
        gm
    }
}

/// Basis on the range of `times` with the given interior knots, plus its
/// evaluation matrix at `times`.
pub fn bspline_basis(
    times: &[f64],
    interior_knots: &[f64],
    degree: usize,
) -> Result<(BsplineBasis, DMatrix<f64>)> {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let basis = BsplineBasis::new(lo, hi, interior_knots, degree)?;
    let x = basis.design(times)?;
    Ok((basis, x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_genes: usize,
    pub group_sizes: [usize; 2],
    pub group_labels: [String; 2],
    pub times: Vec<f64>,
    pub effect_scale: f64,
    pub de_probability: f64,
    /// Per-observation dropout; 0 gives complete series.
    pub dropout: f64,
    /// `D(τ, ρ)` of the group-1 mean coefficients.
    pub mean_cov: (f64, f64),
    /// `D(τ, ρ)` of the raw mean difference before normalisation.
    pub delta_cov: (f64, f64),
    pub individual_rho: f64,
    pub individual_tau_range: (f64, f64),
    /// Log-scale mean and variance of the lognormal noise variance.
    pub noise_log_mean: f64,
    pub noise_log_var: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_genes: 1000,
            group_sizes: [9, 9],
            group_labels: ["g1".into(), "g2".into()],
            times: vec![0.0, 2.0, 6.0, 12.0, 24.0],
            effect_scale: 1.0,
            de_probability: 0.1,
            dropout: 0.0,
            mean_cov: (0.25, 0.6),
            delta_cov: (0.25, 0.9),
            individual_rho: 0.6,
            individual_tau_range: (0.1, 0.2),
            noise_log_mean: -2.0,
            noise_log_var: 0.35,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MessError::InvalidParameter(m.to_string()));
        if self.n_genes == 0 {
            return bad("gene count must be >= 1");
        }
        if self.group_sizes.iter().any(|&n| n < 2) {
            return bad("each group needs at least 2 individuals");
        }
        if self.group_labels[0] == self.group_labels[1] {
            return bad("group labels must differ");
        }
        if self.times.len() < 3 {
            return bad("need at least 3 time points");
        }
        if !(0.0..=1.0).contains(&self.de_probability) {
            return bad("DE probability must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.effect_scale.is_finite() && self.effect_scale >= 0.0) {
            return bad("effect scale must be finite and >= 0");
        }
        let (a, b) = self.individual_tau_range;
        if !(a > 0.0 && b > a) {
            return bad("individual tau range must satisfy 0 < lo < hi");
        }
        if !(self.noise_log_var > 0.0) {
            return bad("noise log-variance must be > 0");
        }
        Ok(())
    }

    /// Cubic basis with one interior knot at the centre of the time range.
    pub fn basis(&self) -> Result<BsplineBasis> {
        let lo = self.times.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        BsplineBasis::new(lo, hi, &[0.5 * (lo + hi)], 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimGeneParams {
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    /// Unit-norm mean difference (zero vector when not DE).
    pub beta_delta: DVector<f64>,
    pub tau_b1: f64,
    pub tau_b2: f64,
    /// Noise variances.
    pub sigma1: f64,
    pub sigma2: f64,
    pub is_de: bool,
    pub effect_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedGene {
    pub params: SimGeneParams,
    pub data: GeneData,
    /// `∫ (μ₁ − μ₂)² dt` over the time range.
    pub true_distance: f64,
}

impl SimulatedGene {
    pub fn is_de(&self) -> bool {
        self.params.is_de
    }
}

fn noise_variance<R: Rng + ?Sized>(rng: &mut R, config: &SimConfig) -> f64 {
    LogNormal::new(config.noise_log_mean, config.noise_log_var.sqrt())
        .expect("validated lognormal parameters")
        .sample(rng)
}

fn individual_tau<R: Rng + ?Sized>(rng: &mut R, config: &SimConfig) -> f64 {
    let (a, b) = config.individual_tau_range;
    Uniform::new(a, b).expect("validated range").sample(rng)
}

/// One gene drawn from `rng`.
pub fn simulate_gene<R: Rng + ?Sized>(
    rng: &mut R,
    id: &str,
    config: &SimConfig,
) -> Result<SimulatedGene> {
    config.validate()?;
    let basis = config.basis()?;
    let p = basis.dim();
    let design = basis.design(&config.times)?;

    let is_de = rng.random::<f64>() < config.de_probability;
    let beta1 = ar1_covariance(config.mean_cov.0, config.mean_cov.1, p)?.sample(rng);
    let tau_b1 = individual_tau(rng, config);
    let sigma1 = noise_variance(rng, config);

    let (beta2, beta_delta, tau_b2, sigma2) = if is_de {
        let delta_cov = ar1_covariance(config.delta_cov.0, config.delta_cov.1, p)?;
        let unit = loop {
            let mut d = delta_cov.sample(rng);
            d[0] = 0.0;
            let norm = d.norm();
            if norm > 0.0 {
                break d / norm;
            }
        };
        let beta2 = &beta1 + &unit * config.effect_scale;
        (beta2, unit, individual_tau(rng, config), noise_variance(rng, config))
    } else {
        (beta1.clone(), DVector::zeros(p), tau_b1, sigma1)
    };

    let specs = [(&beta1, tau_b1, sigma1), (&beta2, tau_b2, sigma2)];
    let mut groups = Vec::with_capacity(2);
    for (g, (beta, tau_b, sigma)) in specs.into_iter().enumerate() {
        let cov = ar1_covariance(tau_b, config.individual_rho, p)?;
        let sd = sigma.sqrt();
        let mut individuals = Vec::with_capacity(config.group_sizes[g]);
        for k in 0..config.group_sizes[g] {
            let b = cov.sample(rng);
            let curve = &design * (beta + b);
            let mut times = Vec::with_capacity(config.times.len());
            let mut values = Vec::with_capacity(config.times.len());
            for (j, &t) in config.times.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                times.push(t);
                values.push(curve[j] + sd * z);
            }
            if config.dropout > 0.0 {
                let keep: Vec<bool> = times.iter().map(|_| rng.random::<f64>() >= config.dropout).collect();
                if keep.iter().filter(|&&k| k).count() >= 2 {
                    let mut it = keep.iter();
                    times.retain(|_| *it.next().unwrap());
                    let mut it = keep.iter();
                    values.retain(|_| *it.next().unwrap());
                }
            }
            individuals.push(IndividualSeries {
                id: format!("i{}", k + 1),
                times,
                values,
            });
        }
        groups.push(GroupSeries {
            label: config.group_labels[g].clone(),
            individuals,
        });
    }
    let g2 = groups.pop().unwrap();
    let g1 = groups.pop().unwrap();

    let true_distance = if is_de {
        let scaled = &beta_delta * config.effect_scale;
        scaled.dot(&(basis.gram() * &scaled))
    } else {
        0.0
    };

    Ok(SimulatedGene {
        params: SimGeneParams {
            beta1,
            beta2,
            beta_delta,
            tau_b1,
            tau_b2,
            sigma1,
            sigma2,
            is_de,
            effect_scale: config.effect_scale,
        },
        data: GeneData {
            id: id.to_string(),
            groups: [g1, g2],
        },
        true_distance,
    })
}

pub fn gene_id(index: usize) -> String {
    format!("gene{:06}", index + 1)
}

/// `config.n_genes` independent genes; gene `k` draws from the stream
/// derived from `(seed, k)`.
pub fn simulate_dataset(config: &SimConfig, seed: u64) -> Result<Vec<SimulatedGene>> {
    config.validate()?;
    (0..config.n_genes)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, rng::DOMAIN_SIMULATION, &[k as u64]);
            simulate_gene(&mut r, &gene_id(k), config)
        })
        .collect()
}
