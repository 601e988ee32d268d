//! Differential temporal expression: L2 distance between fitted group means,
//! a pooled bootstrap null, empirical p-values and Benjamini–Hochberg
//! adjustment.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{GeneData, GroupSeries, LongitudinalSample};
use crate::error::{MessError, Result};
use crate::fit::{em_fit, fit_gene, EmConfig, FitConfig, GroupFit, SmoothingPair};
use crate::rng;
use crate::spline::{l2_distance, TimeGrid};

/// Observed distance between the two fitted mean curves.
pub fn l2_statistic(a: &GroupFit, b: &GroupFit) -> Result<f64> {
    l2_distance(&a.eta_hat, &b.eta_hat)
}

/// Bootstrap null statistics pooled across genes and replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct NullPool {
    values: Vec<f64>,
    pub genes: usize,
    pub replicates: usize,
    pub failures: usize,
}

impl NullPool {
    pub fn from_values(mut values: Vec<f64>, genes: usize, replicates: usize, failures: usize) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            values,
            genes,
            replicates,
            failures,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Null statistics for one gene: individuals from both groups are pooled and
/// resampled with replacement into pseudo-groups of the original sizes, which
/// are refitted with the smoothing frozen at the observed per-group values.
/// Returns the statistics and the number of failed replicates.
pub fn bootstrap_gene(
    gene: &GeneData,
    grid: &TimeGrid,
    smoothing: [SmoothingPair; 2],
    gene_index: usize,
    replicates: usize,
    seed: u64,
    em: &EmConfig,
) -> (Vec<f64>, usize) {
    let pooled: Vec<_> = gene
        .groups
        .iter()
        .flat_map(|g| g.individuals.iter())
        .collect();
    let sizes = [gene.groups[0].individuals.len(), gene.groups[1].individuals.len()];
    let mut stats = Vec::with_capacity(replicates);
    let mut failures = 0;
    for b in 0..replicates {
        let mut r = rng::stream(seed, rng::DOMAIN_BOOTSTRAP, &[gene_index as u64, b as u64]);
        let mut fit_pseudo = |g: usize| -> Result<GroupFit> {
            let group = GroupSeries {
                label: gene.groups[g].label.clone(),
                individuals: (0..sizes[g])
                    .map(|_| pooled[r.random_range(0..pooled.len())].clone())
                    .collect(),
            };
            let sample = LongitudinalSample::new(&gene.id, &group, grid)?;
            em_fit(&sample, &smoothing[g], em)
        };
        let outcome = fit_pseudo(0).and_then(|a| {
            let b = fit_pseudo(1)?;
            l2_statistic(&a, &b)
        });
        match outcome {
            Ok(d) if d.is_finite() => stats.push(d),
            _ => failures += 1,
        }
    }
    (stats, failures)
}

/// Input to the pooled bootstrap: a gene and the smoothing selected for each
/// of its groups on the observed data.
#[derive(Debug, Clone)]
pub struct ObservedGene<'a> {
    pub data: &'a GeneData,
    pub smoothing: [SmoothingPair; 2],
}

/// Pool of `B` bootstrap statistics per gene. Gene `k`, replicate `b` draws
/// from the stream derived from `(seed, k, b)`.
pub fn bootstrap_null(
    genes: &[ObservedGene<'_>],
    replicates: usize,
    seed: u64,
    em: &EmConfig,
) -> Result<NullPool> {
    if replicates == 0 {
        return Err(MessError::InvalidParameter("bootstrap replicate count must be >= 1".into()));
    }
    let per_gene: Vec<(Vec<f64>, usize)> = genes
        .par_iter()
        .enumerate()
        .map(|(k, g)| match g.data.grid() {
            Ok(grid) => bootstrap_gene(g.data, &grid, g.smoothing, k, replicates, seed, em),
            Err(_) => (Vec::new(), replicates),
        })
        .collect();
    let failures = per_gene.iter().map(|(_, f)| f).sum();
    let values = per_gene.into_iter().flat_map(|(v, _)| v).collect();
    Ok(NullPool::from_values(values, genes.len(), replicates, failures))
}

/// `(1 + #{D* ≥ D̂}) / (1 + |pool|)`.
pub fn empirical_pvalue(observed: f64, pool: &NullPool) -> Result<f64> {
    if pool.is_empty() {
        return Err(MessError::EmptyNull);
    }
    let first_ge = pool.values.partition_point(|&v| v < observed);
    let exceed = pool.values.len() - first_ge;
    Ok((1 + exceed) as f64 / (1 + pool.values.len()) as f64)
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = pvalues.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(MessError::InvalidPValue(bad));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let candidate = pvalues[idx] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate).min(1.0);
        q[idx] = running;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneTestResult {
    pub gene: String,
    pub statistic: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub rank: usize,
}

fn result_order(a: &GeneTestResult, b: &GeneTestResult) -> Ordering {
    a.p_value
        .total_cmp(&b.p_value)
        .then(b.statistic.total_cmp(&a.statistic))
        .then_with(|| a.gene.cmp(&b.gene))
}

/// Sort by ascending p, then descending statistic, then gene id; assign ranks
/// `1..=G`.
pub fn rank_genes(mut results: Vec<GeneTestResult>) -> Vec<GeneTestResult> {
    results.sort_by(result_order);
    for (k, r) in results.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    results
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub fit: FitConfig,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TestOutcome {
    /// Ranked results.
    pub results: Vec<GeneTestResult>,
    /// Genes whose observed fit failed, with the reason.
    pub failures: Vec<(String, String)>,
    pub pool: NullPool,
}

/// Observed fits, pooled bootstrap null, empirical p-values, BH q-values and
/// ranking for a set of genes.
pub fn test_genes(genes: &[GeneData], config: &TestConfig) -> Result<TestOutcome> {
    let fitted: Vec<Result<(GroupFit, GroupFit, f64)>> = genes
        .par_iter()
        .map(|g| {
            let (a, b) = fit_gene(g, &config.fit)?;
            let d = l2_statistic(&a, &b)?;
            Ok((a, b, d))
        })
        .collect();

    let mut observed = Vec::new();
    let mut stats = Vec::new();
    let mut failures = Vec::new();
    for (g, f) in genes.iter().zip(fitted) {
        match f {
            Ok((a, b, d)) => {
                observed.push(ObservedGene {
                    data: g,
                    smoothing: [a.smoothing, b.smoothing],
                });
                stats.push((g.id.clone(), d));
            }
            Err(e) => failures.push((g.id.clone(), e.to_string())),
        }
    }

    let pool = bootstrap_null(&observed, config.replicates, config.seed, &config.fit.em)?;
    if stats.is_empty() {
        return Ok(TestOutcome {
            results: Vec::new(),
            failures,
            pool,
        });
    }
    let pvalues = stats
        .iter()
        .map(|(_, d)| empirical_pvalue(*d, &pool))
        .collect::<Result<Vec<_>>>()?;
    let qvalues = bh_adjust(&pvalues)?;
    let results = stats
        .into_iter()
        .zip(pvalues.into_iter().zip(qvalues))
        .map(|((gene, statistic), (p_value, q_value))| GeneTestResult {
            gene,
            statistic,
            p_value,
            q_value,
            rank: 0,
        })
        .collect();
    Ok(TestOutcome {
        results: rank_genes(results),
        failures,
        pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(values: Vec<f64>) -> NullPool {
        let n = values.len();
        NullPool::from_values(values, 1, n, 0)
    }

    #[test]
    fn pvalue_edges() {
        let p = pool((1..=999).map(f64::from).collect());
        assert_eq!(empirical_pvalue(1e6, &p).unwrap(), 1.0 / 1000.0);
        assert_eq!(empirical_pvalue(0.0, &p).unwrap(), 1.0);
        let median = empirical_pvalue(500.0, &p).unwrap();
        assert!((median - 0.5).abs() <= 1.0 / 999.0);
        assert_eq!(empirical_pvalue(1.0, &pool(vec![])), Err(MessError::EmptyNull));
    }

    #[test]
    fn bh_examples() {
        let q = bh_adjust(&[0.01, 0.02, 0.03]).unwrap();
        for v in q {
            assert!((v - 0.03).abs() < 1e-15);
        }
        assert_eq!(bh_adjust(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(bh_adjust(&[0.001, 1.0]).unwrap(), vec![0.002, 1.0]);
        assert_eq!(bh_adjust(&[0.0]), Err(MessError::InvalidPValue(0.0)));
        assert!(bh_adjust(&[1.5]).is_err());
    }

    fn result(gene: &str, statistic: f64, p: f64) -> GeneTestResult {
        GeneTestResult {
            gene: gene.into(),
            statistic,
            p_value: p,
            q_value: p,
            rank: 0,
        }
    }

    #[test]
    fn ranking_rules() {
        let r = rank_genes(vec![result("b", 1.0, 0.2), result("a", 1.0, 0.1)]);
        assert_eq!((r[0].gene.as_str(), r[0].rank), ("a", 1));
        assert_eq!((r[1].gene.as_str(), r[1].rank), ("b", 2));
        let r = rank_genes(vec![result("x", 3.0, 0.1), result("y", 5.0, 0.1)]);
        assert_eq!(r[0].gene, "y");
        let forward = rank_genes(vec![result("a", 1.0, 0.3), result("b", 2.0, 0.3), result("c", 2.0, 0.05)]);
        let reversed = rank_genes(vec![result("c", 2.0, 0.05), result("b", 2.0, 0.3), result("a", 1.0, 0.3)]);
        assert_eq!(forward, reversed);
    }
}
