use std::path::Path;

use mess_core::diffexpr::{l2_statistic, test_genes, TestConfig};
use mess_core::edge::{f_statistic, fit_edge};
use mess_core::eval::{auc, power_at_specificity, roc_curve, RocCurve};
use mess_core::fit::fit_gene;
use mess_core::simgen::{simulate_dataset, SimulatedGene};
use mess_core::{GeneData, GroupFit};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ingest::{read_dataset, Dataset, Skipped};
use crate::output::{num, CsvOut};

/// Sample points per curve in `curves.csv`.
pub const CURVE_POINTS: usize = 101;

fn skipped_file(out: &Path, command: &str, config: &RunConfig, skipped: &[Skipped]) -> Result<(), CliError> {
    let mut w = CsvOut::create(&out.join("skipped.csv"), command, config, &["gene", "reason"])?;
    for s in skipped {
        w.row([s.gene.as_str(), s.reason.as_str()])?;
    }
    w.finish()
}

fn load(input: &Path) -> Result<Dataset, CliError> {
    read_dataset(input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub fitted: usize,
    pub skipped: usize,
}

pub fn fit(input: &Path, out: &Path, config: &RunConfig) -> Result<FitSummary, CliError> {
    let data = load(input)?;
    let fit_config = config.fit_config();
    let fits: Vec<Result<(GroupFit, GroupFit), String>> = data
        .genes
        .par_iter()
        .map(|g| fit_gene(g, &fit_config).map_err(|e| e.to_string()))
        .collect();

    let mut skipped = data.skipped.clone();
    let mut curves = CsvOut::create(
        &out.join("curves.csv"),
        "fit",
        config,
        &["gene", "group", "kind", "individual", "t", "value"],
    )?;
    let mut summary = CsvOut::create(
        &out.join("fits.csv"),
        "fit",
        config,
        &[
            "gene",
            "group",
            "log10_lambda",
            "log10_lambda_v",
            "sigma2",
            "aicc",
            "edf",
            "iterations",
            "converged",
        ],
    )?;
    let mut fitted = 0;
    for (gene, result) in data.genes.iter().zip(fits) {
        let pair = match result {
            Ok(p) => p,
            Err(reason) => {
                skipped.push(Skipped {
                    gene: gene.id.clone(),
                    reason: format!("fit failed: {reason}"),
                });
                continue;
            }
        };
        fitted += 1;
        for (group, f) in gene.groups.iter().zip([&pair.0, &pair.1]) {
            write_curves(&mut curves, gene, &group.label, group, f)?;
            let (l, lv) = f.smoothing.log10();
            summary.row([
                gene.id.clone(),
                group.label.clone(),
                num(l),
                num(lv),
                num(f.sigma2()),
                num(f.aicc),
                num(f.edf),
                f.iterations.to_string(),
                f.converged.to_string(),
            ])?;
        }
    }
    curves.finish()?;
    summary.finish()?;
    skipped.sort_by(|a, b| a.gene.cmp(&b.gene));
    skipped_file(out, "fit", config, &skipped)?;
    Ok(FitSummary {
        fitted,
        skipped: skipped.len(),
    })
}

fn write_curves(
    w: &mut CsvOut,
    gene: &GeneData,
    label: &str,
    group: &mess_core::GroupSeries,
    fit: &GroupFit,
) -> Result<(), CliError> {
    let ts = fit.eta_hat.grid().uniform_samples(CURVE_POINTS);
    let mean = fit.eta_hat.eval_sorted(&ts).map_err(|e| CliError::Numeric(e.to_string()))?;
    for (t, v) in ts.iter().zip(&mean) {
        w.row([gene.id.as_str(), label, "mean", "", &num(*t), &num(*v)])?;
    }
    for (ind, v_hat) in group.individuals.iter().zip(&fit.v_hat) {
        let dev = v_hat.eval_sorted(&ts).map_err(|e| CliError::Numeric(e.to_string()))?;
        for ((t, m), d) in ts.iter().zip(&mean).zip(&dev) {
            w.row([gene.id.as_str(), label, "individual", ind.id.as_str(), &num(*t), &num(m + d)])?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSummary {
    pub tested: usize,
    pub significant: usize,
    pub skipped: usize,
    pub pool_size: usize,
    pub bootstrap_failures: usize,
}

pub fn test(input: &Path, out: &Path, config: &RunConfig) -> Result<TestSummary, CliError> {
    let data = load(input)?;
    let test_config = TestConfig {
        fit: config.fit_config(),
        replicates: config.bootstrap,
        seed: config.seed,
    };
    let outcome = test_genes(&data.genes, &test_config).map_err(|e| CliError::Numeric(e.to_string()))?;

    let mut w = CsvOut::create(
        &out.join("results.csv"),
        "test",
        config,
        &["gene", "statistic", "p", "q", "rank", "significant"],
    )?;
    let mut significant = 0;
    for r in &outcome.results {
        let sig = r.q_value < config.fdr;
        significant += sig as usize;
        w.row([
            r.gene.clone(),
            num(r.statistic),
            num(r.p_value),
            num(r.q_value),
            r.rank.to_string(),
            sig.to_string(),
        ])?;
    }
    w.finish()?;

    let mut skipped = data.skipped.clone();
    skipped.extend(outcome.failures.iter().map(|(gene, e)| Skipped {
        gene: gene.clone(),
        reason: format!("fit failed: {e}"),
    }));
    skipped.sort_by(|a, b| a.gene.cmp(&b.gene));
    skipped_file(out, "test", config, &skipped)?;
    Ok(TestSummary {
        tested: outcome.results.len(),
        significant,
        skipped: skipped.len(),
        pool_size: outcome.pool.len(),
        bootstrap_failures: outcome.pool.failures,
    })
}

pub fn simulate_genes(config: &RunConfig) -> Result<Vec<SimulatedGene>, CliError> {
    simulate_dataset(&config.sim_config(), config.seed).map_err(|e| CliError::Config(e.to_string()))
}

fn write_truth(out: &Path, command: &str, config: &RunConfig, genes: &[SimulatedGene]) -> Result<(), CliError> {
    let mut w = CsvOut::create(&out.join("truth.csv"), command, config, &["gene", "is_de", "true_distance"])?;
    for g in genes {
        w.row([g.data.id.clone(), g.is_de().to_string(), num(g.true_distance)])?;
    }
    w.finish()
}

pub fn simulate(out: &Path, config: &RunConfig) -> Result<usize, CliError> {
    let genes = simulate_genes(config)?;
    let mut w = CsvOut::create(&out.join("data.csv"), "simulate", config, &crate::ingest::HEADER)?;
    for g in &genes {
        for grp in &g.data.groups {
            for ind in &grp.individuals {
                for (t, v) in ind.times.iter().zip(&ind.values) {
                    w.row([
                        g.data.id.as_str(),
                        grp.label.as_str(),
                        ind.id.as_str(),
                        &num(*t),
                        &num(*v),
                    ])?;
                }
            }
        }
    }
    w.finish()?;
    write_truth(out, "simulate", config, &genes)?;
    Ok(genes.len())
}

/// Per-gene benchmark scores. A gene whose fit fails scores 0, the least
/// significant value for both methods, and is counted.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScores {
    pub genes: Vec<String>,
    pub labels: Vec<bool>,
    pub true_distance: Vec<f64>,
    pub mess: Vec<f64>,
    pub edge: Vec<f64>,
    pub mess_failures: usize,
    pub edge_failures: usize,
}

pub fn benchmark_scores(genes: &[SimulatedGene], config: &RunConfig) -> BenchmarkScores {
    let fit_config = config.fit_config();
    let dim = config.benchmark.edge_basis_dim;
    let scored: Vec<(Option<f64>, Option<f64>)> = genes
        .par_iter()
        .map(|g| {
            let mess = fit_gene(&g.data, &fit_config)
                .and_then(|(a, b)| l2_statistic(&a, &b))
                .ok();
            let edge = fit_edge(&g.data, dim).map(|f| f_statistic(&f)).ok();
            (mess, edge)
        })
        .collect();
    BenchmarkScores {
        genes: genes.iter().map(|g| g.data.id.clone()).collect(),
        labels: genes.iter().map(|g| g.is_de()).collect(),
        true_distance: genes.iter().map(|g| g.true_distance).collect(),
        mess: scored.iter().map(|s| s.0.unwrap_or(0.0)).collect(),
        edge: scored.iter().map(|s| s.1.unwrap_or(0.0)).collect(),
        mess_failures: scored.iter().filter(|s| s.0.is_none()).count(),
        edge_failures: scored.iter().filter(|s| s.1.is_none()).count(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: &'static str,
    pub roc: RocCurve,
    pub auc: f64,
    pub power: f64,
    pub failures: usize,
}

pub fn method_reports(scores: &BenchmarkScores, specificity: f64) -> Result<[MethodReport; 2], CliError> {
    let report = |method, s: &[f64], failures| -> Result<MethodReport, CliError> {
        let roc = roc_curve(s, &scores.labels).map_err(|e| CliError::Numeric(e.to_string()))?;
        Ok(MethodReport {
            method,
            auc: auc(&roc),
            power: power_at_specificity(&roc, specificity),
            roc,
            failures,
        })
    };
    Ok([
        report("mess", &scores.mess, scores.mess_failures)?,
        report("edge", &scores.edge, scores.edge_failures)?,
    ])
}

pub fn benchmark(out: &Path, config: &RunConfig) -> Result<[MethodReport; 2], CliError> {
    let genes = simulate_genes(config)?;
    let scores = benchmark_scores(&genes, config);
    let reports = method_reports(&scores, config.benchmark.specificity)?;

    let mut w = CsvOut::create(
        &out.join("scores.csv"),
        "benchmark",
        config,
        &["gene", "is_de", "true_distance", "mess_statistic", "edge_f"],
    )?;
    for k in 0..scores.genes.len() {
        w.row([
            scores.genes[k].clone(),
            scores.labels[k].to_string(),
            num(scores.true_distance[k]),
            num(scores.mess[k]),
            num(scores.edge[k]),
        ])?;
    }
    w.finish()?;

    let mut w = CsvOut::create(
        &out.join("benchmark.csv"),
        "benchmark",
        config,
        &["method", "kind", "fpr", "tpr", "value"],
    )?;
    let spec = num(config.benchmark.specificity);
    for r in &reports {
        w.row([r.method, "auc", "", "", &num(r.auc)])?;
        w.row([r.method, "power", &num(1.0 - config.benchmark.specificity), "", &num(r.power)])?;
        w.row([r.method, "specificity", "", "", &spec])?;
        w.row([r.method, "failures", "", "", &r.failures.to_string()])?;
        for &(fpr, tpr) in &r.roc.points {
            w.row([r.method, "roc", &num(fpr), &num(tpr), ""])?;
        }
    }
    w.finish()?;
    Ok(reports)
}
