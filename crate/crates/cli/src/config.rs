use std::path::Path;

use mess_core::fit::{EmConfig, FitConfig, SearchConfig};
use mess_core::simgen::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Everything that influences a run. Serialized into the header of every
/// output file, so two runs with the same digest produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub bootstrap: usize,
    pub fdr: f64,
    /// Worker threads; 0 means the available parallelism. Not part of the
    /// digest because results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub search: SearchSection,
    pub em: EmSection,
    pub simulation: SimulationSection,
    pub benchmark: BenchmarkSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub log10_lower: f64,
    pub log10_upper: f64,
    pub spread_tol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSection {
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub genes: usize,
    pub group_sizes: [usize; 2],
    pub times: Vec<f64>,
    pub effect_scale: f64,
    pub de_probability: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub edge_basis_dim: usize,
    pub specificity: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            bootstrap: 100,
            fdr: 0.05,
            threads: 0,
            search: SearchSection::default(),
            em: EmSection::default(),
            simulation: SimulationSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            log10_lower: s.log_lower,
            log10_upper: s.log_upper,
            spread_tol: s.spread_tol,
            max_evals: s.max_evals,
        }
    }
}

impl Default for EmSection {
    fn default() -> Self {
        let e = EmConfig::default();
        Self {
            max_iter: e.max_iter,
            tol: e.tol,
        }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            genes: s.n_genes,
            group_sizes: s.group_sizes,
            times: s.times,
            effect_scale: s.effect_scale,
            de_probability: s.de_probability,
            dropout: s.dropout,
        }
    }
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            edge_basis_dim: mess_core::edge::DEFAULT_BASIS_DIM,
            specificity: 0.9,
        }
    }
}

/// Command-line values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bootstrap: Option<usize>,
    pub fdr: Option<f64>,
    pub effect_scale: Option<f64>,
    pub genes: Option<usize>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.bootstrap {
            self.bootstrap = v;
        }
        if let Some(v) = o.fdr {
            self.fdr = v;
        }
        if let Some(v) = o.effect_scale {
            self.simulation.effect_scale = v;
        }
        if let Some(v) = o.genes {
            self.simulation.genes = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.bootstrap == 0 {
            return bad("bootstrap must be >= 1");
        }
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return bad("fdr must lie in (0, 1)");
        }
        if !(self.search.log10_lower < self.search.log10_upper) {
            return bad("search box is empty");
        }
        if self.search.max_evals == 0 || self.em.max_iter == 0 {
            return bad("iteration caps must be >= 1");
        }
        if !(self.benchmark.specificity > 0.0 && self.benchmark.specificity < 1.0) {
            return bad("specificity must lie in (0, 1)");
        }
        if self.benchmark.edge_basis_dim < 2 {
            return bad("EDGE basis dimension must be >= 2");
        }
        self.sim_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn fit_config(&self) -> FitConfig {
        let mut search = SearchConfig {
            log_lower: self.search.log10_lower,
            log_upper: self.search.log10_upper,
            spread_tol: self.search.spread_tol,
            max_evals: self.search.max_evals,
            ..SearchConfig::default()
        };
        for v in search.initial_simplex.iter_mut().flatten() {
            *v = v.clamp(search.log_lower, search.log_upper);
        }
        FitConfig {
            em: EmConfig {
                max_iter: self.em.max_iter,
                tol: self.em.tol,
            },
            search,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            n_genes: s.genes,
            group_sizes: s.group_sizes,
            times: s.times.clone(),
            effect_scale: s.effect_scale,
            de_probability: s.de_probability,
            dropout: s.dropout,
            ..SimConfig::default()
        }
    }

    /// Canonical single-line JSON of the configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
