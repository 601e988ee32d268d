//! Long-format CSV input: `gene,group,individual,time,value`, one observation
//! per row. Lines starting with `#` are ignored. Missing observations are
//! absent rows.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use mess_core::spline::canonical_time;
use mess_core::{GeneData, GroupSeries, IndividualSeries, LongitudinalSample};

use crate::error::CliError;

pub const HEADER: [&str; 5] = ["gene", "group", "individual", "time", "value"];

/// A gene left out of the analysis and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub gene: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sorted by gene id; groups follow `labels`.
    pub genes: Vec<GeneData>,
    pub skipped: Vec<Skipped>,
    pub labels: Vec<String>,
}

type Observations = BTreeMap<String, Vec<(f64, f64)>>;

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{display}: {e}")))?;
    let data_err = |line: u64, message: String| CliError::Data {
        path: display.clone(),
        line,
        message,
    };

    let headers = reader.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(data_err(1, format!("expected header {}", HEADER.join(","))));
    }

    let mut genes: BTreeMap<String, BTreeMap<String, Observations>> = BTreeMap::new();
    let mut labels = BTreeSet::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HEADER.len() {
            return Err(data_err(line, format!("expected 5 fields, found {}", row.len())));
        }
        let (gene, group, individual) = (&row[0], &row[1], &row[2]);
        if gene.is_empty() || group.is_empty() || individual.is_empty() {
            return Err(data_err(line, "empty identifier".into()));
        }
        let number = |k: usize, name: &str| -> Result<f64, CliError> {
            match row[k].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(data_err(line, format!("{name} '{}' is not a finite number", &row[k]))),
            }
        };
        let time = canonical_time(number(3, "time")?);
        let value = number(4, "value")?;
        if !seen.insert((gene.to_string(), group.to_string(), individual.to_string(), time.to_bits())) {
            return Err(data_err(
                line,
                format!("duplicate observation for gene {gene}, group {group}, individual {individual}, time {time}"),
            ));
        }
        labels.insert(group.to_string());
        genes
            .entry(gene.to_string())
            .or_default()
            .entry(group.to_string())
            .or_default()
            .entry(individual.to_string())
            .or_default()
            .push((time, value));
    }

    let labels: Vec<String> = labels.into_iter().collect();
    if labels.is_empty() || labels.len() > 2 {
        return Err(CliError::Input(format!(
            "{display}: expected exactly two group labels, found {}",
            labels.len()
        )));
    }

    let mut dataset = Dataset {
        genes: Vec::new(),
        skipped: Vec::new(),
        labels: labels.clone(),
    };
    for (id, mut groups) in genes {
        match assemble(&id, &labels, &mut groups) {
            Ok(gene) => dataset.genes.push(gene),
            Err(reason) => dataset.skipped.push(Skipped { gene: id, reason }),
        }
    }
    Ok(dataset)
}

fn assemble(
    id: &str,
    labels: &[String],
    groups: &mut BTreeMap<String, Observations>,
) -> Result<GeneData, String> {
    if labels.len() != 2 {
        return Err(format!("dataset has a single group label '{}'", labels[0]));
    }
    let mut series = Vec::with_capacity(2);
    for label in labels {
        let individuals = groups
            .remove(label)
            .ok_or_else(|| format!("group {label} has no observations"))?
            .into_iter()
            .map(|(ind, mut obs)| {
                obs.sort_by(|a, b| a.0.total_cmp(&b.0));
                IndividualSeries {
                    id: ind,
                    times: obs.iter().map(|o| o.0).collect(),
                    values: obs.iter().map(|o| o.1).collect(),
                }
            })
            .collect();
        series.push(GroupSeries {
            label: label.clone(),
            individuals,
        });
    }
    let b = series.pop().unwrap();
    let a = series.pop().unwrap();
    let gene = GeneData {
        id: id.to_string(),
        groups: [a, b],
    };
    let grid = gene.grid().map_err(|e| e.to_string())?;
    for g in &gene.groups {
        LongitudinalSample::new(id, g, &grid).map_err(|e| format!("group {}: {e}", g.label))?;
    }
    Ok(gene)
}
