//! Per-gene longitudinal data: raw series for two groups and the validated
//! per-group sample on a shared design grid.

use nalgebra::DVector;

use crate::error::{MessError, Result};
use crate::spline::{build_time_grid, incidence_matrix, IncidenceMatrix, TimeGrid};

/// Observations of one individual (biological replicate).
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeries {
    pub label: String,
    pub individuals: Vec<IndividualSeries>,
}

/// One gene observed under two conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneData {
    pub id: String,
    pub groups: [GroupSeries; 2],
}

impl GeneData {
    /// Design grid built from the union of observed times across both groups.
    pub fn grid(&self) -> Result<TimeGrid> {
        let times: Vec<f64> = self
            .groups
            .iter()
            .flat_map(|g| g.individuals.iter())
            .flat_map(|ind| ind.times.iter().copied())
            .collect();
        build_time_grid(&times)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRecord {
    pub id: String,
    pub incidence: IncidenceMatrix,
    pub y: DVector<f64>,
}

/// One gene × one group, validated against a design grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalSample {
    pub gene: String,
    pub group: String,
    grid: TimeGrid,
    records: Vec<IndividualRecord>,
}

impl LongitudinalSample {
    pub fn new(gene: &str, group: &GroupSeries, grid: &TimeGrid) -> Result<Self> {
        if group.individuals.len() < 2 {
            return Err(MessError::InvalidSample(format!(
                "group {} has {} individual(s), need at least 2",
                group.label,
                group.individuals.len()
            )));
        }
        let records = group
            .individuals
            .iter()
            .map(|ind| {
                if ind.times.len() != ind.values.len() {
                    return Err(MessError::Dimension(format!(
                        "individual {}: {} times but {} values",
                        ind.id,
                        ind.times.len(),
                        ind.values.len()
                    )));
                }
                if ind.values.len() < 2 {
                    return Err(MessError::InvalidSample(format!(
                        "individual {} has fewer than 2 observations",
                        ind.id
                    )));
                }
                if ind.values.iter().any(|v| !v.is_finite()) {
                    return Err(MessError::InvalidSample(format!(
                        "individual {} has non-finite observations",
                        ind.id
                    )));
                }
                Ok(IndividualRecord {
                    id: ind.id.clone(),
                    incidence: incidence_matrix(&ind.times, grid)?,
                    y: DVector::from_column_slice(&ind.values),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gene: gene.to_string(),
            group: group.label.clone(),
            grid: grid.clone(),
            records,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn records(&self) -> &[IndividualRecord] {
        &self.records
    }

    /// Number of individuals `n_k`.
    pub fn n_individuals(&self) -> usize {
        self.records.len()
    }

    /// Total number of observations `N = Σ m_i`.
    pub fn n_observations(&self) -> usize {
        self.records.iter().map(|r| r.y.len()).sum()
    }
}
