//! Functional mixed-effects smoothing splines for short, replicated time
//! courses, with an L2 bootstrap test for differential temporal expression,
//! a simulation framework, a scalar-shift B-spline baseline, and ROC tools.

pub mod data;
pub mod diffexpr;
pub mod edge;
pub mod error;
pub mod eval;
pub mod fit;
pub mod rng;
pub mod simgen;
pub mod simplex;
pub mod spline;

pub use data::{GeneData, GroupSeries, IndividualSeries, LongitudinalSample};
pub use error::{MessError, Result};
pub use fit::{
    em_fit, fit_gene, select_smoothing, EmConfig, FitConfig, GroupFit, SearchConfig,
    SmoothingPair, VarianceComponents,
};
pub use spline::{build_time_grid, l2_distance, CurveOnGrid, TimeGrid};
