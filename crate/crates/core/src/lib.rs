//! Ranked set sampling (RSS) and multistage RSS for estimating a population
//! proportion.
//!
//! * [`model`]: populations, ranking strategies, unit draws
//! * [`designs`]: SRS / RSS / MSRSS sample draws
//! * [`estimate`]: estimators, variances, Wald intervals, RE and PSSR
//! * [`oracle`]: exact stratum probabilities and brute-force enumerators
//! * [`mc`]: seeded parallel Monte Carlo sweeps
//! * [`data`]: CSV ingestion and Spearman summaries
//! * [`plan`]: sample-size planning

pub mod data;
pub mod designs;
pub mod error;
pub mod estimate;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod plan;
pub mod rng;

pub use data::{ColumnMapping, Dataset, DatasetSummary, MissingPolicy};
pub use designs::{draw_msrss, draw_rss, draw_srs, RankedSample};
pub use error::{Error, Result};
pub use estimate::{EfficiencyReport, Provenance, StratumProportions};
pub use mc::{GridPoint, SimulationConfig, SweepResult};
pub use model::{CovariateOrder, DesignKind, DesignSpec, PopulationModel, RankingStrategy, Unit};
pub use oracle::ExactStrata;
