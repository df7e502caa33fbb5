//! Markov-chain variance experiments and the synthetic cohort evaluation.

pub mod chains;
pub mod cohort;
pub mod metrics;
pub mod svg;
pub mod sweeps;
pub mod table;

pub use chains::{random_chain, spontaneity, ChainConstruction, ChainSpec};
pub use cohort::{
    equivalence_ratio, synthetic_cohort_eval, AucTable, BetaComponent, CalibrationReport, CohortReport,
    CohortSpec, EquivalenceResult,
};
pub use metrics::{auroc, brier, calibration_curve, CalibrationBin};
pub use svg::{line_plot, PlotSpec, Series};
pub use sweeps::{estimate_distribution_experiment, variance_sweep, DistributionExperiment, HistogramBin, SweepAxis};
pub use table::{ExperimentTable, MetricRow, PointFailure};
