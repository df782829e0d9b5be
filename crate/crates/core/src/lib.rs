//! Simulation and analysis of optical centroid measurements on a pixel
//! array: fringe probability models, centroid projection, Monte Carlo event
//! generation, pulse-binned coincidence counting and fringe fitting.

pub mod analysis;
pub mod coincidence;
pub mod error;
pub mod exec;
pub mod fit;
pub mod fringe;
pub mod ocm;
pub mod sim;

pub use analysis::{
    classical_visibility_theory, estimate_accidentals, scaling_table, subtract_accidentals,
    ScalingTable, SinglesRates, VisibilityKind, VisibilityPoint,
};
pub use coincidence::{
    extract_coincidences, fold_statistics, CountTable, FoldStatistics, PulseRecord,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fit::{fit_fringe, FitParams, FitResult};
pub use fringe::{
    joint_distribution, singles_distribution, ArrayGeometry, Envelope, FringeConfig,
    JointDistribution, SourceKind, SourceModel,
};
pub use ocm::{project_distribution, project_events, CentroidHistogram, DetectionEvent};
pub use sim::{sample_events, DetectorModel, Exposure, SimRun};
