//! Configuration, pipeline and plotting for the `ocm` command-line tool.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod presets;

pub use config::{ConfigError, ExperimentConfig};
pub use pipeline::{run_pipeline, Artifact, Bundle};

/// Process exit code for a failed command: 3 for configuration problems,
/// 4 for everything that went wrong afterwards.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err
        .chain()
        .any(|e| e.downcast_ref::<ConfigError>().is_some())
    {
        3
    } else {
        4
    }
}
