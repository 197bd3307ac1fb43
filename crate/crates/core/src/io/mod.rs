//! Configuration, Jacobian cache, exports and the end-to-end pipeline.

pub mod cache;
pub mod config;
pub mod export;
pub mod pipeline;

pub use cache::{load_jacobian, load_jacobian_checked, read_header, save_jacobian, CacheHeader};
pub use config::{RunConfig, Setup};
pub use export::{export_pgm, MetricsRow};
pub use pipeline::{
    describe_plan, obtain_jacobian, recompute_metrics, run_config, run_pipeline,
    run_with_jacobian, RunManifest, RunOptions, RunOutput,
};
