//! User-facing files: project configuration, pipeline stages and rendering.

pub mod config;
pub mod pipeline;
pub mod svg;

pub use config::{ConfigError, Project, ProjectConfig, CONFIG_FORMAT_VERSION};
pub use pipeline::{run_all, PipelineError, RunOutcome, SolveReport};
pub use svg::render_svg;
