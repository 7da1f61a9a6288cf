//! Training with expert losses, layout generation, rendering and ablations.

pub mod ablate;
pub mod artifact;
pub mod error;
pub mod loss;
pub mod post;
pub mod prep;
pub mod render;
pub mod sample;
pub mod schedule;
pub mod train;

pub use error::LabError;
pub use loss::Variant;
pub use sample::{Generated, Generator, SamplerConfig};
pub use train::{fine_tune, train, Arch, EpochMetrics, TrainConfig, TrainOutcome};
pub use ablate::{AblationConfig, AblationReport, AblationRow};
pub use post::{post_process, HeightRules, PlacedObject, PlacedScene};
pub use render::{render_svg, Style};
