pub mod dataset;
pub mod datagen;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod scene_graph;
pub mod training;

pub use dataset::{Clip, Dataset};
pub use datagen::{generate_dataset, GenerationManifest, ScenarioConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use model::{Checkpoint, EncodedClip, ModelConfig, ModelParams, PredictionTrace};
pub use scene_graph::{ExtractionConfig, FrameObjects, SceneGraph, Vocabulary};
pub use training::{TrainConfig, TrainOutcome};
