//! Spatio-temporal collision classifier over scene-graph sequences.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod graph;
pub mod layers;
pub mod params;


pub use checkpoint::Checkpoint;
pub use config::{History, ModelConfig, Pooling, Readout, Spatial, Temporal};
pub use forward::{build_clip, clip_forward, clip_gradients, frame_embedding, predict_clip, ClipOutput, Mode, PredictionTrace, StreamingPredictor};
pub use graph::{encode_clip, encode_dataset, EncodedClip, EncodedGraph};
pub use params::ModelParams;
