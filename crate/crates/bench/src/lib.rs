//! Shared fixtures for the benchmarks.

use sgc_core::model::{encode_dataset, EncodedClip};
use sgc_core::{generate_dataset, Dataset, ExtractionConfig, ModelConfig, ModelParams, ScenarioConfig};

pub struct Fixture {
    pub dataset: Dataset,
    pub clips: Vec<EncodedClip>,
    pub params: ModelParams,
}

/// A small generated dataset, its encoding and a freshly initialized
/// default model.
pub fn fixture(n_clips: usize, seed: u64) -> Fixture {
    let cfg = ScenarioConfig {
        n_clips,
        seed,
        ..ScenarioConfig::default()
    };
    let (dataset, _) = generate_dataset(&cfg, 1).expect("default scenario config is feasible");
    let extraction = ExtractionConfig::default();
    let clips = encode_dataset(&dataset, &extraction).expect("generated clips extract cleanly");
    let params = ModelParams::init(&ModelConfig::default(), extraction.vocabulary.len(), seed).expect("default model config is valid");
    Fixture { dataset, clips, params }
}
