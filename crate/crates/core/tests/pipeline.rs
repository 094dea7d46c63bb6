use proptest::prelude::*;
use sgc_core::model::{encode_dataset, predict_clip, Checkpoint, ModelConfig};
use sgc_core::training::{evaluate_clips, train, TrainConfig};
use sgc_core::{dataset, generate_dataset, ExtractionConfig, ScenarioConfig};

fn small(n_clips: usize, seed: u64) -> sgc_core::Dataset {
    let cfg = ScenarioConfig {
        n_clips,
        frames_per_clip: [10, 16],
        seed,
        ..ScenarioConfig::default()
    };
    generate_dataset(&cfg, 1).unwrap().0
}

#[test]
fn jsonl_round_trip_preserves_encoded_graphs() {
    let data = small(8, 21);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    dataset::write_jsonl(&data, &path).unwrap();
    let back = dataset::load_jsonl(&path, None).unwrap();
    let x = ExtractionConfig::default();
    let (a, b) = (encode_dataset(&data, &x).unwrap(), encode_dataset(&back, &x).unwrap());
    assert_eq!(a.len(), b.len());
    for (ca, cb) in a.iter().zip(&b) {
        assert_eq!((&ca.id, ca.label, ca.len()), (&cb.id, cb.label, cb.len()));
        for (ga, gb) in ca.frames.iter().zip(&cb.frames) {
            assert_eq!(ga.edges, gb.edges);
            assert_eq!(ga.one_hot.data(), gb.one_hot.data());
        }
    }
}

#[test]
fn trained_checkpoint_reloads_with_identical_predictions() {
    let data = small(10, 22);
    let extraction = ExtractionConfig::default();
    let clips = encode_dataset(&data, &extraction).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        early_stop_patience: None,
        ..TrainConfig::default()
    };
    let out = train(&clips, &ModelConfig::default(), &cfg).unwrap();
    assert_eq!(out.curve.len(), 2);

    let ckpt = Checkpoint::new(out.params, extraction).unwrap();
    let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    for clip in &clips {
        let (p, q) = (predict_clip(&ckpt.params, clip).unwrap(), predict_clip(&back.params, clip).unwrap());
        assert_eq!(p.log_probs, q.log_probs);
        assert_eq!(p.decisions, q.decisions);
    }
    let report = evaluate_clips(&back.params, &clips, 2, true).unwrap();
    assert_eq!(report.clips, 10);
    assert_eq!(report.frames, clips.iter().map(|c| c.len()).sum::<usize>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_generated_frame_has_ego_and_lanes(seed in any::<u64>()) {
        let data = small(4, seed);
        for clip in encode_dataset(&data, &ExtractionConfig::default()).unwrap() {
            prop_assert!(clip.frames.iter().all(|g| g.one_hot.rows() >= 4));
        }
    }
}
