use sgt_core::controls::{PoseControlTrack, StyleControlTrack};
use sgt_core::corpus::make_synthetic_corpus;
use sgt_core::metrics::FeatureEncoder;
use sgt_core::synthesis::{GenRequest, Generator};
use sgt_nn::checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
use sgt_nn::extractor::{ExtractorConfig, FeatureExtractor};
use sgt_nn::model::{GeneratorModel, ModelConfig};
use sgt_nn::train::{prepare, TrainConfig};
use sgt_nn::NnError;

fn fixture() -> (Checkpoint, Vec<GenRequest>) {
    let ds = make_synthetic_corpus(20, 5).unwrap();
    let cfg = TrainConfig::default();
    let data = prepare(&ds, &cfg).unwrap();
    let config = ModelConfig::new(data.audio_norm.mean.len(), data.dictionary.len());
    let model = GeneratorModel::new(config, data.meta(), 3).unwrap();
    let extractor = FeatureExtractor::new(ExtractorConfig::default()).unwrap();
    let reqs = data
        .test
        .iter()
        .map(|w| {
            let mut pose = PoseControlTrack::empty(30);
            pose.set_frames(4, &w.reference[4..9]).unwrap();
            let mut style = StyleControlTrack::empty(30);
            style.set_segment(0, 30, [Some(1.0), None, Some(-0.5)]).unwrap();
            GenRequest {
                speech: w.speech.clone(),
                pose,
                style,
            }
        })
        .collect();
    (
        Checkpoint {
            model,
            extractor,
            split: Some(data.split.fingerprints()),
            training: Some(serde_json::to_value(&cfg).unwrap()),
        },
        reqs,
    )
}

#[test]
fn round_trip_is_bit_exact() {
    let (ckpt, reqs) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let a = ckpt.model.generate_batch(&reqs).unwrap();
    let b = loaded.model.generate_batch(&reqs).unwrap();
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        for (u, v) in x.flat().iter().zip(y.flat()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
    let windows: Vec<_> = a.clone();
    assert_eq!(ckpt.extractor.encode_batch(&windows).unwrap(), loaded.extractor.encode_batch(&windows).unwrap());
    assert_eq!(loaded.split, ckpt.split);
    assert_eq!(loaded.model.meta, ckpt.model.meta);
    assert_eq!(loaded.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
}

#[test]
fn corrupt_and_foreign_files_are_rejected() {
    let (ckpt, _) = fixture();
    let bytes = ckpt.to_bytes().unwrap();

    assert!(matches!(Checkpoint::from_bytes(b"not a checkpoint"), Err(NnError::CorruptCheckpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(NnError::CorruptCheckpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..40]), Err(NnError::CorruptCheckpoint(_))));

    // bump the version inside the header
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    header["version"] = serde_json::json!(FORMAT_VERSION + 1);
    let json = serde_json::to_vec(&header).unwrap();
    let mut forged = MAGIC.to_vec();
    forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
    forged.extend_from_slice(&json);
    forged.extend_from_slice(&bytes[16 + len..]);
    assert!(matches!(
        Checkpoint::from_bytes(&forged),
        Err(NnError::VersionMismatch { found, .. }) if found == FORMAT_VERSION + 1
    ));
}
