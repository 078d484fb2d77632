//! Glue between the command line, the trained model and the service.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use sgt_core::corpus::Dataset;
use sgt_core::eval::{evaluate, StaticPoseGenerator};
use sgt_core::metrics::EvalReport;
use sgt_core::speech::AudioFeatureConfig;
use sgt_nn::train::prepare;
use sgt_nn::{Checkpoint, GeneratorModel, TrainConfig};
use sgt_server::ModelBundle;

/// Reads a training config from TOML (`.toml`) or JSON (anything else).
pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn bundle_from_model(model: GeneratorModel) -> Result<ModelBundle> {
    let skeleton = model.meta.skeleton()?;
    let audio = AudioFeatureConfig {
        n_mels: model.config.audio_dim,
        ..AudioFeatureConfig::default()
    };
    Ok(ModelBundle {
        skeleton,
        dictionary: model.meta.dictionary.clone(),
        style_stats: model.meta.style_stats,
        mean_pose: model.meta.mean_pose,
        style_window: model.config.style_window,
        audio,
        generator: Arc::new(model),
    })
}

pub const REPORT_HEADER: &str = "method,fgd_no_controls,fgd_pose_controls,fgd_style_controls,pcs,scs,pose_angle_degrees";

pub fn report_row(name: &str, r: &EvalReport) -> String {
    format!(
        "{name},{},{},{},{},{},{}",
        r.fgd_no_controls, r.fgd_pose_controls, r.fgd_style_controls, r.pcs, r.scs, r.pose_angle_degrees
    )
}

/// Scores the checkpoint and the static mean-pose baseline on the test
/// split the checkpoint was trained with.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, dataset: &Dataset) -> Result<Vec<(String, EvalReport)>> {
    let cfg: TrainConfig = match &ckpt.training {
        Some(v) => serde_json::from_value(v.clone()).context("checkpoint training config")?,
        None => TrainConfig::default(),
    };
    let data = prepare(dataset, &cfg)?;
    if let Some(expected) = &ckpt.split {
        if data.split.fingerprints() != *expected {
            bail!("dataset split does not match the one the checkpoint was trained on");
        }
    }
    if data.test.is_empty() {
        bail!("test split has no full windows");
    }
    let model = &ckpt.model;
    let skel = model.meta.skeleton()?;
    let stats = model.meta.style_stats;
    let window = model.config.style_window;
    let ours = evaluate(model, &data.test, &ckpt.extractor, &skel, &stats, window)?;
    let baseline = StaticPoseGenerator {
        frame: model.meta.mean_pose.normalized(),
    };
    let mean = evaluate(&baseline, &data.test, &ckpt.extractor, &skel, &stats, window)?;
    Ok(vec![("model".into(), ours), ("static_mean_pose".into(), mean)])
}

pub fn report_csv(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&report_row(name, r));
        out.push('\n');
    }
    out
}
