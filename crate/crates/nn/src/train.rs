//! Training loop: reconstruction, style and adversarial losses with
//! controls simulated from the reference motion.

use std::time::Instant;

use candle_core::{DType, Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sgt_core::controls::{simulate_controls, ControlDropout};
use sgt_core::corpus::{windows, Dataset, DatasetSplit, MotionWindow};
use sgt_core::eval::evaluate;
use sgt_core::skeleton::{mean_pose, DirVecFrame, SkeletonSpec, POSE_DIM};
use sgt_core::speech::Dictionary;
use sgt_core::stylestats::{
    fit_norm_stats_from_tracks, normalize_style, style_track_frames, StyleFrame, StyleNormStats, STYLE_DIM,
};
use sgt_core::synthesis::{GenRequest, Generator};

use crate::checkpoint::Checkpoint;
use crate::error::{NnError, Result};
use crate::extractor::{ExtractorConfig, FeatureExtractor};
use crate::layers::{softplus, vars_only, ParamInit};
use crate::model::{assemble_inputs, frames_to_tensor, AudioNorm, Critic, GeneratorModel, ModelConfig, ModelMeta};
use crate::style::{unit_bones, StyleOps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Reconstruction weight.
    pub alpha: f64,
    /// Adversarial weight.
    pub beta: f64,
    /// Style weight.
    pub gamma: f64,
    pub window: usize,
    pub stride: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub dropout: ControlDropout,
    pub extractor: ExtractorConfig,
    pub word_dim: usize,
    pub audio_hidden: usize,
    pub word_hidden: usize,
    pub hidden: usize,
    pub critic_hidden: usize,
    pub style_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            batch_size: 128,
            lr: 5e-4,
            alpha: 500.0,
            beta: 5.0,
            gamma: 0.05,
            window: 30,
            stride: 5,
            seed: 0,
            split_seed: 0,
            dropout: ControlDropout::default(),
            extractor: ExtractorConfig::default(),
            word_dim: 50,
            audio_hidden: 32,
            word_hidden: 32,
            hidden: 64,
            critic_hidden: 64,
            style_window: 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.stride == 0 || self.window < 2 {
            return Err(NnError::Config(
                "epochs, batch_size and stride must be positive and window at least 2".into(),
            ));
        }
        if !(self.lr > 0.0) || self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(NnError::Config("learning rate must be positive and loss weights non-negative".into()));
        }
        if self.extractor.window != self.window {
            return Err(NnError::Config("extractor window must equal the training window".into()));
        }
        Ok(())
    }

    fn model_config(&self, audio_dim: usize, vocab: usize) -> ModelConfig {
        ModelConfig {
            audio_dim,
            vocab_size: vocab,
            word_dim: self.word_dim,
            audio_hidden: self.audio_hidden,
            word_hidden: self.word_hidden,
            hidden: self.hidden,
            critic_hidden: self.critic_hidden,
            style_window: self.style_window,
        }
    }
}

/// A training window with its normalized style track.
#[derive(Clone, Debug)]
pub struct StyledWindow {
    pub window: MotionWindow,
    pub style: Vec<StyleFrame>,
}

/// Split data and every statistic fitted on the training part.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: DatasetSplit,
    pub dictionary: Dictionary,
    pub skeleton: SkeletonSpec,
    pub style_stats: StyleNormStats,
    pub audio_norm: AudioNorm,
    pub mean_pose: DirVecFrame,
    pub train: Vec<StyledWindow>,
    pub val: Vec<MotionWindow>,
    pub test: Vec<MotionWindow>,
}

impl PreparedData {
    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            dictionary: self.dictionary.clone(),
            audio_norm: self.audio_norm.clone(),
            style_stats: self.style_stats,
            bone_lengths: *self.skeleton.bone_lengths(),
            mean_pose: self.mean_pose,
        }
    }
}

pub fn prepare(dataset: &Dataset, cfg: &TrainConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let split = dataset.split(cfg.split_seed)?;
    split.check_disjoint()?;
    let train_clips = &split.train.clips;
    let dictionary = Dictionary::build(train_clips.iter().flat_map(|c| c.timings.iter().map(|t| t.word.as_str())));
    let skeleton = SkeletonSpec::from_poses(train_clips.iter().flat_map(|c| c.motion.frames.iter()))?;
    let motions: Vec<_> = train_clips.iter().map(|c| c.motion.clone()).collect();
    let mean_pose = skeleton.to_dirvec(&mean_pose(&motions)?)?;
    let audio_norm = AudioNorm::fit(train_clips.iter().flat_map(|c| c.audio_features.iter()))?;

    let train_windows = windows(&split.train, &dictionary, &skeleton, cfg.window, cfg.stride)?;
    if train_windows.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    let raw_tracks = train_windows
        .iter()
        .map(|w| {
            let poses: Vec<_> = w.reference.iter().map(|d| skeleton.to_pose(d)).collect();
            style_track_frames(&poses, cfg.style_window)
        })
        .collect::<sgt_core::Result<Vec<_>>>()?;
    let style_stats = fit_norm_stats_from_tracks(&raw_tracks)?;
    let train = train_windows
        .into_iter()
        .zip(&raw_tracks)
        .map(|(window, raw)| StyledWindow {
            window,
            style: normalize_style(raw, &style_stats),
        })
        .collect();
    let val = windows(&split.val, &dictionary, &skeleton, cfg.window, cfg.stride)?;
    let test = windows(&split.test, &dictionary, &skeleton, cfg.window, cfg.stride)?;
    if val.is_empty() {
        return Err(NnError::EmptySplit("val"));
    }
    Ok(PreparedData {
        split,
        dictionary,
        skeleton,
        style_stats,
        audio_norm,
        mean_pose,
        train,
        val,
        test,
    })
}

/// Smooth L1 with unit threshold, averaged over every element.
pub fn huber_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let a = (pred - target)?.abs()?;
    let q = a.minimum(1.0)?;
    Ok(((q.sqr()? * 0.5)? + (a - q)?)?.mean_all()?)
}

/// Masked L1 between generated style and the style controls; zero when
/// nothing is masked.
pub fn style_loss(style: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let sum = ((style - target)?.abs()? * mask)?.sum_all()?;
    let count = mask.sum_all()?.maximum(1.0)?;
    Ok((sum / count)?)
}

/// Non-saturating GAN losses: `(critic, generator)`.
pub fn gan_losses(real_logits: &Tensor, fake_logits: &Tensor) -> Result<(Tensor, Tensor)> {
    let critic = (softplus(&real_logits.neg()?)?.mean_all()? + softplus(fake_logits)?.mean_all()?)?;
    let generator = softplus(&fake_logits.neg()?)?.mean_all()?;
    Ok((critic, generator))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub generator: f64,
    pub huber: f64,
    pub style: f64,
    pub adversarial: f64,
    pub critic: f64,
    pub val_huber: f64,
    /// No-controls FGD on the validation windows.
    pub val_fgd: f64,
    pub val_pcs: f64,
    pub val_scs: f64,
}

pub const HISTORY_HEADER: &str = "epoch,generator,huber,style,adversarial,critic,val_huber,val_fgd,val_pcs,val_scs";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.generator,
            r.huber,
            r.style,
            r.adversarial,
            r.critic,
            r.val_huber,
            r.val_fgd,
            r.val_pcs,
            r.val_scs
        ));
    }
    s
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub data: PreparedData,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seconds: f64,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn huber_f64(a: &[DirVecFrame], b: &[DirVecFrame]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.flat().iter().zip(y.flat()) {
            let d = (u - v).abs();
            sum += if d <= 1.0 { 0.5 * d * d } else { d - 0.5 };
        }
    }
    sum / (a.len() * POSE_DIM) as f64
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let data = prepare(dataset, cfg)?;
    train_prepared(data, cfg)
}

pub fn train_prepared(data: PreparedData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let audio_dim = data.audio_norm.mean.len();
    let model_cfg = cfg.model_config(audio_dim, data.dictionary.len());
    let mut model = GeneratorModel::new(model_cfg.clone(), data.meta(), cfg.seed)?;
    let mut critic_init = ParamInit::new(cfg.seed.wrapping_add(1), DType::F32);
    let critic = Critic::new(&mut critic_init, &model_cfg)?;
    let critic_vars = critic_init.finish();

    let mut extractor = FeatureExtractor::new(cfg.extractor.clone())?;
    let refs: Vec<Vec<DirVecFrame>> = data.train.iter().map(|w| w.window.reference.clone()).collect();
    let ae = extractor.fit(&refs)?;
    tracing::info!(loss = ae.last().copied().unwrap_or(f64::NAN), "feature extractor trained");

    let adam = |vars| {
        AdamW::new(
            vars,
            ParamsAdamW {
                lr: cfg.lr,
                weight_decay: 0.0,
                ..Default::default()
            },
        )
    };
    let mut opt_g = adam(vars_only(&model.vars))?;
    let mut opt_d = adam(vars_only(&critic_vars))?;
    let style_ops = StyleOps::new(&data.skeleton, &data.style_stats, cfg.style_window, cfg.window, DType::F32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let val_refs: Vec<Vec<DirVecFrame>> = data.val.iter().map(|w| w.reference.clone()).collect();
    let val_reqs: Vec<GenRequest> = data
        .val
        .iter()
        .map(|w| {
            let t = w.reference.len();
            GenRequest {
                speech: w.speech.clone(),
                pose: sgt_core::controls::PoseControlTrack::empty(t),
                style: sgt_core::controls::StyleControlTrack::empty(t),
            }
        })
        .collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut reqs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let w = &data.train[i];
                let (pose, style) = simulate_controls(&w.window.reference, &w.style, &cfg.dropout, &mut rng);
                reqs.push(GenRequest {
                    speech: w.window.speech.clone(),
                    pose,
                    style,
                });
                targets.push(w.window.reference.clone());
            }
            let inputs = assemble_inputs(&reqs, &data.audio_norm, model_cfg.vocab_size, DType::F32)?;
            let real = frames_to_tensor(&targets, DType::F32)?;
            let raw = model.net.forward(&inputs)?;
            let fake = unit_bones(&raw)?;

            let (d_loss, _) = gan_losses(&critic.forward(&real)?, &critic.forward(&fake.detach())?)?;
            opt_d.step(&d_loss.backward()?)?;

            let huber = huber_loss(&raw, &real)?;
            let ctrl_style = inputs.controls.narrow(D::Minus1, POSE_DIM + 1, STYLE_DIM)?;
            let ctrl_mask = inputs.controls.narrow(D::Minus1, POSE_DIM + 1 + STYLE_DIM, STYLE_DIM)?;
            let style = style_loss(&style_ops.normalized(&fake)?, &ctrl_style, &ctrl_mask)?;
            let (_, adv) = gan_losses(&critic.forward(&real)?.detach(), &critic.forward(&fake)?)?;
            let g_loss = ((&huber * cfg.alpha)? + (&adv * cfg.beta)? + (&style * cfg.gamma)?)?;
            opt_g.step(&g_loss.backward()?)?;

            for (s, t) in sums.iter_mut().zip([&g_loss, &huber, &style, &adv, &d_loss]) {
                *s += scalar(t)?;
            }
            batches += 1;
        }
        let generated = model.generate_batch(&val_reqs)?;
        let report = evaluate(&model, &data.val, &extractor, &data.skeleton, &data.style_stats, cfg.style_window)?;
        let val_fgd = report.fgd_no_controls;
        let val_huber =
            generated.iter().zip(&val_refs).map(|(g, r)| huber_f64(g, r)).sum::<f64>() / val_refs.len() as f64;
        let m = sums.map(|s| s / batches as f64);
        let record = EpochRecord {
            epoch,
            generator: m[0],
            huber: m[1],
            style: m[2],
            adversarial: m[3],
            critic: m[4],
            val_huber,
            val_fgd,
            val_pcs: report.pcs,
            val_scs: report.scs,
        };
        tracing::info!(?record, elapsed = started.elapsed().as_secs_f64(), "epoch finished");
        if best.as_ref().is_none_or(|b| val_fgd < b.0) {
            let snapshot = model
                .vars
                .iter()
                .map(|(_, v)| Ok(v.as_tensor().copy()?))
                .collect::<Result<Vec<_>>>()?;
            best = Some((val_fgd, epoch, snapshot));
        }
        history.push(record);
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch");
    for ((_, var), t) in model.vars.iter_mut().zip(&snapshot) {
        var.set(t)?;
    }
    let checkpoint = Checkpoint {
        model,
        extractor,
        split: Some(data.split.fingerprints()),
        training: Some(serde_json::to_value(cfg)?),
    };
    Ok(TrainOutcome {
        checkpoint,
        data,
        history,
        best_epoch,
        seconds: started.elapsed().as_secs_f64(),
    })
}
