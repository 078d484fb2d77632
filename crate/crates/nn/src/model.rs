//! Generator and critic networks.
//!
//! The generator reads per-frame audio features, word indices and the two
//! control tracks (values multiplied by their masks, plus the masks) and
//! predicts one 27-dimensional dir-vec frame per input frame.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};
use sgt_core::skeleton::{DirVecFrame, SkeletonSpec, NUM_BONES, POSE_DIM};
use sgt_core::speech::Dictionary;
use sgt_core::stylestats::{StyleNormStats, STYLE_DIM, STYLE_WINDOW};
use sgt_core::synthesis::{GenRequest, Generator};

use crate::error::{NnError, Result};
use crate::layers::{leaky_relu, BiGru, Conv1d, Embedding, Linear, NamedVars, ParamInit};
use crate::style::unit_bones;

/// Control channels per frame: pose values, pose mask, style values, style masks.
pub const CONTROL_DIM: usize = POSE_DIM + 1 + 2 * STYLE_DIM;
const INFER_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub audio_dim: usize,
    pub vocab_size: usize,
    pub word_dim: usize,
    pub audio_hidden: usize,
    /// Per direction.
    pub word_hidden: usize,
    /// Per direction.
    pub hidden: usize,
    pub critic_hidden: usize,
    pub style_window: usize,
}

impl ModelConfig {
    pub fn new(audio_dim: usize, vocab_size: usize) -> Self {
        Self {
            audio_dim,
            vocab_size,
            word_dim: 50,
            audio_hidden: 32,
            word_hidden: 32,
            hidden: 64,
            critic_hidden: 64,
            style_window: STYLE_WINDOW,
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.audio_hidden + 2 * self.word_hidden + CONTROL_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.audio_dim,
            self.vocab_size,
            self.word_dim,
            self.audio_hidden,
            self.word_hidden,
            self.hidden,
            self.critic_hidden,
            self.style_window,
        ];
        if dims.contains(&0) {
            return Err(NnError::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Per-band audio feature standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl AudioNorm {
    pub fn fit<'a>(frames: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for f in frames {
            if sum.is_empty() {
                sum = vec![0.0; f.len()];
                sq = vec![0.0; f.len()];
            }
            for (k, v) in f.iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(NnError::EmptySplit("train"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        Ok(Self { mean, std })
    }
}

/// Everything besides weights that inference needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dictionary: Dictionary,
    pub audio_norm: AudioNorm,
    pub style_stats: StyleNormStats,
    pub bone_lengths: [f64; NUM_BONES],
    pub mean_pose: DirVecFrame,
}

impl ModelMeta {
    pub fn skeleton(&self) -> Result<SkeletonSpec> {
        Ok(SkeletonSpec::new(self.bone_lengths)?)
    }
}

/// Batched network inputs, all with the same window length.
#[derive(Clone, Debug)]
pub struct Inputs {
    /// `(B, T, audio_dim)`, standardized.
    pub audio: Tensor,
    /// `(B*T,)` u32.
    pub words: Tensor,
    /// `(B, T, CONTROL_DIM)`.
    pub controls: Tensor,
    pub batch: usize,
    pub len: usize,
}

pub fn assemble_inputs(reqs: &[GenRequest], norm: &AudioNorm, vocab: usize, dtype: DType) -> Result<Inputs> {
    let len = reqs.first().ok_or(NnError::EmptySplit("request"))?.len();
    let dim = norm.mean.len();
    let mut audio = Vec::with_capacity(reqs.len() * len * dim);
    let mut words = Vec::with_capacity(reqs.len() * len);
    let mut controls = Vec::with_capacity(reqs.len() * len * CONTROL_DIM);
    for r in reqs {
        r.check()?;
        if r.len() != len {
            return Err(NnError::Config("requests in one batch must have equal length".into()));
        }
        for i in 0..len {
            let a = &r.speech.audio_features[i];
            if a.len() != dim {
                return Err(sgt_core::Error::DimensionMismatch(dim, a.len()).into());
            }
            audio.extend(a.iter().enumerate().map(|(k, v)| ((v - norm.mean[k]) / norm.std[k]) as f32));
            let w = r.speech.word_indices[i];
            words.push(if (w as usize) < vocab { w } else { 0 });
            match r.pose.get(i) {
                Some(f) => {
                    controls.extend(f.flat().iter().map(|&v| v as f32));
                    controls.push(1.0);
                }
                None => controls.extend(std::iter::repeat_n(0.0f32, POSE_DIM + 1)),
            }
            let (v, m) = (r.style.values()[i], r.style.masks()[i]);
            controls.extend((0..STYLE_DIM).map(|e| if m[e] { v[e] as f32 } else { 0.0 }));
            controls.extend(m.iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
        }
    }
    let dev = Device::Cpu;
    let b = reqs.len();
    Ok(Inputs {
        audio: Tensor::from_vec(audio, (b, len, dim), &dev)?.to_dtype(dtype)?,
        words: Tensor::from_vec(words, b * len, &dev)?,
        controls: Tensor::from_vec(controls, (b, len, CONTROL_DIM), &dev)?.to_dtype(dtype)?,
        batch: b,
        len,
    })
}

#[derive(Clone, Debug)]
pub struct GeneratorNet {
    audio: Vec<Conv1d>,
    embed: Embedding,
    words: BiGru,
    decoder: BiGru,
    head: Linear,
    out: Linear,
    mean_pose: Tensor,
}

impl GeneratorNet {
    pub fn new(p: &mut ParamInit, cfg: &ModelConfig, mean_pose: &DirVecFrame) -> Result<Self> {
        cfg.validate()?;
        p.scope("generator");
        let mut audio = vec![Conv1d::new(p, "audio.0", cfg.audio_dim, cfg.audio_hidden, 3)?];
        for k in 1..4 {
            audio.push(Conv1d::new(p, &format!("audio.{k}"), cfg.audio_hidden, cfg.audio_hidden, 3)?);
        }
        let embed = Embedding::new(p, "embed", cfg.vocab_size, cfg.word_dim)?;
        let words = BiGru::new(p, "words", cfg.word_dim, cfg.word_hidden)?;
        let decoder = BiGru::new(p, "decoder", cfg.fused_dim(), cfg.hidden)?;
        let head = Linear::new(p, "head", 2 * cfg.hidden, cfg.hidden)?;
        let out = Linear::new(p, "out", cfg.hidden, POSE_DIM)?;
        let mean_pose = Tensor::from_vec(mean_pose.flat().to_vec(), POSE_DIM, p.device())?.to_dtype(p.dtype())?;
        Ok(Self {
            audio,
            embed,
            words,
            decoder,
            head,
            out,
            mean_pose,
        })
    }

    /// Raw (not unit-normalized) dir-vecs, `(B, T, 27)`.
    pub fn forward(&self, x: &Inputs) -> Result<Tensor> {
        let (b, t) = (x.batch, x.len);
        let mut a = x.audio.transpose(1, 2)?.contiguous()?;
        for conv in &self.audio {
            a = leaky_relu(&conv.forward(&a)?)?;
        }
        let a = a.permute((2, 0, 1))?; // (T, B, C)
        let w = self.embed.forward(&x.words)?.reshape((b, t, ()))?.transpose(0, 1)?.contiguous()?;
        let w = self.words.forward(&w)?;
        let c = x.controls.transpose(0, 1)?;
        let fused = Tensor::cat(&[a, w, c], D::Minus1)?.contiguous()?;
        let h = self.decoder.forward(&fused)?;
        let y = self.out.forward(&leaky_relu(&self.head.forward(&h)?)?)?;
        Ok(y.transpose(0, 1)?.broadcast_add(&self.mean_pose)?)
    }
}

/// Scores dir-vec windows; higher means more realistic.
#[derive(Clone, Debug)]
pub struct Critic {
    convs: Vec<Conv1d>,
    out: Linear,
}

impl Critic {
    pub fn new(p: &mut ParamInit, cfg: &ModelConfig) -> Result<Self> {
        p.scope("critic");
        let h = cfg.critic_hidden;
        Ok(Self {
            convs: vec![
                Conv1d::new(p, "conv.0", POSE_DIM, h, 3)?,
                Conv1d::new(p, "conv.1", h, h, 3)?,
                Conv1d::new(p, "conv.2", h, h, 3)?,
            ],
            out: Linear::new(p, "out", h, 1)?,
        })
    }

    /// `(B, T, 27)` to logits `(B,)`.
    pub fn forward(&self, motion: &Tensor) -> Result<Tensor> {
        let mut x = motion.transpose(1, 2)?.contiguous()?;
        for conv in &self.convs {
            x = leaky_relu(&conv.forward(&x)?)?;
        }
        Ok(self.out.forward(&x.mean(D::Minus1)?)?.squeeze(1)?)
    }
}

/// Trained generator plus everything needed to run it.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    pub config: ModelConfig,
    pub meta: ModelMeta,
    pub net: GeneratorNet,
    pub vars: NamedVars,
}

impl GeneratorModel {
    pub fn new(config: ModelConfig, meta: ModelMeta, seed: u64) -> Result<Self> {
        let mut p = ParamInit::new(seed, DType::F32);
        let net = GeneratorNet::new(&mut p, &config, &meta.mean_pose)?;
        Ok(Self {
            config,
            meta,
            net,
            vars: p.finish(),
        })
    }

    pub fn inputs(&self, reqs: &[GenRequest]) -> Result<Inputs> {
        assemble_inputs(reqs, &self.meta.audio_norm, self.config.vocab_size, DType::F32)
    }

    /// Unit-length dir-vecs for one batch of equal-length requests.
    pub fn forward_frames(&self, reqs: &[GenRequest]) -> Result<Vec<Vec<DirVecFrame>>> {
        let y = unit_bones(&self.net.forward(&self.inputs(reqs)?)?)?;
        tensor_to_frames(&y)
    }
}

/// `(B, T, 27)` tensor to dir-vec frames.
pub fn tensor_to_frames(y: &Tensor) -> Result<Vec<Vec<DirVecFrame>>> {
    let v = y.to_dtype(DType::F64)?.to_vec3::<f64>()?;
    v.into_iter()
        .map(|w| w.iter().map(|f| Ok(DirVecFrame::from_flat(f)?)).collect())
        .collect()
}

/// `(B, T, 27)` tensor from dir-vec windows of equal length.
pub fn frames_to_tensor(windows: &[Vec<DirVecFrame>], dtype: DType) -> Result<Tensor> {
    let t = windows.first().map_or(0, Vec::len);
    let flat: Vec<f32> = windows
        .iter()
        .flatten()
        .flat_map(|f| f.flat())
        .map(|v| v as f32)
        .collect();
    Ok(Tensor::from_vec(flat, (windows.len(), t, POSE_DIM), &Device::Cpu)?.to_dtype(dtype)?)
}

impl Generator for GeneratorModel {
    fn generate(&self, req: &GenRequest) -> sgt_core::Result<Vec<DirVecFrame>> {
        Ok(self.forward_frames(std::slice::from_ref(req))?.remove(0))
    }

    fn generate_batch(&self, reqs: &[GenRequest]) -> sgt_core::Result<Vec<Vec<DirVecFrame>>> {
        let mut out = Vec::with_capacity(reqs.len());
        let mut start = 0;
        while start < reqs.len() {
            let len = reqs[start].len();
            let mut end = start + 1;
            while end < reqs.len() && end - start < INFER_CHUNK && reqs[end].len() == len {
                end += 1;
            }
            out.extend(self.forward_frames(&reqs[start..end])?);
            start = end;
        }
        Ok(out)
    }
}
