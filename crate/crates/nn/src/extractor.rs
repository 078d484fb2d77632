//! Motion autoencoder whose latent code is the feature space for the
//! Fréchet gesture distance.

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sgt_core::metrics::FeatureEncoder;
use sgt_core::skeleton::{DirVecFrame, POSE_DIM};

use crate::error::{NnError, Result};
use crate::layers::{leaky_relu, vars_only, Conv1d, Linear, NamedVars, ParamInit};
use crate::model::frames_to_tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub window: usize,
    pub channels: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            window: 30,
            channels: 32,
            latent: 32,
            epochs: 20,
            batch_size: 128,
            lr: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub config: ExtractorConfig,
    conv: Conv1d,
    enc: Linear,
    dec: Linear,
    pub vars: NamedVars,
}

impl FeatureExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        if config.window == 0 || config.latent == 0 || config.channels == 0 {
            return Err(NnError::Config("extractor dimensions must be positive".into()));
        }
        let mut p = ParamInit::new(config.seed, DType::F32);
        p.scope("extractor");
        let conv = Conv1d::new(&mut p, "conv", POSE_DIM, config.channels, 3)?;
        let enc = Linear::new(&mut p, "enc", config.channels * config.window, config.latent)?;
        let dec = Linear::new(&mut p, "dec", config.latent, POSE_DIM * config.window)?;
        Ok(Self {
            config,
            conv,
            enc,
            dec,
            vars: p.finish(),
        })
    }

    /// `(B, T, 27)` to `(B, latent)`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let (b, _, _) = x.dims3()?;
        let h = leaky_relu(&self.conv.forward(&x.transpose(1, 2)?.contiguous()?)?)?;
        self.enc.forward(&h.reshape((b, ()))?)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        Ok(self.dec.forward(&self.encode(x)?)?.reshape((b, t, d))?)
    }

    /// Trains on reconstruction error; returns the mean loss of each epoch.
    pub fn fit(&mut self, windows: &[Vec<DirVecFrame>]) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Err(NnError::EmptySplit("train"));
        }
        self.check(windows)?;
        let mut opt = AdamW::new(
            vars_only(&self.vars),
            ParamsAdamW {
                lr: self.config.lr,
                weight_decay: 0.0,
                ..Default::default()
            },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let (mut total, mut batches) = (0.0, 0);
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<Vec<DirVecFrame>> = chunk.iter().map(|&i| windows[i].clone()).collect();
                let x = frames_to_tensor(&batch, DType::F32)?;
                let loss = (self.reconstruct(&x)? - &x)?.sqr()?.mean_all()?;
                opt.backward_step(&loss)?;
                total += loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
                batches += 1;
            }
            history.push(total / batches as f64);
        }
        Ok(history)
    }

    fn check(&self, windows: &[Vec<DirVecFrame>]) -> Result<()> {
        if let Some(w) = windows.iter().find(|w| w.len() != self.config.window) {
            return Err(sgt_core::Error::LengthMismatch {
                expected: self.config.window,
                actual: w.len(),
            }
            .into());
        }
        Ok(())
    }
}

impl FeatureEncoder for FeatureExtractor {
    fn encode_batch(&self, windows: &[Vec<DirVecFrame>]) -> sgt_core::Result<Vec<Vec<f64>>> {
        self.check(windows)?;
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(512) {
            let z = self
                .encode(&frames_to_tensor(chunk, DType::F32).map_err(sgt_core::Error::from)?)
                .and_then(|z| Ok(z.to_dtype(DType::F64)?.to_vec2::<f64>()?))?;
            out.extend(z);
        }
        Ok(out)
    }
}
