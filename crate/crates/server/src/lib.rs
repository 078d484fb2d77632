//! REST service for the gesture authoring toolkit: speech synthesis,
//! model or keyframe generation, projects with undo/redo history, and the
//! unit-gesture library. Endpoint schemas live in `openapi.yaml`.

pub mod audio;
pub mod error;
pub mod projects;
mod routes;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sgt_core::controls::ControlsJson;
use sgt_core::corpus::make_synthetic_corpus;
use sgt_core::keyframe::interpolate_rigid;
use sgt_core::motionlib::MotionLibrary;
use sgt_core::skeleton::{rest_pose, DirVecFrame, MotionJson, PoseFrame, SkeletonSpec};
use sgt_core::speech::{AudioFeatureConfig, Dictionary, SpeechContext, SpeechPipeline, WordTiming};
use sgt_core::stylestats::{fit_norm_stats, normalized_style_of_dirvecs, StyleFrame, StyleNormStats, STYLE_WINDOW};
use sgt_core::synthesis::{generate_long, ChunkConfig, Generator};

pub use error::ApiError;
pub use routes::{router, ROUTES};

use audio::AudioStore;
use projects::{ProjectStore, DEFAULT_HISTORY_DEPTH};

/// The OpenAPI description served at `/api/openapi.yaml`.
pub const OPENAPI_YAML: &str = include_str!("../openapi.yaml");
/// JSON Schema for the controls object, shared with the web client.
pub const CONTROLS_SCHEMA: &str = include_str!("../schema/controls.schema.json");

/// Everything generation needs from a trained model.
#[derive(Clone)]
pub struct ModelBundle {
    pub generator: Arc<dyn Generator>,
    pub skeleton: SkeletonSpec,
    pub dictionary: Dictionary,
    pub style_stats: StyleNormStats,
    pub mean_pose: DirVecFrame,
    pub style_window: usize,
    pub audio: AudioFeatureConfig,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Directory of static web assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub history_depth: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            static_dir: None,
            history_depth: DEFAULT_HISTORY_DEPTH,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Model,
    Keyframe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechRequest {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeechResponse {
    pub audio_id: String,
    pub text: String,
    pub timings: Vec<WordTiming>,
    pub n_frames: usize,
    pub sample_rate: u32,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub audio_id: String,
    #[serde(default)]
    pub controls: ControlsJson,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub mode: Mode,
    pub n_frames: usize,
    pub motion: MotionJson,
    /// Normalized style of the output, one entry per frame.
    pub style: Vec<StyleFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub model_loaded: bool,
    pub gestures: usize,
}

pub struct AppState {
    pub skeleton: SkeletonSpec,
    pub mean_pose: DirVecFrame,
    pub style_stats: StyleNormStats,
    pub style_window: usize,
    pub model: Option<ModelBundle>,
    pub speech: SpeechPipeline,
    pub audio: AudioStore,
    pub projects: ProjectStore,
    pub library: MotionLibrary,
    pub static_dir: Option<PathBuf>,
}

/// Style statistics used when no model is loaded, fitted on a small
/// synthetic corpus.
pub fn fallback_style_stats() -> sgt_core::Result<StyleNormStats> {
    let corpus = make_synthetic_corpus(10, 0)?;
    let motions: Vec<_> = corpus.clips.into_iter().map(|c| c.motion).collect();
    fit_norm_stats(&motions, STYLE_WINDOW)
}

impl AppState {
    /// Opens the stores under `cfg.data_dir` and loads extra gestures from
    /// `data_dir/library` when it has an `index.json`.
    pub fn new(cfg: &ServiceConfig, speech: SpeechPipeline, model: Option<ModelBundle>) -> Result<Self, ApiError> {
        let io = |e: std::io::Error| ApiError::Internal(e.to_string());
        let (skeleton, mean_pose, style_stats, style_window) = match &model {
            Some(m) => (m.skeleton.clone(), m.mean_pose, m.style_stats, m.style_window),
            None => {
                let skel = SkeletonSpec::default();
                let mean = skel.to_dirvec(&rest_pose(&skel))?;
                (skel, mean, fallback_style_stats()?, STYLE_WINDOW)
            }
        };
        let library = MotionLibrary::starter(&skeleton);
        let lib_dir = cfg.data_dir.join("library");
        if lib_dir.join("index.json").exists() {
            library.import_dir(&lib_dir)?;
        }
        Ok(Self {
            skeleton,
            mean_pose,
            style_stats,
            style_window,
            model,
            speech,
            audio: AudioStore::open(&cfg.data_dir.join("audio")).map_err(io)?,
            projects: ProjectStore::open(&cfg.data_dir, cfg.history_depth).map_err(io)?,
            library,
            static_dir: cfg.static_dir.clone(),
        })
    }

    pub fn speech(&self, text: &str) -> Result<SpeechResponse, ApiError> {
        let (wave, timings) = self.speech.synthesize_speech(text)?;
        let entry = self.audio.insert(text, wave, timings)?;
        Ok(SpeechResponse {
            audio_id: entry.id.clone(),
            text: entry.meta.text.clone(),
            timings: entry.meta.timings.clone(),
            n_frames: entry.wave.n_frames(),
            sample_rate: entry.wave.sample_rate,
            duration: entry.wave.duration(),
        })
    }

    /// Runs one generation request. Pure given the loaded model and the
    /// stored audio.
    pub fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ApiError> {
        let audio = self.audio.get(&req.audio_id)?;
        let n = audio.wave.n_frames();
        let skel = &self.skeleton;
        let (pose, style) = req.controls.to_tracks(n, skel)?;
        let dirs: Vec<DirVecFrame> = match req.mode {
            Mode::Model => {
                let m = self.model.as_ref().ok_or(sgt_core::Error::ModelNotLoaded)?;
                let ctx = SpeechContext::from_waveform(
                    &audio.meta.text,
                    &audio.wave,
                    audio.meta.timings.clone(),
                    &m.dictionary,
                    &m.audio,
                )?;
                if ctx.len() != n {
                    return Err(ApiError::Internal(format!("{} feature rows for {n} frames", ctx.len())));
                }
                generate_long(m.generator.as_ref(), &ctx, &pose, &style, &ChunkConfig::default())?.frames
            }
            Mode::Keyframe => {
                let mean = skel.to_pose(&self.mean_pose);
                let keys: Vec<(usize, PoseFrame)> = (0..n)
                    .filter_map(|i| pose.get(i).map(|d| (i, skel.to_pose(d))))
                    .collect();
                if n < 2 {
                    vec![pose.get(0).copied().unwrap_or(self.mean_pose)]
                } else {
                    let seq = interpolate_rigid(&keys, n, &mean, skel)?;
                    skel.sequence_to_dirvecs(&seq)?
                }
            }
        };
        let motion = skel.dirvecs_to_sequence(&dirs).to_json();
        let style = if dirs.len() >= 2 {
            normalized_style_of_dirvecs(&dirs, skel, &self.style_stats, self.style_window)?
        } else {
            vec![StyleFrame::default(); dirs.len()]
        };
        Ok(GenerateResponse {
            mode: req.mode,
            n_frames: n,
            motion,
            style,
        })
    }

    pub fn health(&self) -> HealthResponse {
        HealthResponse {
            model_loaded: self.model.is_some(),
            gestures: self.library.list(None).len(),
        }
    }
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

