//! Long-form generation by sliding windows, stitched by feeding the tail of
//! what has already been emitted back in as pose controls.

use serde::{Deserialize, Serialize};

use crate::controls::{PoseControlTrack, StyleControlTrack};
use crate::error::{Error, Result};
use crate::skeleton::{DirVecFrame, NUM_BONES};
use crate::speech::{SpeechContext, SpeechWindow};

/// Inputs of one generator call; every track has the same number of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GenRequest {
    pub speech: SpeechWindow,
    pub pose: PoseControlTrack,
    pub style: StyleControlTrack,
}

impl GenRequest {
    pub fn len(&self) -> usize {
        self.speech.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speech.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let t = self.speech.len();
        if t == 0
            || self.speech.audio_features.len() != t
            || self.pose.len() != t
            || self.style.len() != t
        {
            return Err(Error::ShapeMismatch(format!(
                "speech {} / audio {} / pose {} / style {} frames",
                t,
                self.speech.audio_features.len(),
                self.pose.len(),
                self.style.len()
            )));
        }
        Ok(())
    }
}

/// Anything that maps speech plus controls to one dir-vec frame per input
/// frame.
pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenRequest) -> Result<Vec<DirVecFrame>>;

    fn generate_batch(&self, reqs: &[GenRequest]) -> Result<Vec<Vec<DirVecFrame>>> {
        reqs.iter().map(|r| self.generate(r)).collect()
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, req: &GenRequest) -> Result<Vec<DirVecFrame>> {
        (**self).generate(req)
    }

    fn generate_batch(&self, reqs: &[GenRequest]) -> Result<Vec<Vec<DirVecFrame>>> {
        (**self).generate_batch(reqs)
    }
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn generate(&self, req: &GenRequest) -> Result<Vec<DirVecFrame>> {
        (**self).generate(req)
    }

    fn generate_batch(&self, reqs: &[GenRequest]) -> Result<Vec<Vec<DirVecFrame>>> {
        (**self).generate_batch(reqs)
    }
}

/// Window layout for long generation. The first call covers `stride`
/// frames; every later call covers `context` already-emitted frames
/// (pose-controlled) followed by `stride` new ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub stride: usize,
    pub context: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            stride: 30,
            context: 30,
        }
    }
}

/// Controls for the window `[start, start + len)`: the user's controls,
/// plus seam frames (`seam_frames[k]` belongs at `seam_start + k`) on frames
/// the user left uncontrolled.
pub fn merge_controls(
    user_pose: &PoseControlTrack,
    user_style: &StyleControlTrack,
    start: usize,
    len: usize,
    seam_start: usize,
    seam_frames: &[DirVecFrame],
) -> (PoseControlTrack, StyleControlTrack) {
    let mut pose = user_pose.window(start, len);
    for (k, f) in seam_frames.iter().enumerate() {
        let global = seam_start + k;
        if global < start || global >= start + len {
            continue;
        }
        let local = global - start;
        if !pose.mask()[local] {
            pose.set_frame(local, *f).expect("local index within window");
        }
    }
    (pose, user_style.window(start, len))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongGeneration {
    pub frames: Vec<DirVecFrame>,
    pub windows: usize,
    /// Per seam: largest absolute difference between the new window's
    /// output on the overlap and the frames emitted before it.
    pub seam_discontinuity: Vec<f64>,
}

pub fn generate_long<G: Generator + ?Sized>(
    gen: &G,
    ctx: &SpeechContext,
    user_pose: &PoseControlTrack,
    user_style: &StyleControlTrack,
    cfg: &ChunkConfig,
) -> Result<LongGeneration> {
    let n = ctx.len();
    if n == 0 {
        return Err(Error::SequenceTooShort { len: 0, min: 1 });
    }
    if cfg.stride == 0 {
        return Err(Error::InvalidControls("chunk stride must be positive".into()));
    }
    for len in [user_pose.len(), user_style.len(), ctx.audio_features.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let mut emitted: Vec<DirVecFrame> = Vec::with_capacity(n + cfg.stride);
    let mut seams = Vec::new();
    let mut windows = 0;
    while emitted.len() < n {
        let end = emitted.len();
        let start = end.saturating_sub(cfg.context);
        let len = end - start + cfg.stride;
        let (pose, style) = merge_controls(user_pose, user_style, start, len, start, &emitted[start..end]);
        let req = GenRequest {
            speech: ctx.window(start, len),
            pose,
            style,
        };
        let out = gen.generate(&req)?;
        if out.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: out.len(),
            });
        }
        if end > start {
            let diff = out[..end - start]
                .iter()
                .zip(&emitted[start..end])
                .flat_map(|(a, b)| (0..NUM_BONES).flat_map(move |k| (0..3).map(move |c| (a.dirs[k][c] - b.dirs[k][c]).abs())))
                .fold(0.0, f64::max);
            seams.push(diff);
        }
        emitted.extend_from_slice(&out[end - start..]);
        windows += 1;
    }
    emitted.truncate(n);
    Ok(LongGeneration {
        frames: emitted,
        windows,
        seam_discontinuity: seams,
    })
}
