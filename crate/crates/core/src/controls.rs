//! Pose and style control tracks with per-frame mask bits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{DirVecFrame, MotionSequence, PoseFrame, SkeletonSpec, NUM_BONES, NUM_JOINTS};
use crate::stylestats::{StyleFrame, STYLE_CLAMP, STYLE_DIM};

fn check_range(start: usize, end: usize, len: usize) -> Result<()> {
    if start >= end || end > len {
        return Err(Error::RangeOutOfBounds { start, end, len });
    }
    Ok(())
}

/// Desired dir-vec poses per frame; rows without a mask bit are all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseControlTrack {
    rows: Vec<DirVecFrame>,
    mask: Vec<bool>,
}

impl PoseControlTrack {
    pub fn empty(t: usize) -> Self {
        Self {
            rows: vec![DirVecFrame::zeros(); t],
            mask: vec![false; t],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn rows(&self) -> &[DirVecFrame] {
        &self.rows
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn any_masked(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    pub fn get(&self, i: usize) -> Option<&DirVecFrame> {
        self.mask[i].then(|| &self.rows[i])
    }

    pub fn set_frame(&mut self, i: usize, dirs: DirVecFrame) -> Result<()> {
        check_range(i, i + 1, self.len())?;
        self.rows[i] = dirs;
        self.mask[i] = true;
        Ok(())
    }

    /// Writes `frames` starting at `start`, overwriting anything already there.
    pub fn set_frames(&mut self, start: usize, frames: &[DirVecFrame]) -> Result<()> {
        check_range(start, start + frames.len(), self.len())?;
        for (k, f) in frames.iter().enumerate() {
            self.rows[start + k] = *f;
            self.mask[start + k] = true;
        }
        Ok(())
    }

    /// Sets the range `[start, end)` from a motion of exactly that length.
    pub fn set_motion(
        &mut self,
        start: usize,
        end: usize,
        motion: &MotionSequence,
        skel: &SkeletonSpec,
    ) -> Result<()> {
        check_range(start, end, self.len())?;
        if motion.len() != end - start {
            return Err(Error::LengthMismatch {
                expected: end - start,
                actual: motion.len(),
            });
        }
        let dirs = skel.sequence_to_dirvecs(motion)?;
        self.set_frames(start, &dirs)
    }

    pub fn clear_frame(&mut self, i: usize) {
        self.rows[i] = DirVecFrame::zeros();
        self.mask[i] = false;
    }

    /// Copy of `[start, start + len)`; frames past the end come back unmasked.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut out = Self::empty(len);
        for k in 0..len {
            if let Some(row) = self.rows.get(start + k) {
                if self.mask[start + k] {
                    out.rows[k] = *row;
                    out.mask[k] = true;
                }
            }
        }
        out
    }
}

/// Normalized style targets with one mask bit per element and frame.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleControlTrack {
    values: Vec<[f64; STYLE_DIM]>,
    masks: Vec<[bool; STYLE_DIM]>,
}

impl StyleControlTrack {
    pub fn empty(t: usize) -> Self {
        Self {
            values: vec![[0.0; STYLE_DIM]; t],
            masks: vec![[false; STYLE_DIM]; t],
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn values(&self) -> &[[f64; STYLE_DIM]] {
        &self.values
    }

    pub fn masks(&self) -> &[[bool; STYLE_DIM]] {
        &self.masks
    }

    pub fn any_masked(&self) -> bool {
        self.masks.iter().flatten().any(|&m| m)
    }

    pub fn set(&mut self, i: usize, element: usize, value: f64) -> Result<()> {
        check_range(i, i + 1, self.len())?;
        if element >= STYLE_DIM {
            return Err(Error::InvalidControls(format!("style element {element}")));
        }
        if !(value.is_finite() && value.abs() <= STYLE_CLAMP) {
            return Err(Error::InvalidControls(format!(
                "style value {value} outside [-{STYLE_CLAMP}, {STYLE_CLAMP}]"
            )));
        }
        self.values[i][element] = value;
        self.masks[i][element] = true;
        Ok(())
    }

    /// Applies a piecewise-constant segment over `[start, end)`; `None`
    /// elements are left untouched.
    pub fn set_segment(
        &mut self,
        start: usize,
        end: usize,
        values: [Option<f64>; STYLE_DIM],
    ) -> Result<()> {
        check_range(start, end, self.len())?;
        for i in start..end {
            for (k, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    self.set(i, k, *v)?;
                }
            }
        }
        Ok(())
    }

    pub fn clear(&mut self, i: usize, element: usize) {
        self.values[i][element] = 0.0;
        self.masks[i][element] = false;
    }

    pub fn window(&self, start: usize, len: usize) -> Self {
        let mut out = Self::empty(len);
        for k in 0..len {
            if start + k < self.len() {
                for e in 0..STYLE_DIM {
                    if self.masks[start + k][e] {
                        out.values[k][e] = self.values[start + k][e];
                        out.masks[k][e] = true;
                    }
                }
            }
        }
        out
    }
}

pub fn empty_controls(t: usize) -> (PoseControlTrack, StyleControlTrack) {
    (PoseControlTrack::empty(t), StyleControlTrack::empty(t))
}

/// Probabilities used when simulating controls from reference motion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlDropout {
    /// Drop every control of the sample (automatic-generation regime).
    pub drop_all: f64,
    /// Drop the pose control alone.
    pub drop_pose: f64,
    /// Drop the style control alone.
    pub drop_style: f64,
    /// Per-element probability of masking a style element off.
    pub drop_style_element: f64,
}

impl Default for ControlDropout {
    fn default() -> Self {
        Self {
            drop_all: 0.3,
            drop_pose: 0.3,
            drop_style: 0.3,
            drop_style_element: 0.5,
        }
    }
}

/// Simulates user controls from a reference window: a random contiguous
/// slice of the reference as pose control and a random subset of its
/// normalized style track as style control.
pub fn simulate_controls<R: Rng + ?Sized>(
    reference: &[DirVecFrame],
    reference_style: &[StyleFrame],
    dropout: &ControlDropout,
    rng: &mut R,
) -> (PoseControlTrack, StyleControlTrack) {
    let t = reference.len();
    assert_eq!(reference_style.len(), t, "style track length mismatch");
    let (mut pose, mut style) = empty_controls(t);
    // draws are made unconditionally so the rng stream does not depend on
    // which branches fire
    let drop_all = rng.random_bool(dropout.drop_all);
    let drop_pose = rng.random_bool(dropout.drop_pose);
    let drop_style = rng.random_bool(dropout.drop_style);
    let len = rng.random_range(1..=t);
    let start = rng.random_range(0..=t - len);
    let keep = loop {
        let keep: [bool; STYLE_DIM] =
            std::array::from_fn(|_| !rng.random_bool(dropout.drop_style_element));
        if keep.iter().any(|&k| k) {
            break keep;
        }
    };
    if drop_all {
        return (pose, style);
    }
    if !drop_pose {
        pose.set_frames(start, &reference[start..start + len])
            .expect("slice within track");
    }
    if !drop_style {
        for (i, f) in reference_style.iter().enumerate() {
            let v = f.to_array();
            for e in 0..STYLE_DIM {
                if keep[e] {
                    style.values[i][e] = v[e].clamp(-STYLE_CLAMP, STYLE_CLAMP);
                    style.masks[i][e] = true;
                }
            }
        }
    }
    (pose, style)
}

/// A run of pose-control frames. Rows are either 9 bone direction vectors
/// or 10 joint positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseControlJson {
    pub start: usize,
    pub frames: Vec<Vec<[f64; 3]>>,
}

/// A piecewise-constant style segment over `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleControlJson {
    pub start: usize,
    pub end: usize,
    pub speed: Option<f64>,
    pub space: Option<f64>,
    pub handedness: Option<f64>,
}

/// Service-facing control schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsJson {
    #[serde(default)]
    pub pose_controls: Vec<PoseControlJson>,
    #[serde(default)]
    pub style_controls: Vec<StyleControlJson>,
}

impl ControlsJson {
    pub fn is_empty(&self) -> bool {
        self.pose_controls.is_empty() && self.style_controls.is_empty()
    }

    /// Resolves the schema onto `t`-frame tracks. Later entries overwrite
    /// earlier ones where they overlap.
    pub fn to_tracks(
        &self,
        t: usize,
        skel: &SkeletonSpec,
    ) -> Result<(PoseControlTrack, StyleControlTrack)> {
        let (mut pose, mut style) = empty_controls(t);
        for pc in &self.pose_controls {
            let dirs = pc
                .frames
                .iter()
                .map(|row| row_to_dirvec(row, skel))
                .collect::<Result<Vec<_>>>()?;
            if dirs.is_empty() {
                return Err(Error::InvalidControls("pose control without frames".into()));
            }
            pose.set_frames(pc.start, &dirs)?;
        }
        for sc in &self.style_controls {
            style.set_segment(sc.start, sc.end, [sc.speed, sc.space, sc.handedness])?;
        }
        Ok((pose, style))
    }

    /// Inverse of [`to_tracks`](Self::to_tracks): contiguous masked runs
    /// become pose controls (dir-vec rows) and runs of identical style
    /// settings become segments.
    pub fn from_tracks(pose: &PoseControlTrack, style: &StyleControlTrack) -> Self {
        let mut pose_controls: Vec<PoseControlJson> = Vec::new();
        for i in 0..pose.len() {
            if let Some(row) = pose.get(i) {
                let r = row.dirs.to_vec();
                match pose_controls.last_mut() {
                    Some(pc) if pc.start + pc.frames.len() == i => pc.frames.push(r),
                    _ => pose_controls.push(PoseControlJson {
                        start: i,
                        frames: vec![r],
                    }),
                }
            }
        }
        let mut style_controls: Vec<StyleControlJson> = Vec::new();
        for i in 0..style.len() {
            let m = style.masks[i];
            if !m.iter().any(|&b| b) {
                continue;
            }
            let v = style.values[i];
            let opt = |e: usize| m[e].then_some(v[e]);
            let (speed, space, handedness) = (opt(0), opt(1), opt(2));
            match style_controls.last_mut() {
                Some(sc)
                    if sc.end == i
                        && sc.speed == speed
                        && sc.space == space
                        && sc.handedness == handedness =>
                {
                    sc.end += 1
                }
                _ => style_controls.push(StyleControlJson {
                    start: i,
                    end: i + 1,
                    speed,
                    space,
                    handedness,
                }),
            }
        }
        Self {
            pose_controls,
            style_controls,
        }
    }
}

fn row_to_dirvec(row: &[[f64; 3]], skel: &SkeletonSpec) -> Result<DirVecFrame> {
    if row.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidControls("non-finite pose value".into()));
    }
    match row.len() {
        NUM_BONES => {
            let mut d = DirVecFrame::zeros();
            d.dirs.copy_from_slice(row);
            if d.dirs.iter().any(|v| crate::skeleton::norm(*v) < 1e-9) {
                return Err(Error::InvalidControls("zero-length direction vector".into()));
            }
            // rows that are already unit length are kept bit-for-bit
            for v in d.dirs.iter_mut() {
                let n = crate::skeleton::norm(*v);
                if (n - 1.0).abs() > 1e-12 {
                    *v = [v[0] / n, v[1] / n, v[2] / n];
                }
            }
            Ok(d)
        }
        NUM_JOINTS => {
            let mut p = PoseFrame::zeros();
            p.coords.copy_from_slice(row);
            skel.to_dirvec(&p)
        }
        n => Err(Error::InvalidControls(format!(
            "pose rows must have {NUM_BONES} direction vectors or {NUM_JOINTS} joints, got {n}"
        ))),
    }
}
