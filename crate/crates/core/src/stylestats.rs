//! Windowed motion style statistics: speed, space and handedness.
//!
//! For frame `i` with window `w`, the window is `[i - w/2, i + w/2]` clamped
//! to the valid range and statistics are averaged over the frames actually
//! available.
//!
//! * speed: mean per-joint displacement magnitude `|p_j - p_{j-1}|`, averaged
//!   over the window and over all joints.
//! * space: mean distance between the two wrists over the window.
//! * handedness: `speed_L / speed_R - 1` when the right wrist is faster,
//!   `1 - speed_R / speed_L` otherwise; `0` when both wrists are still.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{joint, norm, sub, DirVecFrame, MotionSequence, PoseFrame, SkeletonSpec, NUM_JOINTS};

pub const STYLE_WINDOW: usize = 30;
pub const STYLE_CLAMP: f64 = 3.0;
pub const STYLE_DIM: usize = 3;
pub const STYLE_NAMES: [&str; STYLE_DIM] = ["speed", "space", "handedness"];
/// Wrist speeds below this are treated as "not moving" for handedness.
pub const STILL_WRIST_SPEED: f64 = 1e-6;
const MIN_STD: f64 = 1e-8;

/// One frame of style statistics, either raw or normalized depending on
/// where it came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleFrame {
    pub speed: f64,
    pub space: f64,
    pub handedness: f64,
}

impl StyleFrame {
    pub fn to_array(self) -> [f64; STYLE_DIM] {
        [self.speed, self.space, self.handedness]
    }

    pub fn from_array(v: [f64; STYLE_DIM]) -> Self {
        Self {
            speed: v[0],
            space: v[1],
            handedness: v[2],
        }
    }
}

/// Handedness from left and right wrist speeds; always in `[-1, 1]`.
pub fn handedness(speed_left: f64, speed_right: f64) -> f64 {
    if speed_left.max(speed_right) < STILL_WRIST_SPEED {
        0.0
    } else if speed_right > speed_left {
        speed_left / speed_right - 1.0
    } else {
        1.0 - speed_right / speed_left
    }
}

/// Inclusive `(lo, hi)` window bounds for frame `i`, clamped to `[min, max]`.
pub fn window_bounds(i: usize, half: usize, min: usize, max: usize) -> (usize, usize) {
    (i.saturating_sub(half).max(min), (i + half).min(max))
}

/// Raw style statistics for every frame of `seq`.
pub fn style_track(seq: &MotionSequence, window: usize) -> Result<Vec<StyleFrame>> {
    style_track_frames(&seq.frames, window)
}

pub fn style_track_frames(frames: &[PoseFrame], window: usize) -> Result<Vec<StyleFrame>> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::SequenceTooShort { len: n, min: 2 });
    }
    // index j holds the displacement from frame j-1 to j; index 0 is unused
    let mut all = vec![0.0; n];
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    for j in 1..n {
        let (prev, cur) = (&frames[j - 1], &frames[j]);
        let mut s = 0.0;
        for k in 0..NUM_JOINTS {
            s += norm(sub(cur.coords[k], prev.coords[k]));
        }
        all[j] = s / NUM_JOINTS as f64;
        left[j] = norm(sub(cur.coords[joint::L_WRIST], prev.coords[joint::L_WRIST]));
        right[j] = norm(sub(cur.coords[joint::R_WRIST], prev.coords[joint::R_WRIST]));
    }
    let separation: Vec<f64> = frames
        .iter()
        .map(|f| norm(sub(f.coords[joint::L_WRIST], f.coords[joint::R_WRIST])))
        .collect();

    let half = window / 2;
    let mean = |v: &[f64], lo: usize, hi: usize| v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = window_bounds(i, half, 1, n - 1);
            let (slo, shi) = window_bounds(i, half, 0, n - 1);
            StyleFrame {
                speed: mean(&all, lo, hi),
                space: mean(&separation, slo, shi),
                handedness: handedness(mean(&left, lo, hi), mean(&right, lo, hi)),
            }
        })
        .collect())
}

/// Normalized style of a dir-vec window, joint positions recovered by
/// forward kinematics on `skel`.
pub fn normalized_style_of_dirvecs(
    dirs: &[DirVecFrame],
    skel: &SkeletonSpec,
    stats: &StyleNormStats,
    window: usize,
) -> Result<Vec<StyleFrame>> {
    let poses: Vec<PoseFrame> = dirs.iter().map(|d| skel.to_pose(d)).collect();
    Ok(normalize_style(&style_track_frames(&poses, window)?, stats))
}

/// Training-set mean and standard deviation of each style element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleNormStats {
    pub mean: [f64; STYLE_DIM],
    pub std: [f64; STYLE_DIM],
}

impl StyleNormStats {
    pub fn new(mean: [f64; STYLE_DIM], std: [f64; STYLE_DIM]) -> Result<Self> {
        for (k, &s) in std.iter().enumerate() {
            if !(s.is_finite() && s >= MIN_STD) {
                return Err(Error::DegenerateVariance(STYLE_NAMES[k]));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, raw: StyleFrame) -> StyleFrame {
        let v = raw.to_array();
        StyleFrame::from_array(std::array::from_fn(|k| {
            ((v[k] - self.mean[k]) / self.std[k]).clamp(-STYLE_CLAMP, STYLE_CLAMP)
        }))
    }

    pub fn denormalize(&self, normalized: StyleFrame) -> StyleFrame {
        let v = normalized.to_array();
        StyleFrame::from_array(std::array::from_fn(|k| v[k] * self.std[k] + self.mean[k]))
    }
}

pub fn normalize_style(raw: &[StyleFrame], stats: &StyleNormStats) -> Vec<StyleFrame> {
    raw.iter().map(|&f| stats.normalize(f)).collect()
}

pub fn denormalize_style(normalized: &[StyleFrame], stats: &StyleNormStats) -> Vec<StyleFrame> {
    normalized.iter().map(|&f| stats.denormalize(f)).collect()
}

/// Mean and (population) standard deviation over every style frame of
/// every sequence.
pub fn fit_norm_stats(dataset: &[MotionSequence], window: usize) -> Result<StyleNormStats> {
    let tracks = dataset
        .iter()
        .map(|s| style_track(s, window))
        .collect::<Result<Vec<_>>>()?;
    fit_norm_stats_from_tracks(&tracks)
}

pub fn fit_norm_stats_from_tracks(tracks: &[Vec<StyleFrame>]) -> Result<StyleNormStats> {
    let count: usize = tracks.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = count as f64;
    let mut mean = [0.0; STYLE_DIM];
    for f in tracks.iter().flatten() {
        for (m, v) in mean.iter_mut().zip(f.to_array()) {
            *m += v;
        }
    }
    mean = mean.map(|m| m / n);
    let mut var = [0.0; STYLE_DIM];
    for f in tracks.iter().flatten() {
        for k in 0..STYLE_DIM {
            var[k] += (f.to_array()[k] - mean[k]).powi(2);
        }
    }
    StyleNormStats::new(mean, var.map(|v| (v / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{rest_pose, SkeletonSpec};

    fn moving_right_wrist(n: usize) -> MotionSequence {
        let base = rest_pose(&SkeletonSpec::default());
        MotionSequence::new(
            (0..n)
                .map(|i| {
                    let mut p = base;
                    p.coords[joint::R_WRIST][1] += 0.01 * i as f64;
                    p
                })
                .collect(),
        )
    }

    #[test]
    fn static_sequence_has_zero_speed() {
        let seq = MotionSequence::new(vec![rest_pose(&SkeletonSpec::default()); 40]);
        let track = style_track(&seq, STYLE_WINDOW).unwrap();
        assert_eq!(track.len(), 40);
        assert!(track.iter().all(|f| f.speed == 0.0 && f.handedness == 0.0));
    }

    #[test]
    fn right_wrist_only_gives_minus_one() {
        let track = style_track(&moving_right_wrist(20), STYLE_WINDOW).unwrap();
        assert!(track.iter().all(|f| f.handedness == -1.0));
        let mirrored = style_track(&moving_right_wrist(20).mirrored(), STYLE_WINDOW).unwrap();
        assert!(mirrored.iter().all(|f| f.handedness == 1.0));
    }

    #[test]
    fn constant_separation_gives_constant_space() {
        let mut base = rest_pose(&SkeletonSpec::default());
        base.coords[joint::L_WRIST] = [0.35, 0.1, 0.2];
        base.coords[joint::R_WRIST] = [-0.35, 0.1, 0.2];
        let seq = MotionSequence::new(
            (0..25)
                .map(|i| {
                    let mut p = base;
                    for j in [joint::L_WRIST, joint::R_WRIST] {
                        p.coords[j][1] += 0.02 * (i as f64).sin();
                    }
                    p
                })
                .collect(),
        );
        for f in style_track(&seq, STYLE_WINDOW).unwrap() {
            assert!((f.space - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_is_rejected() {
        let seq = MotionSequence::new(vec![rest_pose(&SkeletonSpec::default())]);
        assert!(matches!(
            style_track(&seq, STYLE_WINDOW),
            Err(Error::SequenceTooShort { len: 1, .. })
        ));
    }

    #[test]
    fn handedness_branches() {
        assert_eq!(handedness(0.0, 0.0), 0.0);
        assert_eq!(handedness(1e-7, 5e-7), 0.0);
        assert_eq!(handedness(0.0, 1.0), -1.0);
        assert_eq!(handedness(1.0, 0.0), 1.0);
        assert_eq!(handedness(0.5, 1.0), -0.5);
        assert_eq!(handedness(1.0, 0.5), 0.5);
        assert_eq!(handedness(2.0, 2.0), 0.0);
    }

    #[test]
    fn normalization_clamps_and_round_trips() {
        let stats = StyleNormStats::new([1.0, 2.0, 0.0], [0.5, 0.25, 0.4]).unwrap();
        let at_mean = stats.normalize(StyleFrame::from_array(stats.mean));
        assert_eq!(at_mean.to_array(), [0.0; 3]);
        let far = stats.normalize(StyleFrame::from_array([1.0 + 10.0 * 0.5, 2.0 - 10.0 * 0.25, 0.0]));
        assert_eq!(far.speed, 3.0);
        assert_eq!(far.space, -3.0);
        let raw = StyleFrame::from_array([1.3, 2.1, -0.5]);
        let back = stats.denormalize(stats.normalize(raw)).to_array();
        for k in 0..3 {
            assert!((back[k] - raw.to_array()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_sequences_have_degenerate_variance() {
        let seq = moving_right_wrist(10);
        let err = fit_norm_stats(&[seq.clone(), seq], STYLE_WINDOW).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)));
    }

    #[test]
    fn two_value_set_closed_form() {
        let tracks = vec![
            vec![StyleFrame::from_array([1.0, 2.0, -0.5])],
            vec![StyleFrame::from_array([3.0, 6.0, 0.5])],
        ];
        let stats = fit_norm_stats_from_tracks(&tracks).unwrap();
        assert_eq!(stats.mean, [2.0, 4.0, 0.0]);
        assert_eq!(stats.std, [1.0, 2.0, 0.5]);
    }
}
