//! Evaluation protocol: the fixed control scenarios, the harness that runs
//! a generator over held-out windows, and the static-pose baseline.

use std::ops::Range;

use crate::controls::{PoseControlTrack, StyleControlTrack};
use crate::corpus::MotionWindow;
use crate::error::{Error, Result};
use crate::metrics::{fgd, pcs_many, pose_angle_error_degrees, scs_many, EvalReport, FeatureEncoder};
use crate::skeleton::{DirVecFrame, SkeletonSpec};
use crate::stylestats::{normalized_style_of_dirvecs, StyleNormStats, STYLE_DIM};
use crate::synthesis::{GenRequest, Generator};

/// Frames constrained in the pose-control scenario.
pub const POSE_CONTROL_FRAMES: Range<usize> = 10..15;

/// Reference frames [10, 15) as pose controls.
pub fn pose_protocol(reference: &[DirVecFrame]) -> Result<PoseControlTrack> {
    let mut track = PoseControlTrack::empty(reference.len());
    if reference.len() < POSE_CONTROL_FRAMES.end {
        return Err(Error::SequenceTooShort {
            len: reference.len(),
            min: POSE_CONTROL_FRAMES.end,
        });
    }
    track.set_frames(POSE_CONTROL_FRAMES.start, &reference[POSE_CONTROL_FRAMES])?;
    Ok(track)
}

/// Every style element on every frame, taken from the reference's own
/// normalized style.
pub fn style_protocol(
    reference: &[DirVecFrame],
    skel: &SkeletonSpec,
    stats: &StyleNormStats,
    window: usize,
) -> Result<StyleControlTrack> {
    let style = normalized_style_of_dirvecs(reference, skel, stats, window)?;
    let mut track = StyleControlTrack::empty(reference.len());
    for (i, s) in style.iter().enumerate() {
        for (e, v) in s.to_array().into_iter().enumerate().take(STYLE_DIM) {
            track.set(i, e, v)?;
        }
    }
    Ok(track)
}

/// Runs the three scenarios (no controls, pose controls, style controls)
/// over `windows` and scores them against the references.
pub fn evaluate<G, E>(
    gen: &G,
    windows: &[MotionWindow],
    encoder: &E,
    skel: &SkeletonSpec,
    stats: &StyleNormStats,
    style_window: usize,
) -> Result<EvalReport>
where
    G: Generator + ?Sized,
    E: FeatureEncoder + ?Sized,
{
    if windows.is_empty() {
        return Err(Error::EmptySet);
    }
    let real: Vec<Vec<DirVecFrame>> = windows.iter().map(|w| w.reference.clone()).collect();
    let request = |w: &MotionWindow, pose: PoseControlTrack, style: StyleControlTrack| GenRequest {
        speech: w.speech.clone(),
        pose,
        style,
    };

    let free: Vec<GenRequest> = windows
        .iter()
        .map(|w| {
            let t = w.reference.len();
            request(w, PoseControlTrack::empty(t), StyleControlTrack::empty(t))
        })
        .collect();
    let posed: Vec<GenRequest> = windows
        .iter()
        .map(|w| {
            let t = w.reference.len();
            Ok(request(w, pose_protocol(&w.reference)?, StyleControlTrack::empty(t)))
        })
        .collect::<Result<_>>()?;
    let styled: Vec<GenRequest> = windows
        .iter()
        .map(|w| {
            let t = w.reference.len();
            Ok(request(
                w,
                PoseControlTrack::empty(t),
                style_protocol(&w.reference, skel, stats, style_window)?,
            ))
        })
        .collect::<Result<_>>()?;

    let out_free = gen.generate_batch(&free)?;
    let out_posed = gen.generate_batch(&posed)?;
    let out_styled = gen.generate_batch(&styled)?;

    let pcs = pcs_many(posed.iter().zip(&out_posed).map(|(r, g)| (&r.pose, g.as_slice())))?;
    let angle = posed
        .iter()
        .zip(&out_posed)
        .map(|(r, g)| pose_angle_error_degrees(&r.pose, g))
        .sum::<Result<f64>>()?
        / posed.len() as f64;
    let styles = out_styled
        .iter()
        .map(|g| normalized_style_of_dirvecs(g, skel, stats, style_window))
        .collect::<Result<Vec<_>>>()?;
    let scs = scs_many(styled.iter().zip(&styles).map(|(r, s)| (&r.style, s.as_slice())))?;

    Ok(EvalReport {
        fgd_no_controls: fgd(&real, &out_free, encoder)?,
        fgd_pose_controls: fgd(&real, &out_posed, encoder)?,
        fgd_style_controls: fgd(&real, &out_styled, encoder)?,
        pcs,
        scs,
        pose_angle_degrees: angle,
    })
}

/// Ignores every input and holds one pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticPoseGenerator {
    pub frame: DirVecFrame,
}

impl Generator for StaticPoseGenerator {
    fn generate(&self, req: &GenRequest) -> Result<Vec<DirVecFrame>> {
        req.check()?;
        Ok(vec![self.frame; req.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::rest_pose;

    #[test]
    fn pose_protocol_masks_five_frames() {
        let skel = SkeletonSpec::default();
        let f = skel.to_dirvec(&rest_pose(&skel)).unwrap();
        let track = pose_protocol(&vec![f; 30]).unwrap();
        let masked: Vec<usize> = (0..30).filter(|&i| track.mask()[i]).collect();
        assert_eq!(masked, (10..15).collect::<Vec<_>>());
        assert!(pose_protocol(&vec![f; 12]).is_err());
    }
}
