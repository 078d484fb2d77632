//! Differentiable forward kinematics and windowed style statistics, so the
//! style of generated motion can be used inside a loss.

use candle_core::{DType, Device, Tensor, D};
use sgt_core::skeleton::{joint, SkeletonSpec, NUM_JOINTS, POSE_DIM};
use sgt_core::stylestats::{window_bounds, StyleNormStats, STILL_WRIST_SPEED, STYLE_CLAMP};

use crate::error::Result;

/// Keeps square roots differentiable at zero displacement.
const SQRT_EPS: f64 = 1e-12;
/// Floor on wrist-speed denominators in the handedness ratio.
const RATIO_FLOOR: f64 = 1e-6;

/// Precomputed matrices for one window length.
#[derive(Clone, Debug)]
pub struct StyleOps {
    /// `(POSE_DIM, NUM_JOINTS*3)`, right-multiplies flattened dir-vecs.
    fk: Tensor,
    /// `(T-1, T)`: windowed mean of per-step displacements.
    step_avg: Tensor,
    /// `(T, T)`: windowed mean of per-frame values.
    frame_avg: Tensor,
    mean: Tensor,
    std: Tensor,
    len: usize,
}

impl StyleOps {
    pub fn new(skel: &SkeletonSpec, stats: &StyleNormStats, window: usize, len: usize, dtype: DType) -> Result<Self> {
        assert!(len >= 2, "style needs at least two frames");
        let dev = Device::Cpu;
        let rows = NUM_JOINTS * 3;
        let fk = Tensor::from_vec(skel.fk_matrix(), (rows, POSE_DIM), &dev)?.t()?.contiguous()?;
        let half = window / 2;
        let mut step_avg = vec![0.0; (len - 1) * len];
        let mut frame_avg = vec![0.0; len * len];
        for i in 0..len {
            let (lo, hi) = window_bounds(i, half, 1, len - 1);
            for j in lo..=hi {
                step_avg[(j - 1) * len + i] = 1.0 / (hi - lo + 1) as f64;
            }
            let (lo, hi) = window_bounds(i, half, 0, len - 1);
            for j in lo..=hi {
                frame_avg[j * len + i] = 1.0 / (hi - lo + 1) as f64;
            }
        }
        Ok(Self {
            fk: fk.to_dtype(dtype)?,
            step_avg: Tensor::from_vec(step_avg, (len - 1, len), &dev)?.to_dtype(dtype)?,
            frame_avg: Tensor::from_vec(frame_avg, (len, len), &dev)?.to_dtype(dtype)?,
            mean: Tensor::new(&stats.mean, &dev)?.to_dtype(dtype)?,
            std: Tensor::new(&stats.std, &dev)?.to_dtype(dtype)?,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Joint positions `(B, T, NUM_JOINTS, 3)` from dir-vecs `(B, T, 27)`.
    pub fn joints(&self, dirs: &Tensor) -> Result<Tensor> {
        let (b, t, _) = dirs.dims3()?;
        Ok(dirs
            .reshape((b * t, POSE_DIM))?
            .matmul(&self.fk)?
            .reshape((b, t, NUM_JOINTS, 3))?)
    }

    /// Raw `(speed, space, handedness)` per frame, `(B, T, 3)`.
    pub fn raw(&self, dirs: &Tensor) -> Result<Tensor> {
        self.raw_from_joints(&self.joints(dirs)?)
    }

    /// Raw style from joint positions `(B, T, NUM_JOINTS, 3)`.
    pub fn raw_from_joints(&self, p: &Tensor) -> Result<Tensor> {
        let (_, t, _, _) = p.dims4()?;
        assert_eq!(t, self.len, "window length differs from precomputed ops");
        let disp = (p.narrow(1, 1, t - 1)? - p.narrow(1, 0, t - 1)?)?;
        let step = (disp.sqr()?.sum(D::Minus1)? + SQRT_EPS)?.sqrt()?; // (B, T-1, J)
        let avg_steps = |x: &Tensor| -> Result<Tensor> { Ok(x.broadcast_matmul(&self.step_avg)?) };

        let speed = avg_steps(&step.mean(D::Minus1)?)?;
        let left = avg_steps(&step.narrow(2, joint::L_WRIST, 1)?.squeeze(2)?)?;
        let right = avg_steps(&step.narrow(2, joint::R_WRIST, 1)?.squeeze(2)?)?;

        let gap = (p.narrow(2, joint::L_WRIST, 1)? - p.narrow(2, joint::R_WRIST, 1)?)?.squeeze(2)?;
        let sep = (gap.sqr()?.sum(D::Minus1)? + SQRT_EPS)?.sqrt()?;
        let space = sep.broadcast_matmul(&self.frame_avg)?;

        let right_faster = right.gt(&left)?;
        let when_right = ((&left / right.maximum(RATIO_FLOOR)?)? - 1.0)?;
        let when_left = (1.0 - (&right / left.maximum(RATIO_FLOOR)?)?)?;
        let hand = right_faster.where_cond(&when_right, &when_left)?;
        let still = left.maximum(&right)?.lt(STILL_WRIST_SPEED)?;
        let hand = still.where_cond(&hand.zeros_like()?, &hand)?;

        Ok(Tensor::stack(&[speed, space, hand], D::Minus1)?)
    }

    /// Normalized and clamped style, `(B, T, 3)`.
    pub fn normalized(&self, dirs: &Tensor) -> Result<Tensor> {
        let raw = self.raw(dirs)?;
        Ok(raw
            .broadcast_sub(&self.mean)?
            .broadcast_div(&self.std)?
            .clamp(-STYLE_CLAMP, STYLE_CLAMP)?)
    }
}

/// Rescales every bone direction to unit length.
pub fn unit_bones(dirs: &Tensor) -> Result<Tensor> {
    let (b, t, _) = dirs.dims3()?;
    let v = dirs.reshape((b, t, POSE_DIM / 3, 3))?;
    let n = (v.sqr()?.sum_keepdim(D::Minus1)? + SQRT_EPS)?.sqrt()?;
    Ok(v.broadcast_div(&n)?.reshape((b, t, POSE_DIM))?)
}
