//! Fréchet gesture distance and the pose/style compliance scores.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::controls::{PoseControlTrack, StyleControlTrack};
use crate::error::{Error, Result};
use crate::skeleton::{DirVecFrame, SkeletonSpec, NUM_BONES};
use crate::stylestats::{normalized_style_of_dirvecs, StyleFrame, StyleNormStats, STYLE_DIM};

const EIGEN_FLOOR: f64 = 1e-10;

/// Mean and covariance of a set of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(mean.len(), cov.nrows()));
        }
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance (zero covariance for a single
    /// sample).
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().ok_or(Error::EmptySet)?.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch(d, bad.len()));
        }
        let mut mean = DVector::zeros(d);
        for s in samples {
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        if n > 1 {
            for s in samples {
                let c = DVector::from_column_slice(s) - &mean;
                cov += &c * c.transpose();
            }
            cov /= (n - 1) as f64;
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root of a symmetric PSD matrix, eigenvalues floored at zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| if v < EIGEN_FLOOR { 0.0 } else { v.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`, with the trace of the
/// product root taken through the symmetric form `S1^(1/2) S2 S1^(1/2)`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let root_a = sqrtm_psd(&a.cov);
    let inner = symmetrize(&(&root_a * &b.cov * &root_a));
    let tr_covmean: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&v| if v < EIGEN_FLOOR { 0.0 } else { v.sqrt() })
        .sum();
    let value = diff + a.cov.trace() + b.cov.trace() - 2.0 * tr_covmean;
    Ok(value.max(0.0))
}

/// Maps fixed-length dir-vec windows to latent feature vectors.
pub trait FeatureEncoder {
    fn encode_batch(&self, windows: &[Vec<DirVecFrame>]) -> Result<Vec<Vec<f64>>>;
}

pub fn fgd<E: FeatureEncoder + ?Sized>(
    real: &[Vec<DirVecFrame>],
    generated: &[Vec<DirVecFrame>],
    encoder: &E,
) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::EmptySet);
    }
    let a = GaussianStats::fit(&encoder.encode_batch(real)?)?;
    let b = GaussianStats::fit(&encoder.encode_batch(generated)?)?;
    frechet_distance(&a, &b)
}

/// Mean absolute element difference over masked frames.
pub fn pcs(controls: &PoseControlTrack, generated: &[DirVecFrame]) -> Result<f64> {
    pcs_many(std::iter::once((controls, generated)))
}

/// PCS pooled over several samples.
pub fn pcs_many<'a>(
    items: impl IntoIterator<Item = (&'a PoseControlTrack, &'a [DirVecFrame])>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (controls, generated) in items {
        if controls.len() != generated.len() {
            return Err(Error::LengthMismatch {
                expected: controls.len(),
                actual: generated.len(),
            });
        }
        for (i, g) in generated.iter().enumerate() {
            if let Some(c) = controls.get(i) {
                for b in 0..NUM_BONES {
                    for a in 0..3 {
                        sum += (c.dirs[b][a] - g.dirs[b][a]).abs();
                    }
                }
                count += NUM_BONES * 3;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoMaskedFrames);
    }
    Ok(sum / count as f64)
}

/// Mean angle in degrees between controlled and generated bone directions,
/// for display next to PCS.
pub fn pose_angle_error_degrees(controls: &PoseControlTrack, generated: &[DirVecFrame]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, g) in generated.iter().enumerate().take(controls.len()) {
        if let Some(c) = controls.get(i) {
            let g = g.normalized();
            for b in 0..NUM_BONES {
                let dot: f64 = (0..3).map(|a| c.dirs[b][a] * g.dirs[b][a]).sum();
                sum += dot.clamp(-1.0, 1.0).acos().to_degrees();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoMaskedFrames);
    }
    Ok(sum / count as f64)
}

/// Mean absolute difference between style controls and a normalized style
/// track, over masked entries.
pub fn scs_from_style(controls: &StyleControlTrack, generated_style: &[StyleFrame]) -> Result<f64> {
    scs_many(std::iter::once((controls, generated_style)))
}

pub fn scs_many<'a>(
    items: impl IntoIterator<Item = (&'a StyleControlTrack, &'a [StyleFrame])>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (controls, style) in items {
        if controls.len() != style.len() {
            return Err(Error::LengthMismatch {
                expected: controls.len(),
                actual: style.len(),
            });
        }
        for (i, s) in style.iter().enumerate() {
            let v = s.to_array();
            for e in 0..STYLE_DIM {
                if controls.masks()[i][e] {
                    sum += (controls.values()[i][e] - v[e]).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::NoMaskedFrames);
    }
    Ok(sum / count as f64)
}

/// SCS of a generated dir-vec window, its style measured on the given
/// skeleton.
pub fn scs(
    controls: &StyleControlTrack,
    generated: &[DirVecFrame],
    skel: &SkeletonSpec,
    stats: &StyleNormStats,
    window: usize,
) -> Result<f64> {
    let style = normalized_style_of_dirvecs(generated, skel, stats, window)?;
    scs_from_style(controls, &style)
}

/// Evaluation summary in the shape of the usual results table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fgd_no_controls: f64,
    pub fgd_pose_controls: f64,
    pub fgd_style_controls: f64,
    pub pcs: f64,
    pub scs: f64,
    pub pose_angle_degrees: f64,
}
