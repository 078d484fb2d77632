//! Manual-authoring baseline: natural cubic spline interpolation between
//! key poses, with the mean pose pinned at both ends.

use crate::error::{Error, Result};
use crate::skeleton::{MotionSequence, PoseFrame, SkeletonSpec, NUM_JOINTS};

/// Second derivatives of the natural cubic spline through `(xs, ys)`.
fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal system over interior knots, Thomas algorithm
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
    }
    for i in 1..k {
        let lower = xs[i + 1] - xs[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

/// Natural cubic spline of one coordinate sampled at integer frames
/// `0..n`. Knot frames return the knot value exactly.
pub fn spline_1d(knots: &[(usize, f64)], n: usize) -> Vec<f64> {
    let xs: Vec<f64> = knots.iter().map(|k| k.0 as f64).collect();
    let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
    let m = natural_second_derivatives(&xs, &ys);
    let mut seg = 0;
    (0..n)
        .map(|f| {
            let x = f as f64;
            while seg + 2 < xs.len() && x > xs[seg + 1] {
                seg += 1;
            }
            if let Some(&(_, y)) = knots.iter().find(|k| k.0 == f) {
                return y;
            }
            let (x0, x1) = (xs[seg], xs[seg + 1]);
            let h = x1 - x0;
            let (a, b) = (x1 - x, x - x0);
            // written as an offset from the left knot so equal knots give
            // an exactly constant segment
            ys[seg]
                + (ys[seg + 1] - ys[seg]) * b / h
                + (m[seg] * (a.powi(3) / h - a * h) + m[seg + 1] * (b.powi(3) / h - b * h)) / 6.0
        })
        .collect()
}

/// Key list sorted by frame, with `mean` inserted at the first and last
/// frames where the user gave no key.
pub fn resolve_knots(
    keys: &[(usize, PoseFrame)],
    n: usize,
    mean: &PoseFrame,
) -> Result<Vec<(usize, PoseFrame)>> {
    if n < 2 {
        return Err(Error::SequenceTooShort { len: n, min: 2 });
    }
    let mut knots = keys.to_vec();
    knots.sort_by_key(|k| k.0);
    for w in knots.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateKeyIndex(w[0].0));
        }
    }
    if let Some(&(index, _)) = knots.iter().find(|k| k.0 >= n) {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    if knots.first().map(|k| k.0) != Some(0) {
        knots.insert(0, (0, *mean));
    }
    if knots.last().map(|k| k.0) != Some(n - 1) {
        knots.push((n - 1, *mean));
    }
    Ok(knots)
}

/// Per-coordinate natural cubic spline through the key poses.
pub fn interpolate(
    keys: &[(usize, PoseFrame)],
    n: usize,
    mean: &PoseFrame,
) -> Result<MotionSequence> {
    let knots = resolve_knots(keys, n, mean)?;
    let mut frames = vec![PoseFrame::zeros(); n];
    for j in 0..NUM_JOINTS {
        for a in 0..3 {
            let coord: Vec<(usize, f64)> = knots.iter().map(|(f, p)| (*f, p.coords[j][a])).collect();
            for (f, v) in spline_1d(&coord, n).into_iter().enumerate() {
                frames[f].coords[j][a] = v;
            }
        }
    }
    Ok(MotionSequence::new(frames))
}

/// [`interpolate`] followed by re-imposing the skeleton's bone lengths on
/// every in-between frame. Knot frames are left exactly as given.
pub fn interpolate_rigid(
    keys: &[(usize, PoseFrame)],
    n: usize,
    mean: &PoseFrame,
    skel: &SkeletonSpec,
) -> Result<MotionSequence> {
    let knots = resolve_knots(keys, n, mean)?;
    let mut seq = interpolate(keys, n, mean)?;
    for (f, frame) in seq.frames.iter_mut().enumerate() {
        if knots.iter().any(|k| k.0 == f) {
            continue;
        }
        if let Ok(rigid) = skel.rigidify(frame) {
            *frame = rigid;
        }
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::rest_pose;

    #[test]
    fn no_keys_gives_constant_mean() {
        let mean = rest_pose(&SkeletonSpec::default());
        let seq = interpolate(&[], 30, &mean).unwrap();
        assert_eq!(seq.len(), 30);
        assert!(seq.frames.iter().all(|f| *f == mean));
    }

    #[test]
    fn mean_key_mid_sequence_stays_constant() {
        let mean = rest_pose(&SkeletonSpec::default());
        let seq = interpolate(&[(12, mean)], 30, &mean).unwrap();
        assert!(seq.frames.iter().all(|f| f.max_abs_diff(&mean) < 1e-15));
    }

    #[test]
    fn key_errors() {
        let mean = rest_pose(&SkeletonSpec::default());
        assert!(matches!(
            interpolate(&[(3, mean), (3, mean)], 10, &mean),
            Err(Error::DuplicateKeyIndex(3))
        ));
        assert!(matches!(
            interpolate(&[(10, mean)], 10, &mean),
            Err(Error::IndexOutOfRange { index: 10, len: 10 })
        ));
    }

    #[test]
    fn spline_reproduces_a_line() {
        let v = spline_1d(&[(0, 1.0), (4, 3.0), (10, 6.0)], 11);
        for (f, y) in v.iter().enumerate() {
            assert!((y - (1.0 + 0.5 * f as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_variant_keeps_bone_lengths() {
        let skel = SkeletonSpec::default();
        let mean = rest_pose(&skel);
        let mut key = mean;
        key.coords[crate::skeleton::joint::R_WRIST] = [-0.3, 0.6, 0.3];
        let key = skel.rigidify(&key).unwrap();
        let seq = interpolate_rigid(&[(15, key)], 30, &mean, &skel).unwrap();
        assert_eq!(seq.frames[15], key);
        for f in &seq.frames {
            let s = SkeletonSpec::from_poses([f]).unwrap();
            for (a, b) in s.bone_lengths().iter().zip(skel.bone_lengths()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
