//! Upper-body skeleton and the two pose representations used throughout the
//! toolkit: root-relative joint coordinates and per-bone unit direction
//! vectors.
//!
//! Axis convention: `x` is lateral (the character's right side is at
//! negative `x`), `y` points up, `z` points forward. The root joint is the
//! spine and sits at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 10;
pub const NUM_BONES: usize = 9;
/// Flattened length of a [`DirVecFrame`].
pub const POSE_DIM: usize = NUM_BONES * 3;
pub const FPS: u32 = 15;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "nose",
    "head_top",
    "neck",
    "spine",
    "r_shoulder",
    "l_shoulder",
    "r_elbow",
    "l_elbow",
    "r_wrist",
    "l_wrist",
];

pub mod joint {
    pub const NOSE: usize = 0;
    pub const HEAD_TOP: usize = 1;
    pub const NECK: usize = 2;
    pub const SPINE: usize = 3;
    pub const R_SHOULDER: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const R_ELBOW: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_WRIST: usize = 8;
    pub const L_WRIST: usize = 9;
}

pub const ROOT: usize = joint::SPINE;

/// `(parent, child)` joint pairs. Every parent appears as a child of an
/// earlier bone (or is the root), so forward kinematics can run in order.
pub const BONES: [(usize, usize); NUM_BONES] = {
    use joint::*;
    [
        (SPINE, NECK),
        (NECK, NOSE),
        (NOSE, HEAD_TOP),
        (NECK, R_SHOULDER),
        (R_SHOULDER, R_ELBOW),
        (R_ELBOW, R_WRIST),
        (NECK, L_SHOULDER),
        (L_SHOULDER, L_ELBOW),
        (L_ELBOW, L_WRIST),
    ]
};

/// Left/right joint pairs swapped by mirroring.
pub const SYMMETRIC_JOINTS: [(usize, usize); 3] = {
    use joint::*;
    [(R_SHOULDER, L_SHOULDER), (R_ELBOW, L_ELBOW), (R_WRIST, L_WRIST)]
};

/// Left/right bone pairs swapped by mirroring.
pub const SYMMETRIC_BONES: [(usize, usize); 3] = [(3, 6), (4, 7), (5, 8)];

const DEGENERATE_EPS: f64 = 1e-9;

pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn mirror_index(pairs: &[(usize, usize)], i: usize) -> usize {
    for &(a, b) in pairs {
        if i == a {
            return b;
        }
        if i == b {
            return a;
        }
    }
    i
}

/// Root-relative joint positions, one row per joint in [`JOINT_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseFrame {
    pub coords: [Vec3; NUM_JOINTS],
}

impl PoseFrame {
    pub fn new(coords: [Vec3; NUM_JOINTS]) -> Self {
        Self { coords }
    }

    pub fn zeros() -> Self {
        Self {
            coords: [[0.0; 3]; NUM_JOINTS],
        }
    }

    pub fn joint(&self, j: usize) -> Vec3 {
        self.coords[j]
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().flatten().all(|v| v.is_finite())
    }

    /// Translates the pose so the root joint sits at the origin.
    pub fn recentered(&self) -> Self {
        let root = self.coords[ROOT];
        let mut out = *self;
        for c in out.coords.iter_mut() {
            *c = sub(*c, root);
        }
        out
    }

    pub fn mirrored(&self) -> Self {
        let mut out = Self::zeros();
        for (j, c) in self.coords.iter().enumerate() {
            let m = mirror_index(&SYMMETRIC_JOINTS, j);
            out.coords[m] = [-c[0], c[1], c[2]];
        }
        out
    }

    /// Largest absolute coordinate difference to `other`.
    pub fn max_abs_diff(&self, other: &PoseFrame) -> f64 {
        self.coords
            .iter()
            .flatten()
            .zip(other.coords.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One unit direction vector per bone, in [`BONES`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirVecFrame {
    pub dirs: [Vec3; NUM_BONES],
}

impl DirVecFrame {
    pub fn zeros() -> Self {
        Self {
            dirs: [[0.0; 3]; NUM_BONES],
        }
    }

    pub fn flat(&self) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        for (b, d) in self.dirs.iter().enumerate() {
            out[b * 3..b * 3 + 3].copy_from_slice(d);
        }
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::LengthMismatch {
                expected: POSE_DIM,
                actual: values.len(),
            });
        }
        let mut out = Self::zeros();
        for (b, d) in out.dirs.iter_mut().enumerate() {
            d.copy_from_slice(&values[b * 3..b * 3 + 3]);
        }
        Ok(out)
    }

    /// Rescales every bone vector to unit length. Zero vectors become the
    /// up direction so the result is always a valid frame.
    pub fn normalized(&self) -> Self {
        let mut out = *self;
        for d in out.dirs.iter_mut() {
            let n = norm(*d);
            *d = if n > DEGENERATE_EPS {
                [d[0] / n, d[1] / n, d[2] / n]
            } else {
                [0.0, 1.0, 0.0]
            };
        }
        out
    }

    pub fn mirrored(&self) -> Self {
        let mut out = Self::zeros();
        for (b, d) in self.dirs.iter().enumerate() {
            let m = mirror_index(&SYMMETRIC_BONES, b);
            out.dirs[m] = [-d[0], d[1], d[2]];
        }
        out
    }
}

/// Fixed 10-joint / 9-bone upper-body tree with per-bone lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    bone_lengths: [f64; NUM_BONES],
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self {
            bone_lengths: [0.45, 0.2, 0.18, 0.2, 0.3, 0.28, 0.2, 0.3, 0.28],
        }
    }
}

impl SkeletonSpec {
    pub fn new(bone_lengths: [f64; NUM_BONES]) -> Result<Self> {
        for (b, &len) in bone_lengths.iter().enumerate() {
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "bone {b} ({}->{}) has length {len}",
                    JOINT_NAMES[BONES[b].0],
                    JOINT_NAMES[BONES[b].1]
                )));
            }
        }
        Ok(Self { bone_lengths })
    }

    /// Canonical skeleton from the mean bone lengths of a set of poses.
    pub fn from_poses<'a>(poses: impl IntoIterator<Item = &'a PoseFrame>) -> Result<Self> {
        let mut sums = [0.0; NUM_BONES];
        let mut count = 0usize;
        for p in poses {
            for (b, &(parent, child)) in BONES.iter().enumerate() {
                sums[b] += norm(sub(p.coords[child], p.coords[parent]));
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        Self::new(sums.map(|s| s / count as f64))
    }

    pub fn bone_lengths(&self) -> &[f64; NUM_BONES] {
        &self.bone_lengths
    }

    pub fn to_dirvec(&self, pose: &PoseFrame) -> Result<DirVecFrame> {
        if !pose.is_finite() {
            return Err(Error::InvalidMotion("non-finite joint coordinate".into()));
        }
        let mut out = DirVecFrame::zeros();
        for (b, &(parent, child)) in BONES.iter().enumerate() {
            let d = sub(pose.coords[child], pose.coords[parent]);
            let n = norm(d);
            if n < DEGENERATE_EPS {
                return Err(Error::DegeneratePose { bone: b });
            }
            out.dirs[b] = [d[0] / n, d[1] / n, d[2] / n];
        }
        Ok(out)
    }

    /// Forward kinematics: root at the origin, each child placed one bone
    /// length along its direction from the parent.
    pub fn to_pose(&self, dirs: &DirVecFrame) -> PoseFrame {
        let mut out = PoseFrame::zeros();
        for (b, &(parent, child)) in BONES.iter().enumerate() {
            let p = out.coords[parent];
            let d = dirs.dirs[b];
            let len = self.bone_lengths[b];
            out.coords[child] = [p[0] + len * d[0], p[1] + len * d[1], p[2] + len * d[2]];
        }
        out
    }

    /// Linear map from a flattened dir-vec frame to flattened joint
    /// coordinates: `coords[j*3+a] = sum_k fk[(j*3+a), k] * dirs[k]`.
    /// Returned row-major with shape `(NUM_JOINTS*3, POSE_DIM)`.
    pub fn fk_matrix(&self) -> Vec<f64> {
        // bone_chain[j] = bones on the path from root to joint j
        let mut chain: [Vec<usize>; NUM_JOINTS] = Default::default();
        for (b, &(parent, child)) in BONES.iter().enumerate() {
            let mut c = chain[parent].clone();
            c.push(b);
            chain[child] = c;
        }
        let cols = POSE_DIM;
        let mut m = vec![0.0; NUM_JOINTS * 3 * cols];
        for (j, bones) in chain.iter().enumerate() {
            for &b in bones {
                for a in 0..3 {
                    m[(j * 3 + a) * cols + b * 3 + a] = self.bone_lengths[b];
                }
            }
        }
        m
    }

    pub fn sequence_to_dirvecs(&self, seq: &MotionSequence) -> Result<Vec<DirVecFrame>> {
        seq.frames.iter().map(|p| self.to_dirvec(p)).collect()
    }

    pub fn dirvecs_to_sequence(&self, dirs: &[DirVecFrame]) -> MotionSequence {
        MotionSequence::new(dirs.iter().map(|d| self.to_pose(d)).collect())
    }

    /// Re-imposes this skeleton's bone lengths on a pose, keeping bone
    /// directions.
    pub fn rigidify(&self, pose: &PoseFrame) -> Result<PoseFrame> {
        Ok(self.to_pose(&self.to_dirvec(pose)?))
    }
}

/// Fixed-rate sequence of poses.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub fps: u32,
    pub frames: Vec<PoseFrame>,
}

impl MotionSequence {
    pub fn new(frames: Vec<PoseFrame>) -> Self {
        Self { fps: FPS, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Left/right swap with the lateral axis negated.
    pub fn mirrored(&self) -> Self {
        Self {
            fps: self.fps,
            frames: self.frames.iter().map(PoseFrame::mirrored).collect(),
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            fps: self.fps,
            frames: self.frames[start..start + len].to_vec(),
        }
    }

    pub fn to_json(&self) -> MotionJson {
        MotionJson {
            fps: self.fps,
            joints: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            frames: self.frames.clone(),
        }
    }

    pub fn from_json(json: MotionJson) -> Result<Self> {
        if json.fps != FPS {
            return Err(Error::InvalidMotion(format!(
                "fps must be {FPS}, got {}",
                json.fps
            )));
        }
        if json.joints.len() != NUM_JOINTS
            || json.joints.iter().zip(JOINT_NAMES).any(|(a, b)| a != b)
        {
            return Err(Error::InvalidMotion(format!(
                "joint list must be {JOINT_NAMES:?}"
            )));
        }
        if json.frames.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidMotion("non-finite coordinate".into()));
        }
        Ok(Self::new(json.frames))
    }
}

/// Interchange format: `{ "fps": 15, "joints": [...], "frames": [[[x,y,z]; 10], ...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionJson {
    pub fps: u32,
    pub joints: Vec<String>,
    pub frames: Vec<PoseFrame>,
}

impl Serialize for MotionSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MotionSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = MotionJson::deserialize(d)?;
        Self::from_json(json).map_err(serde::de::Error::custom)
    }
}

/// Per-joint arithmetic mean over every frame of every sequence, re-centred
/// on the root.
pub fn mean_pose(dataset: &[MotionSequence]) -> Result<PoseFrame> {
    let mut sum = [[0.0; 3]; NUM_JOINTS];
    let mut count = 0usize;
    for frame in dataset.iter().flat_map(|s| s.frames.iter()) {
        for (acc, c) in sum.iter_mut().zip(frame.coords.iter()) {
            for a in 0..3 {
                acc[a] += c[a];
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = count as f64;
    Ok(PoseFrame::new(sum.map(|c| c.map(|v| v / n))).recentered())
}

/// A neutral standing pose on the given skeleton, arms hanging slightly
/// forward of the torso.
pub fn rest_pose(skel: &SkeletonSpec) -> PoseFrame {
    let mut d = DirVecFrame::zeros();
    d.dirs[0] = [0.0, 1.0, 0.0];
    d.dirs[1] = unit([0.0, 0.3, 1.0]);
    d.dirs[2] = unit([0.0, 1.0, -0.4]);
    d.dirs[3] = [-1.0, 0.0, 0.0];
    d.dirs[4] = unit([-0.15, -1.0, 0.1]);
    d.dirs[5] = unit([-0.05, -0.6, 0.8]);
    d.dirs[6] = [1.0, 0.0, 0.0];
    d.dirs[7] = unit([0.15, -1.0, 0.1]);
    d.dirs[8] = unit([0.05, -0.6, 0.8]);
    skel.to_pose(&d)
}

pub(crate) fn unit(v: Vec3) -> Vec3 {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> PoseFrame {
        let mut p = PoseFrame::zeros();
        for (j, c) in p.coords.iter_mut().enumerate() {
            if j != ROOT {
                *c = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
            }
        }
        p
    }

    #[test]
    fn t_pose_arms_are_horizontal() {
        let skel = SkeletonSpec::default();
        let mut d = DirVecFrame::zeros();
        d.dirs = [[0.0, 1.0, 0.0]; NUM_BONES];
        for b in [3, 4, 5] {
            d.dirs[b] = [-1.0, 0.0, 0.0];
        }
        for b in [6, 7, 8] {
            d.dirs[b] = [1.0, 0.0, 0.0];
        }
        let pose = skel.to_pose(&d);
        let back = skel.to_dirvec(&pose).unwrap();
        for b in [4, 5] {
            assert_eq!(back.dirs[b], [-1.0, 0.0, 0.0]);
        }
        for b in [7, 8] {
            assert_eq!(back.dirs[b], [1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn neck_above_spine_points_up() {
        let mut pose = rest_pose(&SkeletonSpec::default());
        let offset = 0.2 - pose.coords[joint::NECK][1];
        for j in [
            joint::NECK,
            joint::NOSE,
            joint::HEAD_TOP,
            joint::R_SHOULDER,
            joint::L_SHOULDER,
            joint::R_ELBOW,
            joint::L_ELBOW,
            joint::R_WRIST,
            joint::L_WRIST,
        ] {
            pose.coords[j][1] += offset;
        }
        let d = SkeletonSpec::default().to_dirvec(&pose).unwrap();
        assert_eq!(d.dirs[0], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn vertical_dirs_stack_vertically() {
        let skel = SkeletonSpec::default();
        let d = DirVecFrame {
            dirs: [[0.0, 1.0, 0.0]; NUM_BONES],
        };
        let p = skel.to_pose(&d);
        for c in p.coords {
            assert_eq!(c[0], 0.0);
            assert_eq!(c[2], 0.0);
            assert!(c[1] >= 0.0);
        }
        let neck = p.coords[joint::NECK][1];
        assert!((p.coords[joint::R_WRIST][1] - (neck + 0.2 + 0.3 + 0.28)).abs() < 1e-12);
    }

    #[test]
    fn zero_length_bone_is_rejected() {
        let mut lengths = *SkeletonSpec::default().bone_lengths();
        lengths[4] = 0.0;
        assert!(matches!(
            SkeletonSpec::new(lengths),
            Err(Error::InvalidSkeleton(_))
        ));
    }

    #[test]
    fn coincident_joints_are_degenerate() {
        let mut p = rest_pose(&SkeletonSpec::default());
        p.coords[joint::R_ELBOW] = p.coords[joint::R_SHOULDER];
        assert!(matches!(
            SkeletonSpec::default().to_dirvec(&p),
            Err(Error::DegeneratePose { bone: 4 })
        ));
    }

    #[test]
    fn round_trip_with_pose_bone_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let skel = SkeletonSpec::from_poses([&p]).unwrap();
            let back = skel.to_pose(&skel.to_dirvec(&p).unwrap());
            assert!(back.max_abs_diff(&p) < 1e-6);
        }
    }

    #[test]
    fn fk_matrix_matches_forward_kinematics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let skel = SkeletonSpec::default();
        let m = skel.fk_matrix();
        let p = random_pose(&mut rng);
        let d = skel.to_dirvec(&p).unwrap();
        let flat = d.flat();
        let fk = skel.to_pose(&d);
        for row in 0..NUM_JOINTS * 3 {
            let v: f64 = (0..POSE_DIM).map(|k| m[row * POSE_DIM + k] * flat[k]).sum();
            assert!((v - fk.coords[row / 3][row % 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_is_involution_and_fixes_symmetric_poses() {
        let skel = SkeletonSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq = MotionSequence::new((0..5).map(|_| random_pose(&mut rng)).collect());
        assert_eq!(seq.mirrored().mirrored(), seq);

        let rest = rest_pose(&skel);
        assert!(rest.mirrored().max_abs_diff(&rest) < 1e-12);

        let d = skel.to_dirvec(&seq.frames[0]).unwrap();
        let via_pose = skel.to_dirvec(&seq.frames[0].mirrored()).unwrap();
        let via_dirs = d.mirrored();
        for b in 0..NUM_BONES {
            for a in 0..3 {
                assert!((via_pose.dirs[b][a] - via_dirs.dirs[b][a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_pose_cases() {
        let skel = SkeletonSpec::default();
        let p = rest_pose(&skel);
        let one = MotionSequence::new(vec![p; 4]);
        assert!(mean_pose(std::slice::from_ref(&one)).unwrap().max_abs_diff(&p) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_pose(&mut rng);
        let two = [one, MotionSequence::new(vec![q; 4])];
        let m = mean_pose(&two).unwrap();
        for j in 0..NUM_JOINTS {
            for a in 0..3 {
                assert!((m.coords[j][a] - (p.coords[j][a] + q.coords[j][a]) / 2.0).abs() < 1e-12);
            }
        }
        assert!(matches!(mean_pose(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn motion_json_round_trip_and_validation() {
        let seq = MotionSequence::new(vec![rest_pose(&SkeletonSpec::default()); 3]);
        let text = serde_json::to_string(&seq).unwrap();
        assert!(text.starts_with("{\"fps\":15,\"joints\":[\"nose\""));
        let back: MotionSequence = serde_json::from_str(&text).unwrap();
        assert_eq!(back, seq);
        let bad = text.replace("\"fps\":15", "\"fps\":30");
        assert!(serde_json::from_str::<MotionSequence>(&bad).is_err());
    }
}
