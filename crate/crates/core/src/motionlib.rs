//! Library of short unit gestures usable as pose controls.

use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyframe;
use crate::skeleton::{rest_pose, unit, DirVecFrame, MotionSequence, PoseFrame, SkeletonSpec, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitGesture {
    pub id: String,
    pub name: String,
    pub tags: Vec<String>,
    pub anchor: String,
    pub motion: MotionSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureMeta {
    pub id: String,
    pub name: String,
    pub tags: Vec<String>,
    pub anchor: String,
    pub frames: usize,
}

impl UnitGesture {
    pub fn meta(&self) -> GestureMeta {
        GestureMeta {
            id: self.id.clone(),
            name: self.name.clone(),
            tags: self.tags.clone(),
            anchor: self.anchor.clone(),
            frames: self.motion.len(),
        }
    }
}

/// One line of a library `index.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub name: String,
    pub tags: Vec<String>,
    pub file: String,
    #[serde(default)]
    pub anchor: String,
}

/// Named poses shared by the gesture library and the synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanonicalPose {
    Rest,
    PointRight,
    PointLeft,
    PointUp,
    RaiseHands,
}

fn arms(
    skel: &SkeletonSpec,
    right: Option<(Vec3, Vec3)>,
    left: Option<(Vec3, Vec3)>,
    head: Option<Vec3>,
) -> PoseFrame {
    let mut d: DirVecFrame = skel.to_dirvec(&rest_pose(skel)).expect("rest pose is valid");
    if let Some((upper, fore)) = right {
        d.dirs[4] = unit(upper);
        d.dirs[5] = unit(fore);
    }
    if let Some((upper, fore)) = left {
        d.dirs[7] = unit(upper);
        d.dirs[8] = unit(fore);
    }
    if let Some(h) = head {
        d.dirs[1] = unit(h);
    }
    skel.to_pose(&d)
}

fn flip_x(v: Vec3) -> Vec3 {
    [-v[0], v[1], v[2]]
}

pub fn canonical_pose(which: CanonicalPose, skel: &SkeletonSpec) -> PoseFrame {
    let point = ([-0.9, 0.15, 0.45], [-1.0, 0.2, 0.35]);
    match which {
        CanonicalPose::Rest => rest_pose(skel),
        CanonicalPose::PointRight => arms(skel, Some(point), None, None),
        CanonicalPose::PointLeft => arms(skel, None, Some((flip_x(point.0), flip_x(point.1))), None),
        CanonicalPose::PointUp => arms(skel, Some(([-0.3, 0.9, 0.3], [-0.05, 1.0, 0.1])), None, None),
        CanonicalPose::RaiseHands => arms(
            skel,
            Some(([-0.6, 0.7, 0.2], [-0.2, 1.0, 0.1])),
            Some(([0.6, 0.7, 0.2], [0.2, 1.0, 0.1])),
            None,
        ),
    }
}

/// Rest -> hold `peak` -> rest, `len` frames long.
fn stroke(skel: &SkeletonSpec, peak: &[PoseFrame], len: usize) -> MotionSequence {
    let rest = rest_pose(skel);
    let n = peak.len();
    let keys: Vec<(usize, PoseFrame)> = peak
        .iter()
        .enumerate()
        .map(|(k, p)| ((k + 1) * (len - 1) / (n + 1), *p))
        .collect();
    keyframe::interpolate_rigid(&keys, len, &rest, skel).expect("well-formed procedural keys")
}

/// Procedurally authored starter gestures.
pub fn starter_gestures(skel: &SkeletonSpec) -> Vec<UnitGesture> {
    use CanonicalPose::*;
    let g = |id: &str, name: &str, tags: &[&str], anchor: &str, motion: MotionSequence| UnitGesture {
        id: id.into(),
        name: name.into(),
        tags: tags.iter().map(|s| s.to_string()).collect(),
        anchor: anchor.into(),
        motion,
    };
    let c = |p| canonical_pose(p, skel);
    let right_beat_up = arms(skel, Some(([-0.25, -0.8, 0.5], [-0.1, 0.2, 1.0])), None, None);
    let right_beat_down = arms(skel, Some(([-0.25, -0.9, 0.35], [-0.1, -0.3, 1.0])), None, None);
    let palm = arms(
        skel,
        Some(([-0.45, -0.75, 0.5], [-0.5, 0.1, 1.0])),
        Some(([0.45, -0.75, 0.5], [0.5, 0.1, 1.0])),
        None,
    );
    let frame_pose = arms(
        skel,
        Some(([-0.35, -0.6, 0.7], [0.3, 0.6, 0.8])),
        Some(([0.35, -0.6, 0.7], [-0.3, 0.6, 0.8])),
        None,
    );
    let shrug = arms(
        skel,
        Some(([-0.5, -0.85, 0.2], [-0.6, 0.3, 0.8])),
        Some(([0.5, -0.85, 0.2], [0.6, 0.3, 0.8])),
        Some([0.0, 0.2, 1.0]),
    );
    let nod = arms(skel, None, None, Some([0.0, -0.5, 1.0]));
    let bow = {
        let mut d = skel.to_dirvec(&rest_pose(skel)).expect("rest pose is valid");
        d.dirs[0] = unit([0.0, 0.8, 0.6]);
        d.dirs[1] = unit([0.0, -0.3, 1.0]);
        skel.to_pose(&d)
    };
    let raise_right = arms(skel, Some(([-0.4, 0.85, 0.3], [-0.1, 1.0, 0.1])), None, None);
    let raise_left = raise_right.mirrored();
    vec![
        g("point_right", "Point right", &["deictic"], "stroke at the referent", stroke(skel, &[c(PointRight), c(PointRight)], 30)),
        g("point_left", "Point left", &["deictic"], "stroke at the referent", stroke(skel, &[c(PointLeft), c(PointLeft)], 30)),
        g("point_up", "Point up", &["deictic"], "stroke at the referent", stroke(skel, &[c(PointUp), c(PointUp)], 30)),
        g("raise_right_hand", "Raise right hand", &["emblem"], "on the greeting word", stroke(skel, &[raise_right], 24)),
        g("raise_left_hand", "Raise left hand", &["emblem"], "on the greeting word", stroke(skel, &[raise_left], 24)),
        g("raise_both_hands", "Raise both hands", &["emblem", "metaphoric"], "on the emphasized word", stroke(skel, &[c(RaiseHands), c(RaiseHands)], 30)),
        g("bow", "Bow", &["emblem"], "on the greeting word", stroke(skel, &[bow, bow], 36)),
        g("framing", "Framing", &["iconic", "metaphoric"], "around the framed concept", stroke(skel, &[frame_pose, frame_pose], 30)),
        g("beat", "Beat", &["beat"], "on stressed syllables", stroke(skel, &[right_beat_up, right_beat_down, right_beat_up, right_beat_down], 24)),
        g("open_palm", "Open palm", &["metaphoric"], "when offering an idea", stroke(skel, &[palm, palm], 24)),
        g("head_nod", "Head nod", &["emblem"], "on agreement", stroke(skel, &[nod, rest_pose(skel), nod], 18)),
        g("shrug", "Shrug", &["emblem", "metaphoric"], "on uncertainty", stroke(skel, &[shrug, shrug], 24)),
        g("rest", "Rest", &["rest"], "anywhere", MotionSequence::new(vec![rest_pose(skel); 15])),
    ]
}

/// Linear temporal resampling to `ceil(len / speed)` frames. The first and
/// last frames are kept exactly.
pub fn resample(seq: &MotionSequence, speed_level: u32) -> Result<MotionSequence> {
    if !(1..=3).contains(&speed_level) {
        return Err(Error::InvalidSpeedLevel(speed_level));
    }
    let len = seq.len();
    if len <= 1 || speed_level == 1 {
        return Ok(seq.clone());
    }
    let out_len = len.div_ceil(speed_level as usize).max(2);
    let scale = (len - 1) as f64 / (out_len - 1) as f64;
    let frames = (0..out_len)
        .map(|k| {
            if k == out_len - 1 {
                return seq.frames[len - 1];
            }
            let pos = k as f64 * scale;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 {
                return seq.frames[i];
            }
            let (a, b) = (&seq.frames[i], &seq.frames[i + 1]);
            let mut p = PoseFrame::zeros();
            for j in 0..p.coords.len() {
                for c in 0..3 {
                    p.coords[j][c] = a.coords[j][c] + frac * (b.coords[j][c] - a.coords[j][c]);
                }
            }
            p
        })
        .collect();
    Ok(MotionSequence::new(frames))
}

/// Thread-safe gesture store; imports replace the whole entry list at once.
pub struct MotionLibrary {
    entries: RwLock<Arc<Vec<UnitGesture>>>,
}

impl MotionLibrary {
    pub fn new(entries: Vec<UnitGesture>) -> Self {
        Self {
            entries: RwLock::new(Arc::new(entries)),
        }
    }

    pub fn starter(skel: &SkeletonSpec) -> Self {
        Self::new(starter_gestures(skel))
    }

    pub fn snapshot(&self) -> Arc<Vec<UnitGesture>> {
        self.entries.read().clone()
    }

    /// Metadata in library order; `tag` restricts to entries carrying it.
    pub fn list(&self, tag: Option<&str>) -> Vec<GestureMeta> {
        self.snapshot()
            .iter()
            .filter(|g| tag.is_none_or(|t| g.tags.iter().any(|x| x == t)))
            .map(UnitGesture::meta)
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<UnitGesture> {
        self.snapshot()
            .iter()
            .find(|g| g.id == id)
            .cloned()
            .ok_or_else(|| Error::UnknownGesture(id.to_string()))
    }

    pub fn instantiate(&self, id: &str, speed_level: u32, flip: bool) -> Result<MotionSequence> {
        let g = self.get(id)?;
        let seq = resample(&g.motion, speed_level)?;
        Ok(if flip { seq.mirrored() } else { seq })
    }

    /// Adds or replaces gestures listed in `dir/index.json`.
    pub fn import_dir(&self, dir: &Path) -> Result<usize> {
        let index: Vec<IndexEntry> =
            serde_json::from_slice(&std::fs::read(dir.join("index.json"))?)?;
        let mut loaded = Vec::with_capacity(index.len());
        for e in index {
            let motion: MotionSequence = serde_json::from_slice(&std::fs::read(dir.join(&e.file))?)?;
            if motion.is_empty() {
                return Err(Error::InvalidMotion(format!("gesture `{}` has no frames", e.id)));
            }
            loaded.push(UnitGesture {
                id: e.id,
                name: e.name,
                tags: e.tags,
                anchor: e.anchor,
                motion,
            });
        }
        let count = loaded.len();
        let mut guard = self.entries.write();
        let mut next: Vec<UnitGesture> = guard.as_ref().clone();
        for g in loaded {
            match next.iter_mut().find(|x| x.id == g.id) {
                Some(slot) => *slot = g,
                None => next.push(g),
            }
        }
        *guard = Arc::new(next);
        Ok(count)
    }

    /// Writes every gesture plus an `index.json` into `dir`.
    pub fn export_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index = Vec::new();
        for g in self.snapshot().iter() {
            let file = format!("{}.json", g.id);
            std::fs::write(dir.join(&file), serde_json::to_vec(&g.motion)?)?;
            index.push(IndexEntry {
                id: g.id.clone(),
                name: g.name.clone(),
                tags: g.tags.clone(),
                file,
                anchor: g.anchor.clone(),
            });
        }
        std::fs::write(dir.join("index.json"), serde_json::to_vec_pretty(&index)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stylestats::style_track;

    fn lib() -> MotionLibrary {
        MotionLibrary::starter(&SkeletonSpec::default())
    }

    #[test]
    fn listing_and_filters() {
        let lib = lib();
        let all = lib.list(None);
        assert!(all.len() >= 12);
        let deictic = lib.list(Some("deictic"));
        assert!(!deictic.is_empty() && deictic.len() < all.len());
        assert!(deictic.iter().all(|g| g.tags.contains(&"deictic".to_string())));
        assert!(lib.list(Some("no-such-tag")).is_empty());
    }

    #[test]
    fn speed_one_is_identity_and_flip_is_involution() {
        let lib = lib();
        let orig = lib.get("point_right").unwrap().motion;
        assert_eq!(lib.instantiate("point_right", 1, false).unwrap(), orig);
        let twice = lib.instantiate("point_right", 1, true).unwrap().mirrored();
        assert_eq!(twice, orig);
    }

    #[test]
    fn resampling_doubles_speed_and_keeps_endpoints() {
        let lib = lib();
        let orig = lib.get("raise_both_hands").unwrap().motion;
        assert_eq!(orig.len(), 30);
        let fast = lib.instantiate("raise_both_hands", 2, false).unwrap();
        assert_eq!(fast.len(), 15);
        assert_eq!(fast.frames[0], orig.frames[0]);
        assert_eq!(fast.frames[14], orig.frames[29]);
        // mean per-frame displacement, the quantity behind the speed statistic
        let mean_speed = |s: &MotionSequence| {
            let t = style_track(s, 2 * s.len()).unwrap();
            t[0].speed
        };
        let ratio = mean_speed(&fast) / mean_speed(&orig);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        assert_eq!(lib.instantiate("raise_both_hands", 3, false).unwrap().len(), 10);
    }

    #[test]
    fn errors() {
        let lib = lib();
        assert!(matches!(lib.instantiate("nope", 1, false), Err(Error::UnknownGesture(_))));
        assert!(matches!(
            lib.instantiate("beat", 4, false),
            Err(Error::InvalidSpeedLevel(4))
        ));
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = lib();
        src.export_dir(dir.path()).unwrap();
        let dst = MotionLibrary::new(vec![]);
        assert_eq!(dst.import_dir(dir.path()).unwrap(), src.list(None).len());
        assert_eq!(dst.list(None), src.list(None));
        assert_eq!(dst.get("shrug").unwrap(), src.get("shrug").unwrap());
    }
}
