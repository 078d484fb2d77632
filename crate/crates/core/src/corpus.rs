//! Speech/motion clip datasets: a directory loader, a deterministic
//! synthetic corpus, train/val/test splitting and windowing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::motionlib::{canonical_pose, CanonicalPose};
use crate::skeleton::{rest_pose, unit, DirVecFrame, MotionSequence, SkeletonSpec, Vec3, FPS};
use crate::speech::{
    align_words, extract_audio_features, push_beep, word_voice, AudioFeatureConfig, Dictionary,
    SpeechContext, SpeechWindow, Waveform, WordTiming, DEFAULT_SAMPLE_RATE,
};

pub const CLIPS_FILE: &str = "clips.jsonl";

/// One aligned speech/motion recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub id: String,
    pub text: String,
    pub timings: Vec<WordTiming>,
    pub sample_rate: u32,
    pub audio_features: Vec<Vec<f64>>,
    pub motion: MotionSequence,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.is_empty()
    }

    pub fn speech(&self, dict: &Dictionary) -> SpeechContext {
        SpeechContext {
            audio_features: self.audio_features.clone(),
            word_indices: align_words(&self.timings, dict, self.audio_features.len()),
            sample_rate: self.sample_rate,
            text: self.text.clone(),
            timings: self.timings.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Reads `dir/clips.jsonl`, one clip per line.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let file = File::open(dir.join(CLIPS_FILE))?;
        let mut clips = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let clip: Clip = serde_json::from_str(&line)?;
            if clip.audio_features.len() != clip.motion.len() {
                return Err(Error::LengthMismatch {
                    expected: clip.motion.len(),
                    actual: clip.audio_features.len(),
                });
            }
            clips.push(clip);
        }
        Ok(Self { clips })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(CLIPS_FILE))?);
        for c in &self.clips {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Seeded 80/10/10 split by clip.
    pub fn split(&self, seed: u64) -> Result<DatasetSplit> {
        if self.clips.len() < 3 {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..self.clips.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = order.len();
        let n_val = (n / 10).max(1);
        let n_test = (n / 10).max(1);
        let n_train = n - n_val - n_test;
        let pick = |idx: &[usize]| Dataset {
            clips: idx.iter().map(|&i| self.clips[i].clone()).collect(),
        };
        Ok(DatasetSplit {
            train: pick(&order[..n_train]),
            val: pick(&order[n_train..n_train + n_val]),
            test: pick(&order[n_train + n_val..]),
        })
    }

    /// SHA-256 over the sorted clip ids.
    pub fn fingerprint(&self) -> String {
        let mut ids: Vec<&str> = self.clips.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        let mut h = Sha256::new();
        for id in ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFingerprints {
    pub train: String,
    pub val: String,
    pub test: String,
}

impl DatasetSplit {
    pub fn fingerprints(&self) -> SplitFingerprints {
        SplitFingerprints {
            train: self.train.fingerprint(),
            val: self.val.fingerprint(),
            test: self.test.fingerprint(),
        }
    }

    /// Fails when any clip id appears in more than one part.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in self.train.clips.iter().chain(&self.val.clips).chain(&self.test.clips) {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::InvalidMotion(format!("clip `{}` appears in two splits", c.id)));
            }
        }
        Ok(())
    }
}

/// A fixed-length training/evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionWindow {
    pub clip: String,
    pub start: usize,
    pub speech: SpeechWindow,
    pub reference: Vec<DirVecFrame>,
}

/// Every `len`-frame window at the given stride, dir-vecs taken on `skel`.
pub fn windows(
    dataset: &Dataset,
    dict: &Dictionary,
    skel: &SkeletonSpec,
    len: usize,
    stride: usize,
) -> Result<Vec<MotionWindow>> {
    let mut out = Vec::new();
    for clip in &dataset.clips {
        if clip.len() < len {
            continue;
        }
        let speech = clip.speech(dict);
        let dirs = skel.sequence_to_dirvecs(&clip.motion)?;
        let mut start = 0;
        while start + len <= clip.len() {
            out.push(MotionWindow {
                clip: clip.id.clone(),
                start,
                speech: speech.window(start, len),
                reference: dirs[start..start + len].to_vec(),
            });
            start += stride;
        }
    }
    Ok(out)
}

const FILLER_WORDS: [&str; 48] = [
    "the", "a", "and", "so", "we", "you", "it", "is", "was", "this", "that", "think", "really",
    "people", "know", "what", "about", "very", "because", "world", "idea", "going", "time", "make",
    "there", "thing", "little", "big", "story", "work", "just", "like", "when", "all", "new", "can",
    "see", "life", "change", "talk", "year", "maybe", "first", "today", "problem", "important",
    "actually", "together",
];

/// Words that trigger a canonical pose in the synthetic corpus.
pub const TRIGGER_WORDS: [(&str, CanonicalPose); 4] = [
    ("right", CanonicalPose::PointRight),
    ("left", CanonicalPose::PointLeft),
    ("up", CanonicalPose::PointUp),
    ("everyone", CanonicalPose::RaiseHands),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// Probability that a clip contains one trigger word.
    pub trigger_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            clip_seconds: 4.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            trigger_probability: 0.5,
        }
    }
}

/// Per-clip gesturing style. Arousal shows in the speech (faster, louder
/// words) and drives tempo, amplitude and spread; hand dominance is not
/// audible at all.
#[derive(Clone, Copy, Debug)]
struct ClipStyle {
    tempo: f64,
    amplitude: f64,
    spread: f64,
    dominance: f64,
}

/// One gesture stroke: a raised-cosine bump of length `span` starting at 0.
fn stroke(x: f64, span: f64) -> f64 {
    if x <= 0.0 || x >= span {
        0.0
    } else {
        (std::f64::consts::PI * x / span).sin().powi(2)
    }
}

fn smooth_step(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn lerp_dirs(a: &DirVecFrame, b: &DirVecFrame, w: f64) -> DirVecFrame {
    let mut out = *a;
    for (o, (x, y)) in out.dirs.iter_mut().zip(a.dirs.iter().zip(&b.dirs)) {
        *o = [
            x[0] + w * (y[0] - x[0]),
            x[1] + w * (y[1] - x[1]),
            x[2] + w * (y[2] - x[2]),
        ];
    }
    out.normalized()
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Deterministic corpus in which motion is a known function of the speech
/// plus a hidden per-clip style: wrist oscillation amplitude follows audio
/// loudness, trigger words produce canonical poses, and tempo, hand spread
/// and hand dominance vary from clip to clip.
pub fn make_synthetic_corpus(n_clips: usize, seed: u64) -> Result<Dataset> {
    make_synthetic_corpus_with(n_clips, seed, &SyntheticConfig::default())
}

pub fn make_synthetic_corpus_with(n_clips: usize, seed: u64, cfg: &SyntheticConfig) -> Result<Dataset> {
    if n_clips < 10 {
        return Err(Error::InvalidMotion(format!(
            "synthetic corpus needs at least 10 clips, got {n_clips}"
        )));
    }
    let skel = SkeletonSpec::default();
    let clips = (0..n_clips)
        .map(|k| synthetic_clip(k, seed, cfg, &skel))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { clips })
}

fn synthetic_clip(index: usize, seed: u64, cfg: &SyntheticConfig, skel: &SkeletonSpec) -> Result<Clip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    let sr = cfg.sample_rate;
    let total = (cfg.clip_seconds * sr as f64).round() as usize;
    let n_frames = (cfg.clip_seconds * FPS as f64).round() as usize;

    let arousal: f64 = rng.random_range(0.0..1.0);
    let style = ClipStyle {
        tempo: (0.8 + 1.6 * arousal) * rng.random_range(0.85..1.15),
        amplitude: (0.6 + 0.8 * arousal) * rng.random_range(0.9..1.1),
        spread: -0.2 + 0.6 * arousal + rng.random_range(-0.1..0.1),
        dominance: rng.random_range(-1.0..1.0),
    };

    // words, pauses and loudness
    let trigger = rng
        .random_bool(cfg.trigger_probability)
        .then(|| TRIGGER_WORDS[rng.random_range(0..TRIGGER_WORDS.len())]);
    let word_scale = 1.2 - 0.5 * arousal;
    let mut words: Vec<(String, f64, f64, f64)> = Vec::new();
    let mut t = rng.random_range(0.0..0.2);
    while t < cfg.clip_seconds - 0.2 {
        if rng.random_bool(0.15) {
            t += rng.random_range(0.1..0.3);
        }
        let dur = rng.random_range(0.25..0.5) * word_scale;
        let word = FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())].to_string();
        let loud = rng.random_range(0.2..0.6) + 0.4 * arousal;
        words.push((word, t, (t + dur).min(cfg.clip_seconds), loud));
        t += dur;
    }
    if let Some((w, _)) = trigger {
        // replace one word away from the clip edges
        let candidates: Vec<usize> = (0..words.len())
            .filter(|&i| words[i].1 > 0.6 && words[i].2 < cfg.clip_seconds - 0.6)
            .collect();
        if let Some(&i) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
            words[i].0 = w.to_string();
        }
    }

    let mut samples = Vec::with_capacity(total);
    for (word, start, end, loud) in &words {
        let at = (start * sr as f64).round() as usize;
        samples.resize(at.max(samples.len()), 0.0);
        let (pitch, _) = word_voice(word);
        push_beep(&mut samples, sr, end - start, pitch, *loud);
    }
    samples.resize(total, 0.0);
    let wave = Waveform {
        samples,
        sample_rate: sr,
    };
    let audio_features = extract_audio_features(&wave, &AudioFeatureConfig::default())?;

    let rest = skel.to_dirvec(&rest_pose(skel))?;
    let span = 1.0 / style.tempo;
    let right_gain = (1.0 - style.dominance).min(1.0);
    let left_gain = (1.0 + style.dominance).min(1.0);
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let time = i as f64 / FPS as f64;
        // every word starts a stroke, scaled by its loudness; consecutive
        // strokes alternate sideways
        let (mut lift, mut swing) = (0.0, 0.0);
        for (k, w) in words.iter().enumerate() {
            let b = w.3 * stroke(time - w.1, span);
            lift += b;
            swing += if k % 2 == 0 { b } else { -b };
        }
        let (lift, swing) = (style.amplitude * lift.min(1.5), style.amplitude * swing);

        let mut d = rest;
        d.dirs[0] = unit([0.04 * swing, 1.0, 0.0]);
        d.dirs[1] = unit([0.0, 0.3 + 0.2 * lift, 1.0]);
        for (side, gain) in [(-1.0, right_gain), (1.0, left_gain)] {
            let (l, s) = (gain * lift, gain * swing);
            let upper = add(
                [side * (0.15 + style.spread), -1.0, 0.1],
                [side * 0.25 * s, 0.6 * l, 0.5 * l],
            );
            let fore = add(
                [side * (0.05 + 0.8 * style.spread), -0.6, 0.8],
                [side * 0.4 * s, 1.2 * l, 0.2 * l],
            );
            let (ui, fi) = if side < 0.0 { (4, 5) } else { (7, 8) };
            d.dirs[ui] = unit(upper);
            d.dirs[fi] = unit(fore);
        }
        if let Some((word, pose)) = trigger {
            if let Some(w) = words.iter().find(|w| w.0 == word) {
                let ramp = 0.25;
                let weight = if time < w.1 {
                    smooth_step(1.0 - (w.1 - time) / ramp)
                } else if time < w.2 {
                    1.0
                } else {
                    smooth_step(1.0 - (time - w.2) / ramp)
                };
                if weight > 0.0 {
                    let target = skel.to_dirvec(&canonical_pose(pose, skel))?;
                    d = lerp_dirs(&d, &target, weight);
                }
            }
        }
        frames.push(skel.to_pose(&d));
    }

    let timings = words
        .iter()
        .map(|(word, start, end, _)| WordTiming {
            word: word.clone(),
            start: *start,
            end: *end,
        })
        .collect::<Vec<_>>();
    let text = words.iter().map(|w| w.0.as_str()).collect::<Vec<_>>().join(" ");
    Ok(Clip {
        id: format!("synthetic-{seed}-{index:05}"),
        text,
        timings,
        sample_rate: sr,
        audio_features,
        motion: MotionSequence::new(frames),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic() {
        let a = make_synthetic_corpus(10, 4).unwrap();
        let b = make_synthetic_corpus(10, 4).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic_corpus(10, 5).unwrap();
        assert_ne!(a.clips[0].motion, c.clips[0].motion);
        assert!(make_synthetic_corpus(9, 4).is_err());
    }

    #[test]
    fn clips_are_aligned() {
        let ds = make_synthetic_corpus(10, 1).unwrap();
        for c in &ds.clips {
            assert_eq!(c.len(), 60);
            assert_eq!(c.audio_features.len(), 60);
            assert!(!c.timings.is_empty());
        }
    }

    #[test]
    fn trigger_words_reach_their_pose() {
        let skel = SkeletonSpec::default();
        let ds = make_synthetic_corpus(40, 6).unwrap();
        let mut seen = 0;
        for (word, pose) in TRIGGER_WORDS {
            let target = canonical_pose(pose, &skel);
            for c in ds.clips.iter().filter(|c| c.timings.iter().any(|t| t.word == word)) {
                let best = c.motion.frames.iter().map(|f| f.max_abs_diff(&target)).fold(f64::INFINITY, f64::min);
                assert!(best < 0.1, "{word}: {best}");
                seen += 1;
            }
        }
        assert!(seen > 5);
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let ds = make_synthetic_corpus(20, 2).unwrap();
        let split = ds.split(0).unwrap();
        assert_eq!(split.train.len(), 16);
        assert_eq!(split.val.len(), 2);
        assert_eq!(split.test.len(), 2);
        split.check_disjoint().unwrap();
        let f = split.fingerprints();
        assert_ne!(f.train, f.test);
        assert_eq!(split.fingerprints(), ds.split(0).unwrap().fingerprints());
    }

    #[test]
    fn save_and_load() {
        let ds = make_synthetic_corpus(10, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save_dir(dir.path()).unwrap();
        assert_eq!(Dataset::load_dir(dir.path()).unwrap(), ds);
    }
}
