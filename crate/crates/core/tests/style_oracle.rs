use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgt_core::skeleton::{joint, MotionSequence, PoseFrame, SkeletonSpec, NUM_JOINTS};
use sgt_core::stylestats::{style_track, StyleFrame, STYLE_WINDOW};

fn random_sequence(rng: &mut ChaCha8Rng, n: usize) -> MotionSequence {
    MotionSequence::new(
        (0..n)
            .map(|_| {
                let mut p = PoseFrame::zeros();
                for c in p.coords.iter_mut() {
                    *c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                }
                p
            })
            .collect(),
    )
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Straight from the definition: for each frame, walk the window and
/// recompute every displacement from scratch.
fn brute_force(seq: &MotionSequence, w: usize) -> Vec<StyleFrame> {
    let n = seq.len() as i64;
    let half = (w / 2) as i64;
    let f = &seq.frames;
    (0..n)
        .map(|i| {
            let (mut speed, mut left, mut right, mut count) = (0.0, 0.0, 0.0, 0.0);
            for j in (i - half)..=(i + half) {
                if j < 1 || j >= n {
                    continue;
                }
                let (a, b) = (&f[j as usize - 1], &f[j as usize]);
                let mut s = 0.0;
                for k in 0..NUM_JOINTS {
                    s += dist(b.coords[k], a.coords[k]);
                }
                speed += s / NUM_JOINTS as f64;
                left += dist(b.coords[joint::L_WRIST], a.coords[joint::L_WRIST]);
                right += dist(b.coords[joint::R_WRIST], a.coords[joint::R_WRIST]);
                count += 1.0;
            }
            let (mut space, mut scount) = (0.0, 0.0);
            for j in (i - half)..=(i + half) {
                if j < 0 || j >= n {
                    continue;
                }
                let p = &f[j as usize];
                space += dist(p.coords[joint::L_WRIST], p.coords[joint::R_WRIST]);
                scount += 1.0;
            }
            let (l, r) = (left / count, right / count);
            let hand = if l < 1e-6 && r < 1e-6 {
                0.0
            } else if r > l {
                l / r - 1.0
            } else {
                1.0 - r / l
            };
            StyleFrame {
                speed: speed / count,
                space: space / scount,
                handedness: hand,
            }
        })
        .collect()
}

#[test]
fn style_track_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let seqs: Vec<_> = (0..100).map(|_| random_sequence(&mut rng, 60)).collect();
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for seq in &seqs {
        let fast = style_track(seq, STYLE_WINDOW).unwrap();
        let slow = brute_force(seq, STYLE_WINDOW);
        for (a, b) in fast.iter().zip(&slow) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst}");
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn short_windows_match_too() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for w in [2, 3, 10, 90] {
        let seq = random_sequence(&mut rng, 25);
        let fast = style_track(&seq, w).unwrap();
        let slow = brute_force(&seq, w);
        for (a, b) in fast.iter().zip(&slow) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}

fn seq_strategy() -> impl Strategy<Value = MotionSequence> {
    (2usize..40, any::<u64>()).prop_map(|(n, seed)| random_sequence(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

proptest! {
    #[test]
    fn mirroring_negates_handedness_and_keeps_the_rest(seq in seq_strategy()) {
        let a = style_track(&seq, STYLE_WINDOW).unwrap();
        let b = style_track(&seq.mirrored(), STYLE_WINDOW).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.speed - y.speed).abs() < 1e-12);
            prop_assert!((x.space - y.space).abs() < 1e-12);
            prop_assert!((x.handedness + y.handedness).abs() < 1e-12);
        }
    }

    #[test]
    fn handedness_is_bounded(seq in seq_strategy()) {
        for f in style_track(&seq, STYLE_WINDOW).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&f.handedness));
            prop_assert!(f.speed >= 0.0 && f.space >= 0.0);
        }
    }

    #[test]
    fn scaling_positions_scales_speed_and_space(seq in seq_strategy(), k in 0.1f64..5.0) {
        let scaled = MotionSequence::new(
            seq.frames.iter().map(|p| PoseFrame::new(p.coords.map(|c| c.map(|v| v * k)))).collect(),
        );
        let a = style_track(&seq, STYLE_WINDOW).unwrap();
        let b = style_track(&scaled, STYLE_WINDOW).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.speed * k - y.speed).abs() < 1e-9);
            prop_assert!((x.space * k - y.space).abs() < 1e-9);
            prop_assert!((x.handedness - y.handedness).abs() < 1e-9);
        }
    }

    #[test]
    fn dirvec_round_trip_on_own_lengths(seq in seq_strategy()) {
        for p in &seq.frames {
            let skel = SkeletonSpec::from_poses([p]).unwrap();
            let d = skel.to_dirvec(p).unwrap();
            let back = skel.to_pose(&d);
            prop_assert!(back.max_abs_diff(&p.recentered()) < 1e-9);
            prop_assert!(d.mirrored().mirrored() == d);
        }
    }
}
