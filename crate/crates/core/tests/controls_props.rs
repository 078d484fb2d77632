use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgt_core::controls::{simulate_controls, ControlDropout, ControlsJson, PoseControlTrack, StyleControlTrack};
use sgt_core::skeleton::{DirVecFrame, SkeletonSpec, NUM_BONES};
use sgt_core::stylestats::StyleFrame;

fn random_dirs(rng: &mut ChaCha8Rng, t: usize) -> Vec<DirVecFrame> {
    (0..t)
        .map(|_| {
            DirVecFrame {
                dirs: std::array::from_fn(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0]),
            }
            .normalized()
        })
        .collect()
}

fn random_style(rng: &mut ChaCha8Rng, t: usize) -> Vec<StyleFrame> {
    (0..t)
        .map(|_| StyleFrame::from_array(std::array::from_fn(|_| rng.random_range(-4.0..4.0))))
        .collect()
}

/// Slice lengths of the simulated pose control are uniform on 1..=t.
#[test]
fn pose_slice_length_is_uniform() {
    let t = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dirs = random_dirs(&mut rng, t);
    let style = random_style(&mut rng, t);
    let only_pose = ControlDropout {
        drop_all: 0.0,
        drop_pose: 0.0,
        drop_style: 1.0,
        drop_style_element: 0.5,
    };
    let draws = 30_000;
    let mut counts = vec![0usize; t + 1];
    for _ in 0..draws {
        let (p, _) = simulate_controls(&dirs, &style, &only_pose, &mut rng);
        counts[p.mask().iter().filter(|&&m| m).count()] += 1;
    }
    assert_eq!(counts[0], 0);
    let expected = draws as f64 / t as f64;
    let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-squared with 29 degrees of freedom
    assert!(chi2 < 49.588, "chi2 = {chi2}");
}

#[test]
fn dropout_rates_are_respected() {
    let t = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let dirs = random_dirs(&mut rng, t);
    let style = random_style(&mut rng, t);
    let draws = 20_000;
    let (mut no_pose, mut no_style, mut none) = (0, 0, 0);
    for _ in 0..draws {
        let (p, s) = simulate_controls(&dirs, &style, &ControlDropout::default(), &mut rng);
        no_pose += usize::from(!p.any_masked());
        no_style += usize::from(!s.any_masked());
        none += usize::from(!p.any_masked() && !s.any_masked());
    }
    let rate = |c: usize| c as f64 / draws as f64;
    // P(no pose) = 0.3 + 0.7 * 0.3, P(neither) = 0.3 + 0.7 * 0.09
    assert!((rate(no_pose) - 0.51).abs() < 0.02);
    assert!((rate(no_style) - 0.51).abs() < 0.02);
    assert!((rate(none) - 0.363).abs() < 0.02);
}

proptest! {
    #[test]
    fn simulated_controls_agree_with_reference(seed in any::<u64>(), t in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = random_dirs(&mut rng, t);
        let style = random_style(&mut rng, t);
        let (p, s) = simulate_controls(&dirs, &style, &ControlDropout::default(), &mut rng);
        prop_assert_eq!(p.len(), t);
        prop_assert_eq!(s.len(), t);
        for i in 0..t {
            if let Some(f) = p.get(i) {
                prop_assert_eq!(*f, dirs[i]);
            } else {
                prop_assert_eq!(p.rows()[i], DirVecFrame::zeros());
            }
            for e in 0..3 {
                let v = s.values()[i][e];
                if s.masks()[i][e] {
                    prop_assert_eq!(v, style[i].to_array()[e].clamp(-3.0, 3.0));
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn controls_json_round_trip(seed in any::<u64>(), t in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = random_dirs(&mut rng, t);
        let mut pose = PoseControlTrack::empty(t);
        let mut style = StyleControlTrack::empty(t);
        for (i, d) in dirs.iter().enumerate() {
            if rng.random_bool(0.3) {
                pose.set_frame(i, *d).unwrap();
            }
            for e in 0..3 {
                if rng.random_bool(0.3) {
                    style.set(i, e, rng.random_range(-3.0..=3.0)).unwrap();
                }
            }
        }
        let json = ControlsJson::from_tracks(&pose, &style);
        let text = serde_json::to_string(&json).unwrap();
        let back: ControlsJson = serde_json::from_str(&text).unwrap();
        let (p2, s2) = back.to_tracks(t, &SkeletonSpec::default()).unwrap();
        prop_assert_eq!(p2, pose);
        prop_assert_eq!(s2, style);
    }
}

#[test]
fn unknown_fields_and_bad_rows_are_rejected() {
    let skel = SkeletonSpec::default();
    assert!(serde_json::from_str::<ControlsJson>(r#"{"pose":[]}"#).is_err());
    let bad_row: ControlsJson =
        serde_json::from_str(r#"{"pose_controls":[{"start":0,"frames":[[[0,1,0]]]}]}"#).unwrap();
    assert!(bad_row.to_tracks(10, &skel).is_err());
    let out_of_range: ControlsJson = serde_json::from_str(&format!(
        r#"{{"pose_controls":[{{"start":9,"frames":[{0},{0}]}}]}}"#,
        serde_json::to_string(&[[0.0, 1.0, 0.0]; NUM_BONES]).unwrap()
    ))
    .unwrap();
    assert!(out_of_range.to_tracks(10, &skel).is_err());
    let too_large: ControlsJson =
        serde_json::from_str(r#"{"style_controls":[{"start":0,"end":5,"speed":3.5}]}"#).unwrap();
    assert!(too_large.to_tracks(10, &skel).is_err());
}
