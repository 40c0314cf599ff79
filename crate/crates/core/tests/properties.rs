use proptest::prelude::*;

use vapipe_core::corpus::{AnnotationTrack, Target, TimeUnit};
use vapipe_core::dsp::{detect_peaks, iir_filter, moving_average, savgol_smooth, zscore, FilterSpec, Signal};
use vapipe_core::eval::rmse;
use vapipe_core::learners::{fit_greedy_weighted_ensemble, train_base, LearnerSpec, ModelKind};
use vapipe_core::pipeline::{late_fuse_mean, postprocess_track};
use vapipe_core::scenarios::quadrant_meta_analysis;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

fn ratings(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..9.5, n)
}

fn track(v: f64, a: f64, n: usize) -> AnnotationTrack {
    AnnotationTrack {
        timestamps: (0..n).map(|k| k as f64 * 0.05).collect(),
        valence: vec![v; n],
        arousal: vec![a; n],
        time_unit: TimeUnit::Seconds,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_linear_in_scale(x in series(200..400), k in -4.0f64..4.0) {
        let spec = FilterSpec::bandpass(1.0, 8.0, 2);
        let a = iir_filter(&Signal::new(x.clone(), 50.0).unwrap(), &spec).unwrap();
        let b = iir_filter(&Signal::new(x.iter().map(|v| k * v).collect(), 50.0).unwrap(), &spec).unwrap();
        prop_assert_eq!(a.len(), x.len());
        let tol = 1e-8 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * k.abs());
        for (p, q) in a.samples().iter().zip(b.samples()) {
            prop_assert!((k * p - q).abs() <= tol);
        }
    }

    #[test]
    fn savgol_keeps_length(x in series(60..200), len_s in 0.1f64..0.5) {
        let s = savgol_smooth(&Signal::new(x.clone(), 100.0).unwrap(), 3, len_s).unwrap();
        prop_assert_eq!(s.len(), x.len());
    }

    #[test]
    fn moving_average_stays_in_range(x in series(1..200), n in 1usize..30) {
        let y = moving_average(&x, n);
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(y.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
    }

    #[test]
    fn zscore_is_idempotent(x in series(2..200)) {
        let once = zscore(&Signal::new(x, 10.0).unwrap());
        let twice = zscore(&once);
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn peaks_are_ordered_and_spaced(x in series(10..400), dist in 0.01f64..0.5) {
        let fs = 100.0;
        let peaks = detect_peaks(&Signal::new(x.clone(), fs).unwrap(), dist, 0.05);
        let gap = (dist * fs).ceil() as usize;
        for w in peaks.windows(2) {
            prop_assert!(w[0] < w[1]);
            prop_assert!(w[1] - w[0] >= gap.max(1));
        }
        for &p in &peaks {
            prop_assert!(p > 0 && p + 1 < x.len());
            prop_assert!(x[p] >= x[p - 1] && x[p] >= x[p + 1]);
        }
    }

    #[test]
    fn rmse_is_symmetric_and_shift_invariant(
        (a, b) in (1usize..100).prop_flat_map(|n| (ratings(n), ratings(n))),
        c in -5.0f64..5.0,
    ) {
        let ab = rmse(&a, &b).unwrap();
        prop_assert!((ab - rmse(&b, &a).unwrap()).abs() < 1e-12);
        let sa: Vec<f64> = a.iter().map(|v| v + c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v + c).collect();
        prop_assert!((ab - rmse(&sa, &sb).unwrap()).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn late_fusion_is_bounded(preds in (1usize..50).prop_flat_map(|n| prop::collection::vec(ratings(n), 1..6))) {
        let fused = late_fuse_mean(&preds).unwrap();
        for (i, f) in fused.iter().enumerate() {
            let lo = preds.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = preds.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*f >= lo && *f <= hi);
        }
        if preds.len() == 1 {
            prop_assert_eq!(&fused, &preds[0]);
        }
    }

    #[test]
    fn postprocessed_tracks_stay_on_scale(x in series(1..200), n in 1usize..20) {
        let y = postprocess_track(&x, n);
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(y.iter().all(|v| (0.5..=9.5).contains(v)));
    }

    #[test]
    fn meta_analysis_ignores_order_and_duplication(
        centres in prop::collection::vec((0.5f64..9.5, 0.5f64..9.5), 4..9),
        rotate in 0usize..8,
    ) {
        let n = centres.len();
        let groups: Vec<Vec<u32>> = (0..4).map(|g| ((g as u32)..n as u32).step_by(4).collect()).collect();
        let tracks: Vec<(u32, AnnotationTrack)> =
            centres.iter().enumerate().map(|(v, &(a, b))| (v as u32, track(a, b, 10))).collect();
        let refs: Vec<(u32, &AnnotationTrack)> = tracks.iter().map(|(v, t)| (*v, t)).collect();
        let base = quadrant_meta_analysis(&refs, Some(&groups)).unwrap();

        let mut shuffled = refs.clone();
        shuffled.rotate_left(rotate % n);
        shuffled.reverse();
        let doubled: Vec<(u32, &AnnotationTrack)> = refs.iter().chain(refs.iter()).copied().collect();
        for other in [shuffled, doubled] {
            let m = quadrant_meta_analysis(&other, Some(&groups)).unwrap();
            prop_assert_eq!(&m.quadrants, &base.quadrants);
        }
        // a bijection: four distinct quadrants, one per group
        let per_group: Vec<_> = groups.iter().map(|g| base.quadrant(g[0]).unwrap()).collect();
        for (i, q) in per_group.iter().enumerate() {
            prop_assert!(groups[i].iter().all(|v| base.quadrant(*v) == Some(*q)));
            prop_assert!(per_group[..i].iter().all(|p| p != q));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensemble_is_convex_and_no_worse_than_best(
        (y, noise) in (10usize..60).prop_flat_map(|n| (ratings(n), prop::collection::vec(ratings(n), 1..5))),
    ) {
        let x: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![i as f64]).collect();
        let members: Vec<_> = noise
            .iter()
            .map(|t| train_base(&LearnerSpec::new(ModelKind::KnnUniform).with("k", 1.0), &x, t, Target::Arousal, 0).unwrap())
            .collect();
        let outputs: Vec<Vec<f64>> = members.iter().map(|m| m.predict(&x).unwrap()).collect();
        let best = outputs.iter().map(|p| rmse(p, &y).unwrap()).fold(f64::INFINITY, f64::min);
        let e = fit_greedy_weighted_ensemble(members, &x, &y, 20).unwrap();
        let pred = e.predict(&x).unwrap();
        prop_assert!(rmse(&pred, &y).unwrap() <= best);
        prop_assert!((e.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (i, p) in pred.iter().enumerate() {
            let lo = outputs.iter().map(|o| o[i]).fold(f64::INFINITY, f64::min);
            let hi = outputs.iter().map(|o| o[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*p >= lo - 1e-9 && *p <= hi + 1e-9);
        }
    }
}

#[test]
fn duplicate_members_share_weight() {
    let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..30).map(|i| 5.0 + (i as f64 * 0.4).sin()).collect();
    let noisy: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
    let spec = LearnerSpec::new(ModelKind::KnnUniform).with("k", 1.0);
    let fit = |targets: &[Vec<f64>]| {
        let members = targets.iter().map(|t| train_base(&spec, &x, t, Target::Valence, 0).unwrap()).collect();
        fit_greedy_weighted_ensemble(members, &x, &y, 10).unwrap()
    };
    let single = fit(&[noisy.clone()]);
    let twice = fit(&[noisy.clone(), noisy]);
    let a = single.predict(&x).unwrap();
    let b = twice.predict(&x).unwrap();
    assert!((twice.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(a, b);
}
