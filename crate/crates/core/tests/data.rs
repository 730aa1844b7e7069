use std::collections::BTreeMap;

use proptest::prelude::*;

use semfi_core::data::caption::{CaptionRequest, Captioner, ProceduralCaptioner};
use semfi_core::data::curate::{derive_thresholds, filter_candidates, percentile, threshold_filter};
use semfi_core::data::manifest::{check_manifest, read_jsonl, VideoRecord};
use semfi_core::data::scores::GrayscaleFeatures;
use semfi_core::data::synth::{Motion, ShapeKind, ShapeSpec, SynthConfig, SynthMeta, PALETTE};
use semfi_core::data::{
    clip_score, cut_start, flow_score, multi_scale_cut, read_manifest, run_all, DataConfig, FlowField, KnownFlow,
    PyramidFlow, ScoreThresholds, Split, ThresholdConfig, MANIFEST_FILE,
};
use semfi_core::mol::DEFAULT_SCALES;
use semfi_core::rng::SeedStream;
use semfi_core::{Frame, VideoClip};

fn ramp_video(f: usize) -> VideoClip {
    let frames: Vec<Frame> = (0..f)
        .map(|i| Frame::filled(2, 2, 1, i as f32 / f as f32))
        .collect();
    VideoClip::from_frames(&frames, 24, "").unwrap()
}

#[test]
fn candidate_filter_examples() {
    let vids = vec![(60u32, 100usize), (24, 81), (24, 400), (30, 324), (12, 80)];
    let kept = filter_candidates(vids, 81, |v| *v).unwrap();
    assert_eq!(kept, vec![(24, 81), (30, 324)]);
}

#[test]
fn clip_score_identities() {
    let f = ramp_video(3).frame(1);
    let g = ramp_video(3).frame(2);
    let ex = GrayscaleFeatures::default();
    assert!((clip_score(&f, &f, &ex).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(clip_score(&f, &g, &ex).unwrap(), clip_score(&g, &f, &ex).unwrap());
    let s = clip_score(&Frame::filled(16, 16, 3, 0.0), &Frame::filled(16, 16, 3, 1.0), &ex).unwrap();
    assert!((s + 1.0).abs() < 1e-12);
}

#[test]
fn known_translation_flow_score() {
    let a = Frame::filled(16, 16, 1, 0.2);
    for k in [1.0, 3.0] {
        let est = KnownFlow {
            field: FlowField::uniform(16, 16, k, 0.0),
        };
        assert_eq!(flow_score(&a, &a, &est).unwrap(), k);
        let doubled = KnownFlow {
            field: FlowField::uniform(16, 16, 2.0 * k, 0.0),
        };
        assert_eq!(flow_score(&a, &a, &doubled).unwrap(), 2.0 * k);
    }
}

#[test]
fn percentile_thresholds_match_sort_and_count() {
    let mut rng = SeedStream::new(3).rng();
    use rand::Rng;
    let scores: Vec<(f64, f64)> = (0..100).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..5.0))).collect();
    let t = derive_thresholds(&scores, ThresholdConfig::default()).unwrap();
    // Independent oracle: ranks 4.95 and 94.05 of the sorted values.
    let mut c: Vec<f64> = scores.iter().map(|s| s.0).collect();
    c.sort_by(f64::total_cmp);
    let lo = c[4] + 0.95 * (c[5] - c[4]);
    let hi = c[94] + 0.05 * (c[95] - c[94]);
    assert!((t.clip_low - lo).abs() < 1e-12 && (t.clip_high - hi).abs() < 1e-12);
    let on_clip = c.iter().filter(|&&v| v >= lo && v <= hi).count();
    assert_eq!(on_clip, 90);
    let kept = threshold_filter(scores.clone(), &t, |s| *s);
    let expected = scores.iter().filter(|s| t.keeps(s.0, s.1)).count();
    assert_eq!(kept.len(), expected);
    assert!((80..=90).contains(&kept.len()));
    assert_eq!(percentile(&c, 0.0).unwrap(), c[0]);
}

#[test]
fn score_above_clip_high_is_removed() {
    let t = ScoreThresholds {
        clip_high: 0.5,
        ..ScoreThresholds::unbounded()
    };
    assert!(threshold_filter(vec![(0.9, 1.0)], &t, |s| *s).is_empty());
}

#[test]
fn cut_examples() {
    let v = ramp_video(162);
    let cuts = multi_scale_cut(&v, &[5]).unwrap();
    assert_eq!(cuts[0].1, 79);
    assert_eq!(cuts[0].2, v.sub_clip(79, 5).unwrap());
    let v = ramp_video(81);
    let cuts = multi_scale_cut(&v, &DEFAULT_SCALES).unwrap();
    assert_eq!(cuts.len(), 6);
    assert_eq!(cuts[5].2, v);
    assert!(multi_scale_cut(&ramp_video(4), &DEFAULT_SCALES).unwrap().is_empty());
}

#[test]
fn procedural_caption_names_the_scene() {
    let meta = SynthMeta {
        shapes: vec![ShapeSpec {
            kind: ShapeKind::Circle,
            color: "red".into(),
            rgb: PALETTE[0].1,
            size: 4.0,
            start: (8.0, 16.0),
            motion: Motion::Linear { dx: 10.0, dy: 1.0 },
        }],
    };
    let clip = ramp_video(3);
    let req = CaptionRequest {
        clip: &clip,
        meta: Some(&meta),
    };
    let c = ProceduralCaptioner.caption(&req).unwrap();
    for w in ["red", "circle", "right"] {
        assert!(c.contains(w), "{c}");
    }
    assert_eq!(c, ProceduralCaptioner.caption(&req).unwrap());
}

fn small_data() -> DataConfig {
    DataConfig {
        synth: SynthConfig {
            num_videos: 14,
            height: 16,
            width: 16,
            min_frames: 60,
            max_frames: 120,
            ..SynthConfig::default()
        },
        test_videos: 3,
        ..DataConfig::default()
    }
}

#[test]
fn pipeline_is_consistent_and_reproducible() {
    let cfg = small_data();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_all(&cfg, SeedStream::new(9), a.path()).unwrap();
    run_all(&cfg, SeedStream::new(9), b.path()).unwrap();
    let ma = std::fs::read(a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ma, std::fs::read(b.path().join(MANIFEST_FILE)).unwrap());
    assert_eq!(sa[0].outputs, 14);

    let recs = read_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
    check_manifest(&recs, a.path()).unwrap();
    let retained: Vec<VideoRecord> = read_jsonl(&a.path().join("retained.jsonl")).unwrap();
    let expected: usize = retained
        .iter()
        .map(|v| DEFAULT_SCALES.iter().filter(|&&s| s <= v.n).count())
        .sum();
    assert_eq!(recs.len(), expected);
    for v in &retained {
        assert!(v.fps <= 30 && v.n >= 81 && v.n <= 324);
    }
    let mut per_video: BTreeMap<&str, Split> = BTreeMap::new();
    for r in &recs {
        assert_eq!(r.n, r.scale_s);
        assert!(!r.caption.is_empty());
        assert_eq!(*per_video.entry(&r.source_video_id).or_insert(r.split), r.split);
        let clip = r.load(a.path()).unwrap();
        assert_eq!(clip.n_frames, r.scale_s);
    }
    let tests = per_video.values().filter(|s| **s == Split::Test).count();
    assert_eq!(tests, 3.min(retained.len()));
    let sorted = recs.windows(2).all(|w| w[0].clip_id < w[1].clip_id);
    assert!(sorted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tightening_thresholds_never_adds(
        scores in proptest::collection::vec((-1.0f64..1.0, 0.0f64..10.0), 1..60),
        lo in -1.0f64..0.0, hi in 0.0f64..1.0, shrink in 0.0f64..0.5,
    ) {
        let wide = ScoreThresholds { clip_low: lo, clip_high: hi, ..ScoreThresholds::unbounded() };
        let tight = ScoreThresholds { clip_low: lo + shrink * (hi - lo) / 2.0, clip_high: hi - shrink * (hi - lo) / 2.0, ..wide };
        let a = threshold_filter(scores.clone(), &wide, |s| *s);
        let b = threshold_filter(scores, &tight, |s| *s);
        prop_assert!(b.iter().all(|x| a.contains(x)));
    }

    #[test]
    fn cut_invariants(f in 81usize..=324) {
        let v = ramp_video(f);
        let cuts = multi_scale_cut(&v, &DEFAULT_SCALES).unwrap();
        prop_assert_eq!(cuts.len(), 6);
        for (s, start, c) in cuts {
            prop_assert_eq!(start, cut_start(f, s).unwrap());
            prop_assert_eq!(c.n_frames, s);
            prop_assert_eq!(c.first(), v.frame(start));
            prop_assert_eq!(c.last(), v.frame(start + s - 1));
            let centre = start as f64 + (s as f64 - 1.0) / 2.0;
            prop_assert!((centre - (f as f64 - 1.0) / 2.0).abs() <= 1.0);
        }
    }

    #[test]
    fn flow_is_non_negative_and_zero_at_identity(seed in 0u64..1000) {
        use rand::Rng;
        let mut rng = SeedStream::new(seed).rng();
        let a = Frame::new(16, 16, 1, (0..256).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap();
        let b = Frame::new(16, 16, 1, (0..256).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap();
        let est = PyramidFlow::default();
        prop_assert_eq!(flow_score(&a, &a, &est).unwrap(), 0.0);
        prop_assert!(flow_score(&a, &b, &est).unwrap() >= 0.0);
        let known = KnownFlow { field: FlowField::zeros(16, 16) };
        prop_assert_eq!(flow_score(&a, &a, &known).unwrap(), 0.0);
    }
}
