use std::path::{Path, PathBuf};

use semfi_core::data::clipfile::{read_clip, write_clip, ClipDtype};
use semfi_core::data::manifest::{read_manifest, write_manifest};
use semfi_core::data::MANIFEST_FILE;
use semfi_core::harness::commands::{test_records, PER_CLIP_CSV, REPORT_CSV};
use semfi_core::harness::record::RUN_RECORD_FILE;
use semfi_core::harness::{
    ablation_variants, cmd_bench, cmd_data, cmd_report, cmd_sample, cmd_train, smoothed, BenchSource, ExperimentConfig,
    SampleArgs, TrainMode,
};
use semfi_core::model::PredictionTarget;
use semfi_core::SemfiError;

struct Trained {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: ExperimentConfig,
}

impl Trained {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    fn ckpt(&self) -> PathBuf {
        self.root.join("train").join("checkpoint.semfi")
    }
}

fn trained_tiny() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let cfg = ExperimentConfig::tiny();
    cmd_data(&cfg, None, &root.join("data")).unwrap();
    cmd_train(&cfg, &root.join("data"), &root.join("train")).unwrap();
    Trained { _dir: dir, root, cfg }
}

fn endpoint_images(t: &Trained) -> (PathBuf, PathBuf) {
    let records = read_manifest(&t.data().join(MANIFEST_FILE)).unwrap();
    let clip = records[0].load(&t.data()).unwrap();
    let (first, last) = (t.root.join("first.png"), t.root.join("last.png"));
    clip.first().to_rgb_image().save(&first).unwrap();
    clip.last().to_rgb_image().save(&last).unwrap();
    (first, last)
}

fn sample_args(t: &Trained, frames: usize, out: &Path) -> SampleArgs {
    let (first, last) = endpoint_images(t);
    SampleArgs {
        checkpoint: t.ckpt(),
        first,
        last,
        text: "a red circle moves left".into(),
        frames,
        steps: 4,
        seed: 3,
        clamp_endpoints: true,
        fps: 24,
        out: out.to_path_buf(),
    }
}

#[test]
fn default_and_tiny_configs_validate() {
    let d = ExperimentConfig::default();
    d.validate().unwrap();
    assert_eq!(d.model.prediction_target, PredictionTarget::Velocity);
    assert_eq!((d.model.height, d.model.width), (32, 32));
    assert_eq!((d.train.batch_size, d.train.lr), (8, 1e-4));
    assert_eq!(d.train.mode, TrainMode::Staged);
    ExperimentConfig::tiny().validate().unwrap();
}

#[test]
fn config_round_trips_and_hash_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let cfg = ExperimentConfig::tiny();
    cfg.save(&p).unwrap();
    let back = ExperimentConfig::load(&p).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_ne!(ExperimentConfig::default().hash(), cfg.hash());
}

#[test]
fn bad_configs_are_config_errors() {
    let mut v = serde_json::to_value(ExperimentConfig::tiny()).unwrap();
    v.as_object_mut().unwrap().remove("schema_version");
    let e = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
    assert!(e.is_config(), "{e}");

    v["schema_version"] = 99.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).unwrap_err().is_config());
    assert!(ExperimentConfig::from_json("{ not json").unwrap_err().is_config());

    let mut c = ExperimentConfig::tiny();
    c.data.synth.height = 24;
    assert!(c.validate().unwrap_err().is_config());

    let mut c = ExperimentConfig::tiny();
    c.bench.sampling_steps = c.model.noise_steps + 1;
    assert!(c.validate().unwrap_err().is_config());

    let mut c = ExperimentConfig::tiny();
    c.mol.multi_frame_training = false;
    c.mol.scales = vec![5, 9];
    assert!(c.validate().unwrap_err().is_config());
}

#[test]
fn ablation_variants_change_one_key_each() {
    let base = ExperimentConfig::tiny();
    let v = ablation_variants(&base);
    let labels: Vec<&str> = v.iter().map(|(l, _)| *l).collect();
    assert_eq!(labels, ["w/o Multi-frame", "w/o MoL", "Full Model"]);
    let full = &v[2].1;
    assert!(full.mol.enabled && full.mol.multi_frame_training);
    assert!(!v[0].1.mol.multi_frame_training && v[0].1.mol.enabled);
    assert!(!v[1].1.mol.enabled && v[1].1.mol.multi_frame_training);
    let mut a = v[0].1.clone();
    a.mol.multi_frame_training = true;
    assert_eq!(&a, full);
    let mut b = v[1].1.clone();
    b.mol.enabled = true;
    assert_eq!(&b, full);
}

#[test]
fn smoothing_is_a_trailing_mean() {
    assert_eq!(smoothed(&[4.0, 2.0, 6.0, 0.0], 2), vec![4.0, 3.0, 4.0, 3.0]);
    assert_eq!(smoothed(&[1.0, 3.0], 100), vec![1.0, 2.0]);
}

#[test]
fn training_without_a_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = cmd_train(&ExperimentConfig::tiny(), dir.path(), &dir.path().join("out")).unwrap_err();
    assert!(e.is_data(), "{e}");
}

#[test]
fn manifest_missing_a_scale_is_rejected_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::tiny();
    let data = dir.path().join("data");
    cmd_data(&cfg, None, &data).unwrap();
    let records = read_manifest(&data.join(MANIFEST_FILE)).unwrap();
    let kept: Vec<_> = records.into_iter().filter(|r| r.scale_s != 33).collect();
    write_manifest(&data.join(MANIFEST_FILE), &kept).unwrap();
    let e = cmd_train(&cfg, &data, &dir.path().join("out")).unwrap_err();
    assert!(matches!(e, SemfiError::Data(ref m) if m.contains("33")), "{e}");
    assert!(!dir.path().join("out").join("checkpoint.semfi").exists());

    // Single-scale training only needs the 65-frame clips for the adapters, but pretraining still sees every scale.
    let mut single = cfg.clone();
    single.mol.multi_frame_training = false;
    single.train.pretrain_steps = 0;
    cmd_train(&single, &data, &dir.path().join("single")).unwrap();
}

#[test]
fn training_is_deterministic_and_writes_provenance() {
    let a = trained_tiny();
    let b = trained_tiny();
    assert_eq!(std::fs::read(a.ckpt()).unwrap(), std::fs::read(b.ckpt()).unwrap());
    let train = a.root.join("train");
    for f in ["loss.csv", "config.json", RUN_RECORD_FILE] {
        assert!(train.join(f).is_file(), "{f}");
    }
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(train.join(RUN_RECORD_FILE)).unwrap()).unwrap();
    assert_eq!(record["config_hash"], a.cfg.hash());
    assert_eq!(record["command"], "train");
    let log = std::fs::read_to_string(train.join("loss.csv")).unwrap();
    let steps = a.cfg.train.pretrain_steps + a.cfg.train.steps;
    assert_eq!(log.lines().count(), steps + 1);
}

#[test]
fn sampling_routes_writes_n_frames_and_is_reproducible() {
    let t = trained_tiny();
    let out = t.root.join("samples");
    std::fs::create_dir_all(&out).unwrap();

    let expert = cmd_sample(&sample_args(&t, 20, &out.join("a.clip"))).unwrap();
    assert_eq!(expert, Some(17));
    let (header, clip) = read_clip(&out.join("a.clip")).unwrap();
    assert_eq!(header.expert, Some(17));
    assert_eq!(clip.n_frames, 20);
    assert!(out.join(RUN_RECORD_FILE).is_file());

    cmd_sample(&sample_args(&t, 20, &out.join("b.clip"))).unwrap();
    assert_eq!(std::fs::read(out.join("a.clip")).unwrap(), std::fs::read(out.join("b.clip")).unwrap());

    let mut other = sample_args(&t, 20, &out.join("c.clip"));
    other.seed = 4;
    cmd_sample(&other).unwrap();
    assert_ne!(std::fs::read(out.join("a.clip")).unwrap(), std::fs::read(out.join("c.clip")).unwrap());

    let e = cmd_sample(&sample_args(&t, 5, &out.join("five.clip"))).unwrap();
    assert_eq!(e, Some(5));
    assert_eq!(read_clip(&out.join("five.clip")).unwrap().1.n_frames, 5);
}

#[test]
fn sampling_from_a_corrupt_checkpoint_is_a_format_error() {
    let t = trained_tiny();
    let mut bytes = std::fs::read(t.ckpt()).unwrap();
    bytes[0] ^= 0xff;
    let bad = t.root.join("bad.semfi");
    std::fs::write(&bad, bytes).unwrap();
    let mut args = sample_args(&t, 9, &t.root.join("x.clip"));
    args.checkpoint = bad;
    let e = cmd_sample(&args).unwrap_err();
    assert!(matches!(e, SemfiError::Format { .. }), "{e}");
}

#[test]
fn bench_is_reproducible_and_report_rerenders() {
    let t = trained_tiny();
    let source = BenchSource::Checkpoint(t.ckpt());
    let r1 = cmd_bench(&t.cfg, &source, &t.data(), &t.root.join("b1")).unwrap();
    cmd_bench(&t.cfg, &source, &t.data(), &t.root.join("b2")).unwrap();
    for f in [REPORT_CSV, PER_CLIP_CSV, "report.md", "report.json"] {
        assert_eq!(
            std::fs::read(t.root.join("b1").join(f)).unwrap(),
            std::fs::read(t.root.join("b2").join(f)).unwrap(),
            "{f}"
        );
    }
    let records = read_manifest(&t.data().join(MANIFEST_FILE)).unwrap();
    let tests = test_records(&records, t.cfg.bench.test_videos);
    assert_eq!(r1.per_clip.len() + r1.failures, tests.len());
    let md = std::fs::read_to_string(t.root.join("b1").join("report.md")).unwrap();
    assert!(md.contains("log10 Var"));

    let again = cmd_report(&t.root.join("b1").join("report.json"), &t.root.join("r"), false).unwrap();
    assert_eq!(again, r1);
    assert_eq!(
        std::fs::read(t.root.join("b1").join(REPORT_CSV)).unwrap(),
        std::fs::read(t.root.join("r").join(REPORT_CSV)).unwrap()
    );
}

#[test]
fn twenty_test_videos_give_a_hundred_and_twenty_per_clip_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.bench.probe_videos = 40;
    cfg.bench.probe_frames = 9;
    let data = dir.path().join("data");
    cmd_data(&cfg, None, &data).unwrap();
    let records = read_manifest(&data.join(MANIFEST_FILE)).unwrap();
    let tests = test_records(&records, cfg.bench.test_videos);
    assert_eq!(tests.len(), 120);

    // Ground truth posing as generated output.
    let clips = dir.path().join("clips");
    std::fs::create_dir_all(&clips).unwrap();
    for r in &tests {
        write_clip(&clips.join(format!("{}.clip", r.clip_id)), &r.load(&data).unwrap(), ClipDtype::F32, None).unwrap();
    }
    let report = cmd_bench(&cfg, &BenchSource::ClipDir(clips), &data, &dir.path().join("bench")).unwrap();
    assert_eq!(report.failures, 0);
    let csv = std::fs::read_to_string(dir.path().join("bench").join(PER_CLIP_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 121);
    for key in ["video_lpips", "frame_lpips"] {
        assert_eq!(report.all[key], 0.0, "{key}");
    }
    assert!(report.all["fid"].abs() < 1e-6);
    assert_eq!(report.absent_scales(), Vec::<usize>::new());
}
