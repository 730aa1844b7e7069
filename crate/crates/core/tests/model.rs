use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

use semfi_core::conditioning::{GuidancePack, RandomProjectionEncoder};
use semfi_core::model::checkpoint::Checkpoint;
use semfi_core::model::train::loss_and_grads;
use semfi_core::model::{
    sample, training_step, AdamW, Denoiser, DenoiserConfig, LatentCodec, NoiseSchedule, SampleRequest, TextEncoder,
    TrainExample, TrainableSet, Volume,
};
use semfi_core::mol::{expert_prefix, universal_prefix, MoLState, MolConfig};
use semfi_core::nn::{Real, Tensor};
use semfi_core::rng::SeedStream;
use semfi_core::{Frame, SemfiError};

fn tiny() -> DenoiserConfig {
    DenoiserConfig {
        height: 8,
        width: 8,
        channels: 3,
        patch_size: [1, 4, 4],
        embed_dim: 16,
        num_layers: 1,
        num_heads: 2,
        mlp_ratio: 2,
        d_text: 8,
        text_buckets: 64,
        noise_steps: 50,
        ..DenoiserConfig::default()
    }
}

fn mol_cfg() -> MolConfig {
    MolConfig {
        rank: 2,
        alpha: 2.0,
        ..MolConfig::default()
    }
}

fn frame(seed: u64) -> Frame {
    let mut rng = SeedStream::new(seed).rng();
    let u = rand_distr::Uniform::new(0.0f32, 1.0);
    Frame::new(8, 8, 3, (0..192).map(|_| u.sample(&mut rng)).collect()).unwrap()
}

fn example(cfg: &DenoiserConfig, n: usize, seed: u64) -> TrainExample {
    let codec = LatentCodec::new(cfg.latent_pool);
    let enc = RandomProjectionEncoder::new(cfg.d_text, cfg.image_encoder_seed);
    let frames: Vec<Frame> = (0..n).map(|i| frame(seed * 1000 + i as u64)).collect();
    let mut x0 = Volume::zeros(n, 8, 8, 3);
    for (i, f) in frames.iter().enumerate() {
        x0.frame_slice_mut(i).copy_from_slice(&codec.encode_frame(f).data);
    }
    TrainExample {
        x0,
        text: TextEncoder::new(cfg.text_buckets, cfg.d_text, cfg.text_seed).encode("a red circle moves left"),
        pack: GuidancePack::dual_endpoint(&frames[0], &frames[n - 1], n, &codec, &enc).unwrap(),
    }
}

fn randomize<T: Real>(t: &mut Tensor<T>, rng: &mut impl rand::Rng, sd: f64) {
    let dist = Normal::new(0.0, sd).unwrap();
    for v in t.data.iter_mut() {
        *v = T::of(dist.sample(rng));
    }
}

fn shuffled_model(cfg: &DenoiserConfig) -> (Denoiser<f64>, MoLState<f64>) {
    let mut rng = SeedStream::new(99).rng();
    let mut model = Denoiser::<f64>::new(cfg.clone(), SeedStream::new(1)).unwrap();
    for (_, t) in model.params.iter_mut() {
        randomize(t, &mut rng, 0.3);
    }
    let mut mol = MoLState::<f64>::new(&model.lora_layer_shapes(), &mol_cfg(), SeedStream::new(2)).unwrap();
    let names: Vec<String> = mol.named_tensors().into_iter().map(|(n, _)| n).collect();
    for n in names {
        randomize(mol.tensor_mut(&n).unwrap(), &mut rng, 0.3);
    }
    (model, mol)
}

fn nudge(model: &mut Denoiser<f64>, mol: &mut MoLState<f64>, name: &str, idx: usize, delta: f64) {
    let p = if name.starts_with("mol/") {
        mol.tensor_mut(name).unwrap()
    } else {
        model.params.get_mut(name).unwrap()
    };
    p.data[idx] += delta;
}

#[test]
fn analytic_gradients_match_central_differences() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let (mut model, mut mol) = shuffled_model(&cfg);
    let batch = vec![example(&cfg, 5, 1), example(&cfg, 5, 2)];
    let seed = SeedStream::new(5);
    let (_, grads) = loss_and_grads(&model, Some(&mol), &batch, TrainableSet::ALL, &sched, seed).unwrap();
    assert!(grads.contains_key(&format!("{}/blocks.0.spatial.q/B", expert_prefix(5))));
    assert!(grads.keys().any(|k| k.starts_with(universal_prefix())));
    assert!(grads.contains_key("final.proj.weight"));

    let h = 1e-5;
    let mut checked = 0;
    for (name, g) in &grads {
        for idx in [0, g.data.len() / 2, g.data.len() - 1] {
            nudge(&mut model, &mut mol, name, idx, h);
            let (lp, _) = loss_and_grads(&model, Some(&mol), &batch, TrainableSet::NONE, &sched, seed).unwrap();
            nudge(&mut model, &mut mol, name, idx, -2.0 * h);
            let (lm, _) = loss_and_grads(&model, Some(&mol), &batch, TrainableSet::NONE, &sched, seed).unwrap();
            nudge(&mut model, &mut mol, name, idx, h);
            let fd = (lp - lm) / (2.0 * h);
            let an = g.data[idx];
            assert!(
                (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) + 1e-7,
                "{name}[{idx}]: analytic {an} vs numeric {fd}"
            );
            checked += 1;
        }
    }
    assert!(checked > 60);
}

#[test]
fn zero_weights_give_zero_output() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let ex = example(&cfg, 9, 3);
    for model in [
        Denoiser::<f32>::zeroed(cfg.clone()).unwrap(),
        Denoiser::<f32>::new(cfg.clone(), SeedStream::new(4)).unwrap(),
    ] {
        let out = model.forward(&ex.x0, 10, &sched, &ex.text, &ex.pack, None, 9).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn fresh_adapters_do_not_change_the_output() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let (model, _) = shuffled_model(&cfg);
    let model = model.cast::<f32>();
    let mol = MoLState::<f32>::new(&model.lora_layer_shapes(), &mol_cfg(), SeedStream::new(8)).unwrap();
    let ex = example(&cfg, 17, 4);
    let plain = model.forward(&ex.x0, 20, &sched, &ex.text, &ex.pack, None, 17).unwrap();
    let adapted = model.forward(&ex.x0, 20, &sched, &ex.text, &ex.pack, Some(&mol), 17).unwrap();
    assert!(plain.data.iter().any(|&v| v != 0.0));
    assert_eq!(plain, adapted);
}

#[test]
fn init_is_deterministic_in_the_seed() {
    let a = Denoiser::<f32>::new(tiny(), SeedStream::new(11)).unwrap();
    let b = Denoiser::<f32>::new(tiny(), SeedStream::new(11)).unwrap();
    let c = Denoiser::<f32>::new(tiny(), SeedStream::new(12)).unwrap();
    assert_eq!(a.params.checksum(), b.params.checksum());
    assert_ne!(a.params.checksum(), c.params.checksum());
}

#[test]
fn adapter_training_leaves_base_and_idle_experts_untouched() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let mut model = Denoiser::<f32>::new(cfg.clone(), SeedStream::new(1)).unwrap();
    let mut rng = SeedStream::new(3).rng();
    for (_, t) in model.params.iter_mut() {
        randomize(t, &mut rng, 0.2);
    }
    let mut mol = MoLState::<f32>::new(&model.lora_layer_shapes(), &mol_cfg(), SeedStream::new(2)).unwrap();
    let base_before = model.params.checksum();
    let before: Vec<(String, Tensor<f32>)> = mol.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();

    let mut opt = AdamW::new(1e-2, 0.0);
    let batch = vec![example(&cfg, 9, 1), example(&cfg, 9, 2)];
    for step in 0..3 {
        training_step(&mut model, Some(&mut mol), &batch, TrainableSet::ADAPTERS, &mut opt, &sched, SeedStream::new(step))
            .unwrap();
    }
    assert_eq!(model.params.checksum(), base_before);
    let routed = expert_prefix(9);
    for (name, old) in before {
        let now = mol.named_tensors().into_iter().find(|(n, _)| *n == name).unwrap().1.clone();
        let owned = name.starts_with(universal_prefix()) || name.starts_with(&format!("{routed}/"));
        if owned {
            assert_ne!(now, old, "{name} should have moved");
        } else {
            assert_eq!(now, old, "{name} should be frozen");
        }
    }
}

#[test]
fn mixed_frame_counts_are_rejected() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let model = Denoiser::<f32>::new(cfg.clone(), SeedStream::new(1)).unwrap();
    let batch = vec![example(&cfg, 5, 1), example(&cfg, 9, 2)];
    let err = loss_and_grads(&model, None, &batch, TrainableSet::BASE, &sched, SeedStream::new(0)).unwrap_err();
    assert!(matches!(err, SemfiError::Batching(_)));
}

#[test]
fn bad_timestep_is_a_range_error() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let model = Denoiser::<f32>::new(cfg.clone(), SeedStream::new(1)).unwrap();
    let ex = example(&cfg, 5, 1);
    let err = model.forward(&ex.x0, 50, &sched, &ex.text, &ex.pack, None, 5).unwrap_err();
    assert!(matches!(err, SemfiError::Range(_)));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let cfg = tiny();
    let (model, mol) = shuffled_model(&cfg);
    let ck = Checkpoint {
        model: model.cast(),
        mol: Some((mol_cfg(), mol.cast())),
        extra: serde_json::json!({"note": "round trip"}),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.model.params.checksum(), ck.model.params.checksum());

    let mut bytes = ck.to_bytes().unwrap();
    bytes[0] = b'X';
    match Checkpoint::from_bytes(&bytes) {
        Err(SemfiError::Format { field, .. }) => assert_eq!(field, "magic"),
        other => panic!("expected format error, got {other:?}"),
    }
    let bytes = ck.to_bytes().unwrap();
    match Checkpoint::from_bytes(&bytes[..bytes.len() - 8]) {
        Err(SemfiError::Format { field, .. }) => assert!(field.ends_with(".offset"), "{field}"),
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn sampling_is_seeded_and_keeps_endpoints() {
    let cfg = tiny();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    let (model, mol) = shuffled_model(&cfg);
    let (model, mol) = (model.cast::<f32>(), mol.cast::<f32>());
    let enc = RandomProjectionEncoder::new(cfg.d_text, cfg.image_encoder_seed);
    let text = TextEncoder::new(cfg.text_buckets, cfg.d_text, cfg.text_seed).encode("two squares");
    let (first, last) = (frame(1), frame(2));
    let mut req = SampleRequest {
        first: &first,
        last: &last,
        text: &text,
        n_frames: 7,
        steps: 5,
        clamp_endpoints: true,
        seed: SeedStream::new(3),
        fps: 8,
    };
    let a = sample(&model, Some(&mol), &enc, &sched, &req).unwrap();
    let b = sample(&model, Some(&mol), &enc, &sched, &req).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_frames, 7);
    assert_eq!(a.first(), first);
    assert_eq!(a.last(), last);
    assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    req.n_frames = 1;
    assert!(matches!(
        sample(&model, Some(&mol), &enc, &sched, &req),
        Err(SemfiError::Argument(_))
    ));
}

#[test]
fn unit_sigma_data_is_plain_velocity() {
    let cfg = DenoiserConfig::default();
    let sched = NoiseSchedule::from_config(&cfg).unwrap();
    for t in [0, 10, 500, 999] {
        let (a, s) = (sched.signal(t), sched.noise(t));
        let (skip, out) = cfg.velocity_coefficients(a, s);
        assert!((skip - a).abs() < 1e-12 && (out - s).abs() < 1e-12);
    }
    let bad = DenoiserConfig {
        sigma_data: 0.0,
        ..DenoiserConfig::default()
    };
    assert!(matches!(bad.validate(), Err(SemfiError::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn velocity_target_inverts_to_the_clean_sample(
        t in 0usize..1000,
        sd in 0.05f64..2.0,
        x0 in -1.0f64..1.0,
        e in -3.0f64..3.0,
    ) {
        let cfg = DenoiserConfig { sigma_data: sd, ..DenoiserConfig::default() };
        let sched = NoiseSchedule::from_config(&cfg).unwrap();
        let (a, s) = (sched.signal(t), sched.noise(t));
        let (skip, out) = cfg.velocity_coefficients(a, s);
        let xt = a * x0 + s * e;
        let v = (skip * xt - x0) / out;
        prop_assert!((skip * xt - out * v - x0).abs() < 1e-9);
    }

    #[test]
    fn output_shape_matches_input(n in 2usize..14, t in 0usize..50) {
        let cfg = tiny();
        let sched = NoiseSchedule::from_config(&cfg).unwrap();
        let (model, mol) = shuffled_model(&cfg);
        let (model, mol) = (model.cast::<f32>(), mol.cast::<f32>());
        let ex = example(&cfg, n, 7);
        let out = model.forward(&ex.x0, t, &sched, &ex.text, &ex.pack, Some(&mol), n).unwrap();
        prop_assert_eq!(out.dims(), ex.x0.dims());
        prop_assert!(out.data.iter().all(|v| v.is_finite()));
    }
}
