use std::cell::Cell;

use ndarray::{s, Array2};

use hmd_core::conditioning::{MapMode, PcAutoencoder};
use hmd_core::data::{
    evaluate_bundles, generate_sequence, load_bundle, prediction_bundle, prepare_sequence, save_bundle, synth_generate,
    synth_sequence, Ablation, Scenario, SynthSpec, WindowSet,
};
use hmd_core::denoiser::{init_params, train, CondNormalizer, Denoiser, DenoiserConfig, TrainConfig};
use hmd_core::diffusion::{build_schedule, strided_plan, ScheduleKind};
use hmd_core::metrics::{mpjpe, EvalOptions, LatentEvalModel};
use hmd_core::nn::AdamConfig;
use hmd_core::streaming::SessionConfig;

fn spec(scenario: Scenario, seconds: f64, seed: u64) -> SynthSpec {
    SynthSpec { scenario, duration_s: seconds, seed, d_img: 12, scene_density: 60.0, ..SynthSpec::default() }
}

#[test]
fn oracle_stream_reproduces_ground_truth() {
    let bundle = synth_generate(&spec(Scenario::Mixed, 12.0, 3)).unwrap();
    let seq = prepare_sequence(&bundle, &PcAutoencoder::<f64>::new(0), MapMode::FullMap, 5).unwrap();
    let gt = seq.rotations.clone().unwrap();
    let (t, h, sbar) = (60, 20, 4);
    // every call of window k belongs to frames k·h .. k·h + t
    let calls = Cell::new(0usize);
    let oracle = |x: &Array2<f64>, _c: &Array2<f64>, _tau: usize| {
        let k = calls.get() / sbar;
        calls.set(calls.get() + 1);
        Ok(gt.slice(s![k * h..k * h + x.nrows(), ..]).to_owned())
    };
    let sched = build_schedule(200, ScheduleKind::Cosine).unwrap();
    let plan = strided_plan(200, sbar).unwrap();
    let session = SessionConfig { frames: t, features: 138, stride: h, eta: 1.0, seed: 2, dt: 1.0 / 60.0 };
    let out = generate_sequence(&oracle, &seq, session, &sched, &plan, Ablation::default()).unwrap();
    assert_eq!(out.first_frame, t - h);
    assert_eq!(out.denoiser_calls, calls.get());
    let n = out.frames();
    assert_eq!(n, (seq.frames() - t) / h * h + h);
    let pred = seq.stitch(&out.rotations, out.first_frame).unwrap();
    let truth = seq.ground_truth(out.first_frame, n).unwrap();
    assert!(mpjpe(&pred, &truth, &seq.skeleton).unwrap() < 1e-9);
}

#[test]
fn bundles_survive_disk_and_score_zero_against_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let seqs: Vec<_> = (0..2).map(|i| synth_generate(&spec(Scenario::Walk, 6.0, i)).unwrap()).collect();
    let mut loaded = Vec::new();
    for (i, b) in seqs.iter().enumerate() {
        let path = dir.path().join(format!("s{i}"));
        save_bundle(b, &path).unwrap();
        loaded.push(load_bundle(&path).unwrap());
    }
    assert_eq!(loaded, seqs);
    // a prediction cut from the middle is aligned by its start frame
    let rows = loaded[0].rotations.clone().unwrap().slice(s![100..250, ..]).to_owned();
    let cut = prediction_bundle(&loaded[0], &rows, 100);
    let whole = prediction_bundle(&loaded[1], &loaded[1].rotations.clone().unwrap(), 0);
    let report = evaluate_bundles::<f32>(&[vec![cut, whole]], &loaded, None::<&LatentEvalModel<f32>>, &EvalOptions::default()).unwrap();
    assert_eq!(report.mpjpe_cm.mean, 0.0);
    assert_eq!(report.floor_pen_cm.mean, 0.0);
    assert!(report.fid.is_none());
}

#[test]
fn stitched_synthetic_motion_matches_generator() {
    let seq = synth_sequence(&spec(Scenario::SitStand, 20.0, 8)).unwrap();
    let stitched = seq.stitched().unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in stitched.positions.iter().zip(seq.world.positions.iter()) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn short_training_lowers_the_loss_and_generates() {
    let bundles: Vec<_> = (0..2).map(|i| synth_generate(&spec(Scenario::Mixed, 20.0, 10 + i)).unwrap()).collect();
    let pc = PcAutoencoder::<f32>::new(1);
    let seqs: Vec<_> = bundles.iter().map(|b| prepare_sequence(b, &pc, MapMode::FullMap, 10).unwrap()).collect();
    let t = 48;
    let set = WindowSet::new(&seqs, t, 12).unwrap();
    let conds = set.sample_conditions(64).unwrap();
    let norm = CondNormalizer::fit(&conds.iter().collect::<Vec<_>>()).unwrap();
    let cfg = DenoiserConfig { latent_dim: 32, layers: 1, heads: 2, ..DenoiserConfig::toy(t, 12) };
    let mut model = Denoiser::from_parts(cfg.clone(), init_params(&cfg).unwrap(), norm).unwrap();
    let sched = build_schedule(100, ScheduleKind::Cosine).unwrap();
    let tc = TrainConfig {
        steps: 150,
        batch: 4,
        adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() },
        cond_dropout: 0.25,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &set, &sched, &tc, |_, _| {}).unwrap();
    let (head, tail) = report.head_tail(20);
    assert!(tail < 0.5 * head, "{head} -> {tail}");
    let plan = strided_plan(100, 5).unwrap();
    let session = SessionConfig { frames: t, features: 138, stride: 24, eta: 1.0, seed: 0, dt: 1.0 / 60.0 };
    let a = generate_sequence(&model, &seqs[0], session.clone(), &sched, &plan, Ablation::default()).unwrap();
    let b = generate_sequence(&model, &seqs[0], session, &sched, &plan, Ablation::default()).unwrap();
    assert_eq!(a.rotations, b.rotations);
    assert!(a.rotations.iter().all(|v| v.is_finite()));
}
