use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pool::derive_seed;
use super::*;
use crate::data::{synth_sbm, SbmConfig};
use crate::graph::Graph;
use crate::model::{init_glorot, GcnModel};
use crate::partition::{coverage_mask, sample_partition};

fn sbm(n: usize, seed: u64) -> Graph {
    synth_sbm(&SbmConfig {
        n,
        k: 3,
        p_in: 0.3,
        p_out: 0.02,
        d: 12,
        noise: 0.5,
        seed,
        theory_eps: None,
    })
    .unwrap()
    .graph
}

#[derive(Default)]
struct Trace(Vec<GcnModel<f32>>);

impl Observer for Trace {
    fn on_round(&mut self, _round: usize, model: &GcnModel<f32>) {
        self.0.push(model.clone());
    }
}

fn max_rel_diff(a: &GcnModel<f32>, b: &GcnModel<f32>) -> f64 {
    a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| {
            let num: f64 = x.data().iter().zip(y.data()).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
            num.sqrt() / (y.frobenius_norm() as f64).max(1e-12)
        })
        .fold(0.0, f64::max)
}

fn small(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        hidden: vec![8, 8],
        epochs: 20,
        eval_every: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn gist_with_one_worker_tracks_single() {
    let g = sbm(50, 1);
    let base = TrainConfig {
        optimizer: crate::model::OptimizerKind::Sgd,
        lr: 0.5,
        epochs: 100,
        zeta: 1,
        m: 1,
        ..small(Mode::Single)
    };
    let mut single = Trace::default();
    train(&base, &g, &mut single).unwrap();
    let mut gist = Trace::default();
    train(&TrainConfig { mode: Mode::Gist, ..base }, &g, &mut gist).unwrap();
    assert_eq!(single.0.len(), 100);
    assert_eq!(gist.0.len(), 100);
    for (a, b) in gist.0.iter().zip(&single.0) {
        assert!(max_rel_diff(a, b) <= 1e-6);
    }
    assert!(max_rel_diff(&single.0[0], &single.0[99]) > 1e-3, "weights should move");
}

#[test]
fn one_round_changes_exactly_the_covered_entries() {
    let g = sbm(60, 2);
    let cfg = TrainConfig {
        m: 2,
        zeta: 3,
        epochs: 6,
        seed: 9,
        ..small(Mode::Gist)
    };
    let dims = cfg.dims(g.num_features(), g.num_classes());
    let init: GcnModel<f32> = init_glorot(&dims, cfg.arch, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    let p = sample_partition(
        &dims,
        2,
        false,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 2)),
    )
    .unwrap();
    let mut trace = Trace::default();
    let out = train(&cfg, &g, &mut trace).unwrap();
    assert_eq!(out.rounds, 1);
    let after = &trace.0[0];
    // covered entries can stay put only when their gradient vanished (a
    // dead ReLU unit), so require most of them to move
    for (l, cov) in coverage_mask(&p, cfg.arch).iter().enumerate() {
        let mut moved_covered = 0;
        for r in 0..cov.rows {
            for c in 0..cov.cols {
                let moved = after.weights[l].get(r, c) != init.weights[l].get(r, c);
                if cov.get(r, c) {
                    moved_covered += usize::from(moved);
                } else {
                    assert!(!moved, "layer {l} entry ({r},{c}) is outside every block");
                }
            }
        }
        let covered = cov.data.iter().filter(|&&b| b).count();
        assert!(moved_covered * 10 >= covered * 8, "layer {l}: {moved_covered}/{covered}");
    }
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let g = sbm(30, 3);
    for mode in [Mode::Single, Mode::Gist, Mode::LocalSgd] {
        let cfg = TrainConfig { epochs: 0, ..small(mode) };
        let dims = cfg.dims(g.num_features(), g.num_classes());
        let init: GcnModel<f32> = init_glorot(&dims, cfg.arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let out = train(&cfg, &g, &mut ()).unwrap();
        assert_eq!(out.model.as_model().unwrap(), &init);
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.total_steps, 0);
    }
}

#[test]
fn full_batch_gd_loss_is_nonincreasing() {
    let g = synth_sbm(&SbmConfig {
        n: 60,
        k: 3,
        p_in: 0.4,
        p_out: 0.0,
        d: 6,
        noise: 0.0,
        seed: 4,
        theory_eps: None,
    })
    .unwrap()
    .graph;
    let cfg = TrainConfig {
        optimizer: crate::model::OptimizerKind::Sgd,
        schedule: Schedule::None,
        lr: 0.2,
        epochs: 10,
        eval_every: 1,
        ..small(Mode::Single)
    };
    let out = train(&cfg, &g, &mut ()).unwrap();
    let losses: Vec<f64> = out.metrics.iter().map(|r| r.loss).collect();
    assert_eq!(losses.len(), 10);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn identical_replicas_average_to_one_replica() {
    let g = sbm(40, 5);
    let base = TrainConfig {
        optimizer: crate::model::OptimizerKind::Sgd,
        lr: 0.3,
        zeta: 1,
        ..small(Mode::LocalSgd)
    };
    let one = train(&TrainConfig { m: 1, epochs: 4, ..base.clone() }, &g, &mut ()).unwrap();
    let three = train(&TrainConfig { m: 3, epochs: 12, ..base }, &g, &mut ()).unwrap();
    assert_eq!(one.rounds, 4);
    assert_eq!(three.rounds, 4);
    assert!(max_rel_diff(three.model.as_model().unwrap(), one.model.as_model().unwrap()) < 1e-6);
}

#[test]
fn local_sgd_fits_sbm() {
    let g = sbm(150, 6);
    let cfg = TrainConfig {
        m: 2,
        zeta: 5,
        epochs: 100,
        hidden: vec![16],
        ..small(Mode::LocalSgd)
    };
    let out = train(&cfg, &g, &mut ()).unwrap();
    let last = out.metrics.last().unwrap();
    assert!(last.train_acc >= 0.9, "{last:?}");
}

#[test]
fn measured_traffic_matches_accountant() {
    let g = sbm(40, 7);
    for (mode, m) in [(Mode::Gist, 1), (Mode::Gist, 2), (Mode::Gist, 4), (Mode::LocalSgd, 2), (Mode::LocalSgd, 4)] {
        let cfg = TrainConfig {
            m,
            zeta: 2,
            epochs: 16,
            ..small(mode)
        };
        let dims = cfg.dims(g.num_features(), g.num_classes());
        let out = train(&cfg, &g, &mut ()).unwrap();
        let predicted = comm_cost(mode, cfg.arch, &dims, m, false);
        assert_eq!(out.comm_scalars, 2 * predicted.total * out.rounds as u64, "{mode:?} m={m}");
        assert_eq!(out.total_steps, 16);
        let comm: Vec<u64> = out.metrics.iter().map(|r| r.comm_scalars).collect();
        assert!(comm.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let g = sbm(60, 8);
    let run = |threads| {
        let cfg = TrainConfig {
            m: 4,
            zeta: 2,
            clusters: 4,
            batch_clusters: 2,
            dropout: 0.3,
            threads,
            ..small(Mode::Gist)
        };
        let out = train(&cfg, &g, &mut ()).unwrap();
        let metrics: Vec<_> = out.metrics.into_iter().map(|r| MetricsRecord { wall_s: 0.0, ..r }).collect();
        (out.model, metrics)
    };
    let (m1, r1) = run(1);
    let (m4, r4) = run(4);
    assert_eq!(m1, m4);
    assert_eq!(r1, r4);
}

#[test]
fn ensemble_inference_scales_with_members() {
    let g = sbm(60, 9);
    let cfg = TrainConfig { m: 3, ..small(Mode::Ensemble) };
    let out = train(&cfg, &g, &mut ()).unwrap();
    let (x, op) = model_inputs(&g, cfg.arch, cfg.adjacency, cfg.row_normalize);
    let (probs, count) = out.model.predict_proba(&op, &x).unwrap();
    assert_eq!(count, 3);
    for r in 0..probs.rows() {
        let s: f32 = probs.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
    let TrainedModel::Ensemble(e) = &out.model else { panic!("expected an ensemble") };
    assert!(e.member_val_acc.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn jsonl_fields() {
    let rec = MetricsRecord {
        round: 1,
        mode: "gist".into(),
        loss: 0.5,
        train_acc: 1.0,
        val_acc: 0.5,
        test_acc: 0.25,
        micro_f1: 0.25,
        wall_s: 0.1,
        comm_scalars: 7,
    };
    let mut w = JsonlWriter(Vec::new());
    w.on_metrics(&rec).unwrap();
    let text = String::from_utf8(w.0).unwrap();
    assert!(text.ends_with('\n'));
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for k in ["round", "mode", "loss", "train_acc", "val_acc", "test_acc", "micro_f1", "wall_s", "comm_scalars"] {
        assert!(keys.contains(&k), "{k}");
    }
}
