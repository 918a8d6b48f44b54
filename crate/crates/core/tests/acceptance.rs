//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 3 7` runs only criteria 3 and 7. Data
//! directories are read from `GIST_DATA_DIR` (default: `<workspace>/data`).
//! The process exits nonzero on failures only when `GIST_ACCEPTANCE_STRICT`
//! is set, so the report is always printed in full.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gist::data::{load_dataset, synth_regular, synth_sbm, RegularConfig, SbmConfig};
use gist::model::{backward, forward, init_glorot, Arch, GcnModel, NodeFeatures, OptimizerKind};
use gist::orchestrator::{comm_cost, model_inputs, train, Mode, Observer, TrainConfig};
use gist::partition::{aggregate_counted, coverage_mask, extract_sub_model, sample_partition};
use gist::theory::{
    check_assumptions, initial_loss, initial_loss_bound, kernel_report, min_eigenvalue, ntk_gram,
    run_theory_experiment, TheoryConfig,
};
use gist::{AdjacencyMode, DenseMatrix, Graph, SparseMatrix};

// regularisation picked by validation accuracy on Cora; shared by every
// reference-protocol run
const DROPOUT: f64 = 0.6;
const WEIGHT_DECAY: f64 = 5e-4;
const SEEDS: u64 = 5;

struct Suite {
    only: Vec<String>,
    passed: usize,
    failed: usize,
    skipped: usize,
}

impl Suite {
    fn wants(&self, id: &str) -> bool {
        self.only.is_empty() || self.only.iter().any(|o| o == id)
    }

    fn report(&mut self, id: &str, name: &str, pass: bool, detail: String, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("[{tag}] {id:<4} {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
    }

    fn skip(&mut self, id: &str, name: &str, why: &str) {
        self.skipped += 1;
        println!("[SKIP] {id:<4} {name}: {why}");
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("GIST_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn reference(mode: Mode, m: usize, partition_input: bool, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        m,
        zeta: 20,
        hidden: vec![256, 256],
        epochs: 400,
        lr: 0.01,
        partition_input,
        seed,
        eval_every: 400,
        dropout: DROPOUT,
        weight_decay: WEIGHT_DECAY,
        ..TrainConfig::default()
    }
}

fn test_accuracies(g: &Graph, make: impl Fn(u64) -> TrainConfig) -> Vec<f64> {
    (0..SEEDS)
        .map(|seed| {
            let out = train(&make(seed), g, &mut ()).expect("training run");
            100.0 * out.metrics.last().expect("final record").test_acc
        })
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(", ")
}

fn criterion_data(s: &mut Suite) {
    let dir = data_dir().join("cora");
    let name = "Cora converted: n=2708, 5429 edge lines, d=1433, k=7";
    if !dir.exists() {
        return s.skip("0", name, "dataset directory not found; see tools/planetoid_to_tsv.py");
    }
    let t = Instant::now();
    let b = load_dataset(&dir).expect("load cora");
    let lines = std::fs::read_to_string(dir.join("edges.tsv")).unwrap().lines().count();
    let g = &b.graph;
    let pass = g.num_nodes() == 2708 && lines == 5429 && g.num_features() == 1433 && b.num_classes == 7;
    s.report(
        "0",
        name,
        pass,
        format!(
            "n={} edge lines={} (unique undirected {}) d={} k={}",
            g.num_nodes(),
            lines,
            g.num_edges(),
            g.num_features(),
            b.num_classes
        ),
        t,
    );
}

fn criterion_1(s: &mut Suite) {
    for (id, name, target) in [("1a", "cora", 81.52), ("1b", "citeseer", 75.02), ("1c", "pubmed", 75.90)] {
        let label = format!("baseline {name}, 3-layer 256-dim GCN, 5 seeds, {target} ± 3.0");
        let dir = data_dir().join(name);
        if !dir.exists() {
            s.skip(id, &label, "dataset directory not found");
            continue;
        }
        let t = Instant::now();
        let g = load_dataset(&dir).expect("load dataset").graph;
        let accs = test_accuracies(&g, |seed| reference(Mode::Single, 1, false, seed));
        let m = mean(&accs);
        s.report(id, &label, (m - target).abs() <= 3.0, format!("mean {m:.2} [{}]", fmt_list(&accs)), t);
    }
}

fn criterion_2(s: &mut Suite) {
    let dir = data_dir().join("cora");
    if !dir.exists() {
        return s.skip("2", "GIST on Cora", "dataset directory not found");
    }
    let g = load_dataset(&dir).expect("load cora").graph;
    let t = Instant::now();
    let m2 = test_accuracies(&g, |seed| reference(Mode::Gist, 2, false, seed));
    let a2 = mean(&m2);
    s.report(
        "2a",
        "GIST m=2 hidden-only, zeta=20, 80.82 ± 3.0",
        (a2 - 80.82).abs() <= 3.0,
        format!("mean {a2:.2} [{}]", fmt_list(&m2)),
        t,
    );
    let t = Instant::now();
    let m8 = test_accuracies(&g, |seed| reference(Mode::Gist, 8, false, seed));
    let a8 = mean(&m8);
    s.report(
        "2b",
        "GIST m=8 hidden-only, 79.58 ± 3.5",
        (a8 - 79.58).abs() <= 3.5,
        format!("mean {a8:.2} [{}]", fmt_list(&m8)),
        t,
    );
    let t = Instant::now();
    let m8i = test_accuracies(&g, |seed| reference(Mode::Gist, 8, true, seed));
    let a8i = mean(&m8i);
    s.report(
        "2c",
        "m=8 input partition degrades accuracy by >= 15 points",
        a8 - a8i >= 15.0,
        format!("hidden-only {a8:.2} vs input-partitioned {a8i:.2} [{}], drop {:.2}", fmt_list(&m8i), a8 - a8i),
        t,
    );
}

#[derive(Default)]
struct Trace(Vec<GcnModel<f32>>);

impl Observer for Trace {
    fn on_round(&mut self, _round: usize, model: &GcnModel<f32>) {
        self.0.push(model.clone());
    }
}

fn rel_diff(a: &GcnModel<f32>, b: &GcnModel<f32>) -> f64 {
    a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| {
            let d: f64 = x.data().iter().zip(y.data()).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
            d.sqrt() / (y.frobenius_norm() as f64).max(1e-12)
        })
        .fold(0.0, f64::max)
}

fn criterion_3(s: &mut Suite) {
    let t = Instant::now();
    let g = synth_sbm(&SbmConfig { n: 50, k: 3, p_in: 0.3, p_out: 0.02, d: 10, noise: 0.5, seed: 1, theory_eps: None })
        .unwrap()
        .graph;
    let base = TrainConfig {
        mode: Mode::Single,
        m: 1,
        zeta: 1,
        clusters: 1,
        optimizer: OptimizerKind::Sgd,
        lr: 0.5,
        hidden: vec![16, 16],
        epochs: 100,
        ..TrainConfig::default()
    };
    let mut single = Trace::default();
    train(&base, &g, &mut single).unwrap();
    let mut gist = Trace::default();
    train(&TrainConfig { mode: Mode::Gist, ..base }, &g, &mut gist).unwrap();
    let worst = gist.0.iter().zip(&single.0).map(|(a, b)| rel_diff(a, b)).fold(0.0, f64::max);
    let steps = gist.0.len().min(single.0.len());
    s.report(
        "3",
        "degenerate GIST (m=1, zeta=1, c=1, SGD) tracks single mode, <= 1e-6 at each of 100 steps",
        steps == 100 && worst <= 1e-6,
        format!("{steps} steps compared, max relative difference {worst:.3e}"),
        t,
    );
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.35) {
                edges.push((u, v));
            }
        }
    }
    Graph::structure(n, edges).unwrap()
}

fn criterion_4(s: &mut Suite) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let arch = if rng.gen_bool(0.5) { Arch::Gcn } else { Arch::SageMean };
        let layers = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..=layers).map(|_| rng.gen_range(1..=8)).collect();
        let n = rng.gen_range(2..=10);
        let g = random_graph(n, &mut rng);
        let op: SparseMatrix<f64> = arch.propagation(&g, AdjacencyMode::Renorm);
        let x = NodeFeatures::Dense(DenseMatrix::from_fn(n, dims[0], |_, _| rng.sample(StandardNormal)));
        let model: GcnModel<f64> = init_glorot(&dims, arch, &mut rng).unwrap();
        let r = DenseMatrix::from_fn(n, dims[layers], |_, _| rng.sample::<f64, _>(StandardNormal));
        let objective = |m: &GcnModel<f64>| -> f64 {
            let (out, _) = forward(m, &op, &x).unwrap();
            out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (_, tape) = forward(&model, &op, &x).unwrap();
        let grads = backward(&model, &op, &tape, &r).unwrap();
        for (l, gl) in grads.iter().enumerate() {
            for k in 0..gl.len() {
                let mut plus = model.clone();
                plus.weights[l].data_mut()[k] += h;
                let mut minus = model.clone();
                minus.weights[l].data_mut()[k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let a = gl.data()[k];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    s.report(
        "4",
        "analytic backward vs f64 central differences, 20 instances, rel err < 1e-4",
        worst < 1e-4,
        format!("max relative error {worst:.3e} (denominator floor 1e-6, h = 1e-6)"),
        t,
    );
}

fn criterion_5(s: &mut Suite) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let arch = if rng.gen_bool(0.5) { Arch::Gcn } else { Arch::SageMean };
        let m = rng.gen_range(1..=6);
        let layers = rng.gen_range(2..=4);
        let dims: Vec<usize> = (0..=layers)
            .map(|l| if l == 0 || l == layers { rng.gen_range(1..=12) } else { rng.gen_range(m..=m + 20) })
            .collect();
        let partition_input = rng.gen_bool(0.5) && dims[0] >= m;
        let p = sample_partition(&dims, m, partition_input, &mut rng).unwrap();
        // disjoint cover of every partitioned dimension
        for (dim, &d) in dims.iter().enumerate() {
            if !p.is_partitioned(dim) {
                continue;
            }
            let mut seen = vec![0u32; d];
            for i in 0..m {
                for &k in p.block(dim, i) {
                    seen[k] += 1;
                }
            }
            if seen.iter().any(|&c| c != 1) {
                failures.push(format!("trial {trial}: dim {dim} is not a disjoint cover"));
            }
        }
        // write-once aggregation
        let mut model: GcnModel<f64> = init_glorot(&dims, arch, &mut rng).unwrap();
        let subs: Vec<_> = (0..m).map(|i| extract_sub_model(&model, &p, i).unwrap()).collect();
        let counts = aggregate_counted(&mut model, &subs, &p).unwrap();
        let cov = coverage_mask(&p, arch);
        for (l, (c, mask)) in counts.iter().zip(&cov).enumerate() {
            if c.iter().any(|&k| k > 1) || c.iter().zip(&mask.data).any(|(&k, &b)| (k == 1) != b) {
                failures.push(format!("trial {trial}: layer {l} write counts disagree with coverage"));
            }
        }
        // coverage fraction of interior layers
        for l in 1..layers - 1 {
            let expected: f64 = (0..m)
                .map(|i| (p.block(l, i).len() * p.block(l + 1, i).len()) as f64)
                .sum::<f64>()
                / (dims[l] * dims[l + 1]) as f64;
            let got = cov[l].fraction();
            if (got - expected).abs() > 1e-12 {
                failures.push(format!("trial {trial}: layer {l} coverage {got} vs {expected}"));
            }
            if dims[l] % m == 0 && dims[l + 1] % m == 0 && (got - 1.0 / m as f64).abs() > 1e-12 {
                failures.push(format!("trial {trial}: layer {l} coverage {got} vs 1/{m}"));
            }
        }
    }
    s.report(
        "5",
        "partition/aggregation invariants over 1000 randomized trials",
        failures.is_empty(),
        if failures.is_empty() {
            "disjoint cover, write-once and coverage fractions exact".into()
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
        t,
    );
}

fn criterion_6(s: &mut Suite) {
    let t = Instant::now();
    let g = synth_sbm(&SbmConfig { n: 70, k: 7, p_in: 0.3, p_out: 0.01, d: 1433, noise: 0.3, seed: 6, theory_eps: None })
        .unwrap()
        .graph;
    let dims = [1433, 256, 256, 7];
    let mut notes = Vec::new();
    let mut pass = true;
    for (mode, m) in [(Mode::Gist, 1), (Mode::Gist, 2), (Mode::Gist, 4), (Mode::Gist, 8), (Mode::LocalSgd, 2)] {
        let cfg = TrainConfig { mode, m, zeta: 1, hidden: vec![256, 256], epochs: 2 * m, ..TrainConfig::default() };
        let out = train(&cfg, &g, &mut ()).unwrap();
        let predicted = comm_cost(mode, Arch::Gcn, &dims, m, false);
        let measured_per_round = out.comm_scalars / out.rounds as u64;
        pass &= out.comm_scalars == 2 * predicted.total * out.rounds as u64;
        notes.push(format!("{}@m={m}: {measured_per_round}/round = 2x{}", mode.as_str(), predicted.total));
    }
    let gist2 = comm_cost(Mode::Gist, Arch::Gcn, &dims, 2, false).per_worker[0];
    let local2 = comm_cost(Mode::LocalSgd, Arch::Gcn, &dims, 2, false).per_worker[0];
    pass &= gist2 == 200_704 && local2 == 434_176 && gist2 < local2;
    notes.push(format!("per worker at m=2: gist {gist2} < local_sgd {local2}"));
    s.report("6", "measured channel traffic equals the accountant", pass, notes.join("; "), t);
}

fn criterion_7(s: &mut Suite) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 1_000_000;
    let d = 5;
    let mut worst_z = 0.0f64;
    for _ in 0..50 {
        let x = DenseMatrix::from_fn(2, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dot: f64 = x.row(0).iter().zip(x.row(1)).map(|(a, b)| a * b).sum();
        let closed = ntk_gram(&x, 1, 1).unwrap().get(0, 1) / dot;
        let mut hits = 0u64;
        let mut th = vec![0.0; d];
        for _ in 0..draws {
            th.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let a: f64 = x.row(0).iter().zip(&th).map(|(u, v)| u * v).sum();
            let b: f64 = x.row(1).iter().zip(&th).map(|(u, v)| u * v).sum();
            hits += u64::from(a >= 0.0 && b >= 0.0);
        }
        let p = hits as f64 / draws as f64;
        let se = (closed * (1.0 - closed) / draws as f64).sqrt();
        worst_z = worst_z.max((p - closed).abs() / se);
    }
    s.report(
        "7",
        "arc-cosine closed form vs 1e6-draw Monte Carlo, 50 pairs, within 3 SE",
        worst_z <= 3.0,
        format!("largest deviation {worst_z:.2} standard errors"),
        t,
    );
}

fn criterion_8(s: &mut Suite) {
    let t = Instant::now();
    let p2 = Graph::structure(2, [(0, 1)]).unwrap();
    let p2_check = check_assumptions(&p2).unwrap();
    let k3 = Graph::structure(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
    let k3_min = min_eigenvalue(&k3.normalized_adjacency::<f64>(AdjacencyMode::Chebyshev).to_dense()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tested = 0;
    let mut attempts = 0;
    let mut min_lambda0 = f64::INFINITY;
    while tested < 20 && attempts < 200 {
        attempts += 1;
        let n = rng.gen_range(10..=50);
        let p = rng.gen_range(3..=6);
        let cfg = RegularConfig { n, p, d: rng.gen_range(3..=10), k: 2, seed: rng.gen() };
        let Ok(b) = synth_regular(&cfg) else { continue };
        if !check_assumptions(&b.graph).unwrap().all_pass() {
            continue;
        }
        let report = kernel_report(&b.graph, 2, 64).unwrap();
        min_lambda0 = min_lambda0.min(report.lambda0);
        tested += 1;
    }
    let pass = !p2_check.nonsingular_abar.pass && (k3_min - 0.5).abs() <= 1e-9 && tested == 20 && min_lambda0 > 0.0;
    s.report(
        "8",
        "P2 singular, K3 lambda_min = 0.5, lambda0 > 0 on 20 passing graphs",
        pass,
        format!(
            "P2 lambda_min {:.1e} ({}), K3 {k3_min:.12}, {tested} graphs min lambda0 {min_lambda0:.3e}",
            p2_check.lambda_min_abar,
            if p2_check.nonsingular_abar.pass { "passed" } else { "failed as expected" }
        ),
        t,
    );
}

fn theory_graph(seed: u64) -> Graph {
    synth_regular(&RegularConfig { n: 20, p: 4, d: 6, k: 2, seed }).unwrap().graph
}

fn theory_cfg(d1: usize, seed: u64) -> TheoryConfig {
    // eta = 2 overshoots in the first rounds; eta = 1 is the largest stable power of two
    TheoryConfig { d1, m: 2, zeta: 5, rounds: 1000, eta: 1.0, gamma: 0.5, seed, ..TheoryConfig::default() }
}

fn criterion_9(s: &mut Suite) {
    let t = Instant::now();
    let mut below = 0;
    let mut notes = Vec::new();
    let mut drift_notes = Vec::new();
    for seed in 0..5 {
        let run = run_theory_experiment(&theory_cfg(4096, seed), &theory_graph(seed)).unwrap();
        let ok = run.records.iter().all(|r| r.loss <= r.predicted_envelope);
        below += usize::from(ok);
        notes.push(format!("seed {seed}: loss {:.3} -> {:.3}", run.records[0].loss, run.plateau));
        let drift: Vec<f64> = run.records.iter().map(|r| r.max_drift).collect();
        drift_notes.push(format!("{:.2}/{:.2}", drift[drift.len() / 2], drift[drift.len() - 1]));
        if seed == 0 {
            println!(
                "       lambda0 {:.3e} (width-free {:.3e}), rate {:.9}",
                run.lambda0,
                run.lambda0 * 4096.0 * 2.0,
                run.rate
            );
        }
    }
    s.report(
        "9a",
        "one-hidden-layer GIST loss below envelope, d1=4096, n=20, 5/5 seeds",
        below == 5,
        format!("{below}/5 seeds below; {}", notes.join(", ")),
        t,
    );
    println!("       max weight drift at mid/final round per seed: {}", drift_notes.join(", "));

    let t = Instant::now();
    let mut monotone = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let g = theory_graph(seed);
        let plateaus: Vec<f64> = [256, 1024, 4096]
            .iter()
            .map(|&d1| run_theory_experiment(&theory_cfg(d1, seed), &g).unwrap().plateau)
            .collect();
        monotone += usize::from(plateaus.windows(2).all(|w| w[1] < w[0]));
        notes.push(plateaus.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(" > "));
    }
    s.report(
        "9b",
        "plateau decreases across d1 in {256, 1024, 4096}, 5/5 seeds",
        monotone == 5,
        format!("{monotone}/5 monotone; {}", notes.join("; ")),
        t,
    );

    let t = Instant::now();
    let m = 2;
    let g = theory_graph(0);
    let avg = mean(&(0..50).map(|seed| initial_loss(&g, m, 4096, seed).unwrap()).collect::<Vec<_>>());
    let bound = initial_loss_bound(&g, m);
    s.report(
        "9c",
        "mean initial loss over 50 seeds <= 1.2 x (C^2 n + (d/m^2)||A^2||_1,1)",
        avg <= 1.2 * bound,
        format!("mean {avg:.3} vs bound {bound:.3}"),
        t,
    );
}

// default SBM, trained with the Cora GIST protocol (m=2, zeta=20, 256-dim, 400 epochs)
fn sbm_suite_graph(seed: u64) -> Graph {
    synth_sbm(&SbmConfig { seed, ..SbmConfig::default() }).unwrap().graph
}

fn sbm_cfg(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig { mode, m: 2, zeta: 20, hidden: vec![256, 256], epochs: 400, eval_every: 10, seed, ..TrainConfig::default() }
}

fn criterion_10(s: &mut Suite) {
    let t = Instant::now();
    let mut wins = 0;
    let mut notes = Vec::new();
    let mut count_ok = true;
    for seed in 0..5 {
        let g = sbm_suite_graph(seed);
        let gist = train(&sbm_cfg(Mode::Gist, seed), &g, &mut ()).unwrap();
        let ens = train(&sbm_cfg(Mode::Ensemble, seed), &g, &mut ()).unwrap();
        let ga = gist.metrics.last().unwrap().test_acc;
        let ea = ens.metrics.last().unwrap().test_acc;
        wins += usize::from(ga >= ea);
        notes.push(format!("{:.1}/{:.1}", 100.0 * ga, 100.0 * ea));
        let (x, op) = model_inputs(&g, Arch::Gcn, AdjacencyMode::Renorm, true);
        let (_, single_count) = gist.model.predict_proba(&op, &x).unwrap();
        let (_, ens_count) = ens.model.predict_proba(&op, &x).unwrap();
        count_ok &= ens_count == 2 * single_count;
    }
    s.report(
        "10",
        "SBM suite: GIST >= ensemble test accuracy in >= 4/5 seeds; ensemble forwards = m x single",
        wins >= 4 && count_ok,
        format!(
            "GIST wins {wins}/5 (gist/ensemble %: {}); forward counts {}",
            notes.join(", "),
            if count_ok { "2 vs 1" } else { "mismatch" }
        ),
        t,
    );
}

fn strip_wall_clock(text: &str) -> String {
    text.lines()
        .map(|l| match serde_json::from_str::<serde_json::Value>(l) {
            Ok(mut v) => {
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("wall_s");
                }
                v.to_string()
            }
            Err(_) => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_11(s: &mut Suite) {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let sbm = "sbm:n=120,k=4,p_in=0.15,p_out=0.01,d=12,noise=1.0,seed=5";
    let regular = "regular:n=16,p=4,d=5,seed=2";
    let invocations: Vec<Vec<String>> = [
        vec!["train", "--dataset", sbm, "--sub-gcns", "4", "--local-iters", "3", "--clusters", "6", "--batch-clusters", "2", "--hidden", "16,16", "--epochs", "30", "--eval-every", "2", "--dropout", "0.3", "--seed", "11"],
        vec!["train", "--dataset", sbm, "--mode", "local_sgd", "--sub-gcns", "3", "--hidden", "16", "--epochs", "20", "--eval-every", "1"],
        vec!["train", "--dataset", sbm, "--mode", "ensemble", "--sub-gcns", "2", "--hidden", "16", "--epochs", "20", "--arch", "sage"],
        vec!["cluster", "--dataset", sbm, "--clusters", "5", "--seed", "3"],
        vec!["kernel", "--dataset", regular, "--d1", "128", "--sub-gcns", "2"],
        vec!["theory-run", "--dataset", regular, "--d1", "128", "--rounds", "20"],
        vec!["comm-cost", "--dims", "1433,256,256,7", "--sub-gcns", "8"],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect())
    .collect();
    let mut mismatches = Vec::new();
    for args in &invocations {
        let run = |tag: &str| {
            let out_path = dir.path().join(format!("{}-{tag}.jsonl", args[0]));
            let mut full = args.clone();
            if args[0] != "cluster" {
                full.extend(["--output".to_string(), out_path.to_str().unwrap().to_string()]);
            }
            let out = Command::new(env!("CARGO_BIN_EXE_gist")).args(&full).output().unwrap();
            assert!(out.status.success(), "{full:?}: {}", String::from_utf8_lossy(&out.stderr));
            let file = std::fs::read_to_string(&out_path).unwrap_or_default();
            strip_wall_clock(&(String::from_utf8(out.stdout).unwrap() + &file))
        };
        if run("a") != run("b") {
            mismatches.push(args[0].clone());
        }
    }
    s.report(
        "11",
        "CLI replay determinism (byte-identical JSONL apart from wall_s)",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} invocations replayed identically", invocations.len())
        } else {
            format!("differences in {mismatches:?}")
        },
        t,
    );
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut s = Suite { only, passed: 0, failed: 0, skipped: 0 };
    println!("acceptance criteria (tolerances as specified; data dir {})", data_dir().display());
    let criteria: [(&str, fn(&mut Suite)); 12] = [
        ("0", criterion_data),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
        ("10", criterion_10),
        ("11", criterion_11),
        ("1", criterion_1),
        ("2", criterion_2),
    ];
    for (id, run) in criteria {
        if s.wants(id) {
            run(&mut s);
        }
    }
    println!(
        "acceptance summary: {} passed, {} failed, {} skipped",
        s.passed, s.failed, s.skipped
    );
    if s.failed > 0 && std::env::var_os("GIST_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
