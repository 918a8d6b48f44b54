use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pool::{derive_seed, run_steps, Job, Shared, WorkerPool};
use super::{MetricsRecord, Mode, Observer, TrainConfig};
use crate::cluster::{partition_graph, BatchSampler};
use crate::data::row_normalize_features;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph};
use crate::model::{forward, init_glorot, Arch, GcnModel, NodeFeatures, OptimizerState};
use crate::partition::{aggregate, extract_sub_model, sample_partition};
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Independently trained sub-networks whose softmax outputs are averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<GcnModel<f32>>,
    /// Input columns of each member when the input layer was partitioned.
    pub input_cols: Vec<Option<Vec<usize>>>,
    /// Best validation accuracy reached by each member.
    pub member_val_acc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Single(GcnModel<f32>),
    Ensemble(Ensemble),
}

impl TrainedModel {
    pub fn as_model(&self) -> Option<&GcnModel<f32>> {
        match self {
            TrainedModel::Single(m) => Some(m),
            TrainedModel::Ensemble(_) => None,
        }
    }

    /// Class probabilities per node and the number of network forward passes
    /// spent computing them.
    pub fn predict_proba(&self, op: &SparseMatrix<f32>, x: &NodeFeatures<f32>) -> Result<(DenseMatrix<f32>, usize)> {
        match self {
            TrainedModel::Single(m) => Ok((forward(m, op, x)?.0.softmax_rows(), 1)),
            TrainedModel::Ensemble(e) => {
                let mut acc: Option<DenseMatrix<f32>> = None;
                for (member, cols) in e.members.iter().zip(&e.input_cols) {
                    let xi;
                    let input = match cols {
                        Some(c) => {
                            xi = x.select_columns(c)?;
                            &xi
                        }
                        None => x,
                    };
                    let p = forward(member, op, input)?.0.softmax_rows();
                    match acc.as_mut() {
                        Some(a) => a.add_assign(&p)?,
                        None => acc = Some(p),
                    }
                }
                let mut probs = acc.ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
                probs.scale(1.0 / e.members.len() as f32);
                Ok((probs, e.members.len()))
            }
        }
    }
}

pub struct TrainOutput {
    pub model: TrainedModel,
    pub metrics: Vec<MetricsRecord>,
    /// Synchronisation rounds (epochs in single mode).
    pub rounds: usize,
    /// Optimisation steps summed over all workers.
    pub total_steps: usize,
    /// Scalars that crossed worker channels, both directions.
    pub comm_scalars: u64,
}

/// Features and propagation operator used for full-graph training and
/// evaluation.
pub fn model_inputs(g: &Graph, arch: Arch, adjacency: AdjacencyMode, row_normalize: bool) -> (NodeFeatures<f32>, SparseMatrix<f32>) {
    let features = if row_normalize {
        row_normalize_features(&g.features)
    } else {
        g.features.clone()
    };
    (NodeFeatures::auto(features), arch.propagation(g, adjacency))
}

/// Train/val/test accuracy and test micro-F1 of a trained model on the full
/// graph.
pub fn evaluate(model: &TrainedModel, g: &Graph, op: &SparseMatrix<f32>, x: &NodeFeatures<f32>) -> Result<[f64; 4]> {
    let (probs, _) = model.predict_proba(op, x)?;
    Ok(scores(&probs, g))
}

fn scores(out: &DenseMatrix<f32>, g: &Graph) -> [f64; 4] {
    let pred = out.argmax_rows();
    let acc = |mask: &[bool]| {
        let total = mask.iter().filter(|&&b| b).count();
        let hit = (0..pred.len()).filter(|&i| mask[i] && pred[i] == g.labels[i]).count();
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    };
    // micro-averaged F1 over the test nodes: pooled true positives against
    // pooled false positives and false negatives
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for i in (0..pred.len()).filter(|&i| g.test_mask[i]) {
        if pred[i] == g.labels[i] {
            tp += 1;
        } else {
            fp += 1;
            fneg += 1;
        }
    }
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
    [acc(&g.train_mask), acc(&g.val_mask), acc(&g.test_mask), f1]
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    shared: Arc<Shared>,
    obs: &'a mut dyn Observer,
    start: Instant,
    metrics: Vec<MetricsRecord>,
    comm: u64,
}

impl Run<'_> {
    fn record(&mut self, round: usize, loss: f64, model: &TrainedModel) -> Result<()> {
        let (probs, _) = model.predict_proba(&self.shared.op, &self.shared.x)?;
        self.record_output(round, loss, &probs)
    }

    fn record_model(&mut self, round: usize, loss: f64, model: &GcnModel<f32>) -> Result<()> {
        let (logits, _) = forward(model, &self.shared.op, &self.shared.x)?;
        self.record_output(round, loss, &logits)
    }

    fn record_output(&mut self, round: usize, loss: f64, out: &DenseMatrix<f32>) -> Result<()> {
        let [train_acc, val_acc, test_acc, micro_f1] = scores(out, &self.shared.graph);
        let rec = MetricsRecord {
            round,
            mode: self.cfg.mode.as_str().to_string(),
            loss,
            train_acc,
            val_acc,
            test_acc,
            micro_f1,
            wall_s: self.start.elapsed().as_secs_f64(),
            comm_scalars: self.comm,
        };
        self.obs.on_metrics(&rec)?;
        self.metrics.push(rec);
        Ok(())
    }

    fn due(&self, round: usize, last: usize) -> bool {
        round % self.cfg.eval_every == 0 || round == last
    }

    fn pool(&self) -> WorkerPool {
        let threads = match self.cfg.threads {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()).min(self.cfg.m),
            t => t,
        };
        WorkerPool::new(Arc::clone(&self.shared), threads)
    }

    fn samplers(&self, count: usize) -> Result<Vec<BatchSampler>> {
        (0..count)
            .map(|_| BatchSampler::new(&self.shared.clustering, self.cfg.batch_clusters))
            .collect()
    }
}

/// Trains according to `cfg.mode`, reporting metrics and per-round models to
/// `obs`.
pub fn train(cfg: &TrainConfig, g: &Graph, obs: &mut dyn Observer) -> Result<TrainOutput> {
    let k = g.num_classes();
    cfg.validate(g.num_features(), k)?;
    if g.train_mask.iter().all(|&b| !b) {
        return Err(Error::Config("dataset has no training nodes".into()));
    }
    if cfg.clusters > g.num_nodes() {
        return Err(Error::Config(format!("{} clusters for {} nodes", cfg.clusters, g.num_nodes())));
    }
    let dims = cfg.dims(g.num_features(), k);
    let (x, op) = model_inputs(g, cfg.arch, cfg.adjacency, cfg.row_normalize);
    let clustering = partition_graph(g, cfg.clusters, &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 1)))?;
    let shared = Arc::new(Shared {
        graph: g.clone(),
        x,
        op,
        labels: g.labels.clone(),
        clustering,
        arch: cfg.arch,
        adjacency: cfg.adjacency,
        optimizer: cfg.optimizer,
        dropout: cfg.dropout,
        weight_decay: cfg.weight_decay,
    });
    let model: GcnModel<f32> = init_glorot(&dims, cfg.arch, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let bpe = cfg.clusters.div_ceil(cfg.batch_clusters);
    let budget = cfg.epochs * bpe;
    let run = Run {
        cfg,
        shared,
        obs,
        start: Instant::now(),
        metrics: Vec::new(),
        comm: 0,
    };
    match cfg.mode {
        Mode::Single => train_single(run, model, bpe),
        Mode::Gist => train_gist(run, model, budget),
        Mode::LocalSgd => train_local_sgd(run, model, budget),
        Mode::Ensemble => train_ensemble(run, model, budget, bpe),
    }
}

fn finish(run: Run<'_>, model: TrainedModel, rounds: usize, total_steps: usize) -> TrainOutput {
    TrainOutput {
        model,
        metrics: run.metrics,
        rounds,
        total_steps,
        comm_scalars: run.comm,
    }
}

fn train_single(mut run: Run<'_>, mut model: GcnModel<f32>, bpe: usize) -> Result<TrainOutput> {
    let cfg = run.cfg;
    let epochs = cfg.epochs;
    let total = epochs * bpe;
    let shared = Arc::clone(&run.shared);
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let mut sampler = BatchSampler::new(&shared.clustering, cfg.batch_clusters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, 0));
    for epoch in 0..epochs {
        let lrs: Vec<f64> = (epoch * bpe..(epoch + 1) * bpe).map(|s| cfg.lr_at(s, total)).collect();
        let loss = run_steps(&shared, &mut model, &mut opt, &shared.x, &mut sampler, &mut rng, &lrs, |_, _| Ok(()))?;
        let round = epoch + 1;
        run.obs.on_round(round, &model);
        if run.due(round, epochs) {
            run.record_model(round, loss, &model)?;
        }
    }
    if epochs == 0 {
        run.record_model(0, f64::NAN, &model)?;
    }
    Ok(finish(run, TrainedModel::Single(model), epochs, total))
}

fn train_gist(mut run: Run<'_>, mut model: GcnModel<f32>, budget: usize) -> Result<TrainOutput> {
    let cfg = run.cfg;
    let m = cfg.m;
    let rounds = budget.div_ceil(m * cfg.zeta);
    let pool = run.pool();
    let mut samplers = run.samplers(m)?;
    let mut part_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 2));
    for t in 0..rounds {
        let p = sample_partition(&model.dims, m, cfg.partition_input, &mut part_rng)?;
        let lr = cfg.lr_at(t, rounds);
        let mut jobs = Vec::with_capacity(m);
        for (i, sampler) in samplers.drain(..).enumerate() {
            let sub = extract_sub_model(&model, &p, i)?;
            run.comm += sub.num_params() as u64;
            jobs.push(Job {
                worker: i,
                round: t,
                model: sub,
                input_cols: p.is_partitioned(0).then(|| p.block(0, i).to_vec()),
                lrs: vec![lr; cfg.zeta],
                sampler,
                seed: derive_seed(cfg.seed, i as u64, t as u64),
                track_best: None,
            });
        }
        let results = pool.run(jobs)?;
        let mut subs = Vec::with_capacity(m);
        let mut loss = 0.0;
        for r in results {
            run.comm += r.model.num_params() as u64;
            loss += r.mean_loss / m as f64;
            samplers.push(r.sampler);
            subs.push(r.model);
        }
        aggregate(&mut model, &subs, &p)?;
        let round = t + 1;
        run.obs.on_round(round, &model);
        if run.due(round, rounds) {
            run.record_model(round, loss, &model)?;
        }
    }
    if rounds == 0 {
        run.record_model(0, f64::NAN, &model)?;
    }
    let total_steps = rounds * m * cfg.zeta;
    Ok(finish(run, TrainedModel::Single(model), rounds, total_steps))
}

fn train_local_sgd(mut run: Run<'_>, mut model: GcnModel<f32>, budget: usize) -> Result<TrainOutput> {
    let cfg = run.cfg;
    let m = cfg.m;
    let rounds = budget.div_ceil(m * cfg.zeta);
    let pool = run.pool();
    let mut samplers = run.samplers(m)?;
    let inv = 1.0 / m as f32;
    for t in 0..rounds {
        let lr = cfg.lr_at(t, rounds);
        let mut jobs = Vec::with_capacity(m);
        for (i, sampler) in samplers.drain(..).enumerate() {
            run.comm += model.num_params() as u64;
            jobs.push(Job {
                worker: i,
                round: t,
                model: model.clone(),
                input_cols: None,
                lrs: vec![lr; cfg.zeta],
                sampler,
                seed: derive_seed(cfg.seed, i as u64, t as u64),
                track_best: None,
            });
        }
        let results = pool.run(jobs)?;
        let mut sum = model.zeros_like();
        let mut loss = 0.0;
        for r in results {
            run.comm += r.model.num_params() as u64;
            loss += r.mean_loss / m as f64;
            for (s, w) in sum.iter_mut().zip(&r.model.weights) {
                s.add_assign(w)?;
            }
            samplers.push(r.sampler);
        }
        for (w, s) in model.weights.iter_mut().zip(sum) {
            *w = s.scaled(inv);
        }
        let round = t + 1;
        run.obs.on_round(round, &model);
        if run.due(round, rounds) {
            run.record_model(round, loss, &model)?;
        }
    }
    if rounds == 0 {
        run.record_model(0, f64::NAN, &model)?;
    }
    let total_steps = rounds * m * cfg.zeta;
    Ok(finish(run, TrainedModel::Single(model), rounds, total_steps))
}

fn train_ensemble(mut run: Run<'_>, model: GcnModel<f32>, budget: usize, bpe: usize) -> Result<TrainOutput> {
    let cfg = run.cfg;
    let m = cfg.m;
    let steps = budget.div_ceil(m);
    let pool = run.pool();
    let samplers = run.samplers(m)?;
    let mut part_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, 2));
    let p = sample_partition(&model.dims, m, cfg.partition_input, &mut part_rng)?;
    let lrs: Vec<f64> = (0..steps).map(|s| cfg.lr_at(s, steps)).collect();
    let mut jobs = Vec::with_capacity(m);
    let mut input_cols = Vec::with_capacity(m);
    for (i, sampler) in samplers.into_iter().enumerate() {
        let sub = extract_sub_model(&model, &p, i)?;
        run.comm += sub.num_params() as u64;
        let cols = p.is_partitioned(0).then(|| p.block(0, i).to_vec());
        input_cols.push(cols.clone());
        jobs.push(Job {
            worker: i,
            round: 0,
            model: sub,
            input_cols: cols,
            lrs: lrs.clone(),
            sampler,
            seed: derive_seed(cfg.seed, i as u64, 0),
            track_best: Some(bpe * cfg.eval_every),
        });
    }
    let results = pool.run(jobs)?;
    let mut members = Vec::with_capacity(m);
    let mut member_val_acc = Vec::with_capacity(m);
    let mut loss = 0.0;
    for r in results {
        run.comm += r.model.num_params() as u64;
        loss += r.mean_loss / m as f64;
        member_val_acc.push(r.best_val.unwrap_or(0.0));
        members.push(r.model);
    }
    let ensemble = TrainedModel::Ensemble(Ensemble {
        members,
        input_cols,
        member_val_acc,
    });
    run.obs.on_round(1, &model);
    run.record(1, loss, &ensemble)?;
    Ok(finish(run, ensemble, 1, steps * m))
}
