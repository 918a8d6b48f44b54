//! In-process workers that exchange models with the orchestrator only by
//! message passing.

use std::borrow::Cow;
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{BatchSampler, Clustering};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph};
use crate::model::{
    accuracy, backward, forward, forward_with, loss_ce, Arch, Dropout, GcnModel, NodeFeatures, OptimizerKind,
    OptimizerState,
};
use crate::tensor::SparseMatrix;

/// Read-only training inputs shared by every worker.
pub(crate) struct Shared {
    pub graph: Graph,
    pub x: NodeFeatures<f32>,
    pub op: SparseMatrix<f32>,
    pub labels: Vec<usize>,
    pub clustering: Clustering,
    pub arch: Arch,
    pub adjacency: AdjacencyMode,
    pub optimizer: OptimizerKind,
    pub dropout: f64,
    pub weight_decay: f64,
}

pub(crate) struct Job {
    pub worker: usize,
    pub round: usize,
    pub model: GcnModel<f32>,
    /// Input feature columns of a sub-network with a partitioned input layer.
    pub input_cols: Option<Vec<usize>>,
    /// Learning rate of each local step.
    pub lrs: Vec<f64>,
    pub sampler: BatchSampler,
    pub seed: u64,
    /// Keep the parameters with the best validation accuracy, checked every
    /// this many steps and after the last one.
    pub track_best: Option<usize>,
}

pub(crate) struct JobResult {
    pub model: GcnModel<f32>,
    pub sampler: BatchSampler,
    pub mean_loss: f64,
    pub best_val: Option<f64>,
}

/// Stream seed for `(seed, worker, round)`, independent of thread scheduling.
pub(crate) fn derive_seed(seed: u64, worker: u64, round: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ worker) ^ round)
}

/// Runs `lrs.len()` optimisation steps on `model`, drawing one mini-batch per
/// step. Returns the mean training loss over the steps that saw training
/// nodes.
pub(crate) fn run_steps(
    shared: &Shared,
    model: &mut GcnModel<f32>,
    opt: &mut OptimizerState<f32>,
    x: &NodeFeatures<f32>,
    sampler: &mut BatchSampler,
    rng: &mut ChaCha8Rng,
    lrs: &[f64],
    mut after_step: impl FnMut(usize, &GcnModel<f32>) -> Result<()>,
) -> Result<f64> {
    let n = shared.graph.num_nodes();
    let mut total = 0.0;
    let mut counted = 0usize;
    for (s, &lr) in lrs.iter().enumerate() {
        let nodes = sampler.next_nodes(&shared.clustering, rng);
        let (op, xb, labels, mask): (Cow<SparseMatrix<f32>>, Cow<NodeFeatures<f32>>, Cow<[usize]>, Cow<[bool]>) =
            if nodes.len() == n {
                (
                    Cow::Borrowed(&shared.op),
                    Cow::Borrowed(x),
                    Cow::Borrowed(&shared.labels[..]),
                    Cow::Borrowed(&shared.graph.train_mask[..]),
                )
            } else {
                let sub = shared.graph.induced_subgraph(&nodes)?;
                let labels: Vec<usize> = nodes.iter().map(|&v| shared.labels[v]).collect();
                (
                    Cow::Owned(shared.arch.propagation(&sub, shared.adjacency)),
                    Cow::Owned(x.select_rows(&nodes)?),
                    Cow::Owned(labels),
                    Cow::Owned(sub.train_mask),
                )
            };
        if mask.iter().any(|&b| b) {
            let drop = (shared.dropout > 0.0).then(|| Dropout {
                rate: shared.dropout,
                rng: &mut *rng,
            });
            let (logits, tape) = forward_with(model, &op, &xb, drop)?;
            let (loss, dl) = loss_ce(&logits, &labels, &mask)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            let grads = backward(model, &op, &tape, &dl)?;
            opt.step(model, &grads, lr, shared.weight_decay)?;
            total += loss as f64;
            counted += 1;
        }
        after_step(s + 1, model)?;
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}

fn run_job(shared: &Shared, job: Job) -> Result<JobResult> {
    let Job {
        mut model,
        input_cols,
        lrs,
        mut sampler,
        seed,
        track_best,
        ..
    } = job;
    let x: Cow<NodeFeatures<f32>> = match &input_cols {
        Some(cols) => Cow::Owned(shared.x.select_columns(cols)?),
        None => Cow::Borrowed(&shared.x),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = OptimizerState::new(shared.optimizer, &model);
    let steps = lrs.len();
    let mut best: Option<(f64, GcnModel<f32>)> = None;
    let val_mask = &shared.graph.val_mask;
    let mut check = |s: usize, m: &GcnModel<f32>| -> Result<()> {
        if let Some(every) = track_best {
            if s % every == 0 || s == steps {
                let (logits, _) = forward(m, &shared.op, &x)?;
                let acc = accuracy(&logits, &shared.labels, val_mask);
                if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                    best = Some((acc, m.clone()));
                }
            }
        }
        Ok(())
    };
    if track_best.is_some() {
        check(0, &model)?;
    }
    let mean_loss = run_steps(shared, &mut model, &mut opt, &x, &mut sampler, &mut rng, &lrs, &mut check)?;
    let (best_val, model) = match best {
        Some((acc, m)) => (Some(acc), m),
        None => (None, model),
    };
    Ok(JobResult {
        model,
        sampler,
        mean_loss,
        best_val,
    })
}

type Outcome = (usize, usize, Result<JobResult>);

pub(crate) struct WorkerPool {
    jobs: Option<Sender<Job>>,
    results: Receiver<Outcome>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn new(shared: Arc<Shared>, threads: usize) -> Self {
        let (job_tx, job_rx) = mpsc::channel::<Job>();
        let (res_tx, res_rx) = mpsc::channel::<Outcome>();
        let job_rx = Arc::new(Mutex::new(job_rx));
        let handles = (0..threads.max(1))
            .map(|_| {
                let job_rx = Arc::clone(&job_rx);
                let res_tx = res_tx.clone();
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || loop {
                    let next = job_rx.lock().expect("job queue poisoned").recv();
                    let Ok(job) = next else { break };
                    let (worker, round) = (job.worker, job.round);
                    let out = panic::catch_unwind(AssertUnwindSafe(|| run_job(&shared, job)))
                        .unwrap_or_else(|p| {
                            let msg = p
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| p.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "worker panicked".into());
                            Err(Error::Worker { worker, round, msg })
                        });
                    if res_tx.send((worker, round, out)).is_err() {
                        break;
                    }
                })
            })
            .collect();
        Self {
            jobs: Some(job_tx),
            results: res_rx,
            handles,
        }
    }

    /// Dispatches one round of jobs and waits for all of them (a barrier).
    /// Results come back ordered by worker id.
    pub fn run(&self, jobs: Vec<Job>) -> Result<Vec<JobResult>> {
        let count = jobs.len();
        let tx = self.jobs.as_ref().expect("pool is open");
        for job in jobs {
            tx.send(job).map_err(|_| Error::Worker {
                worker: usize::MAX,
                round: 0,
                msg: "worker pool has shut down".into(),
            })?;
        }
        let mut outcomes = Vec::with_capacity(count);
        for _ in 0..count {
            let out = self.results.recv().map_err(|_| Error::Worker {
                worker: usize::MAX,
                round: 0,
                msg: "worker pool has shut down".into(),
            })?;
            outcomes.push(out);
        }
        outcomes.sort_by_key(|o| o.0);
        outcomes
            .into_iter()
            .map(|(worker, round, r)| {
                r.map_err(|e| match e {
                    e @ Error::Worker { .. } => e,
                    e => Error::Worker {
                        worker,
                        round,
                        msg: e.to_string(),
                    },
                })
            })
            .collect()
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.jobs.take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
