//! Training drivers: GIST rounds over a pool of logical workers, plus the
//! single-model, local SGD and sub-network ensemble baselines.

mod comm;
mod pool;
#[cfg(test)]
mod run_tests;
mod train;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use comm::{comm_cost, CommCost};
pub use train::{evaluate, model_inputs, train, Ensemble, TrainOutput, TrainedModel};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMode;
use crate::model::{Arch, OptimizerKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Gist,
    Single,
    #[value(name = "local_sgd", alias = "local-sgd")]
    LocalSgd,
    Ensemble,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gist => "gist",
            Mode::Single => "single",
            Mode::LocalSgd => "local_sgd",
            Mode::Ensemble => "ensemble",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    None,
    #[default]
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub arch: Arch,
    /// Hidden widths; input and output widths come from the dataset.
    pub hidden: Vec<usize>,
    /// Sub-networks (GIST, ensemble) or workers (local SGD).
    pub m: usize,
    /// Local steps per worker between synchronisations.
    pub zeta: usize,
    pub clusters: usize,
    pub batch_clusters: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub partition_input: bool,
    pub adjacency: AdjacencyMode,
    pub seed: u64,
    /// Evaluate every this many rounds (epochs in single mode); the last
    /// round is always evaluated.
    pub eval_every: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub row_normalize: bool,
    /// OS threads backing the worker pool; 0 picks `min(m, cores)`.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Gist,
            arch: Arch::Gcn,
            hidden: vec![256, 256],
            m: 1,
            zeta: 20,
            clusters: 1,
            batch_clusters: 1,
            epochs: 400,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            schedule: Schedule::Step,
            partition_input: false,
            adjacency: AdjacencyMode::Renorm,
            seed: 0,
            eval_every: 10,
            dropout: 0.0,
            weight_decay: 0.0,
            row_normalize: true,
            threads: 0,
        }
    }
}

impl TrainConfig {
    /// Checks the config against itself and against the dataset's input and
    /// output widths.
    pub fn validate(&self, num_features: usize, num_classes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.mode == Mode::Single && self.m != 1 {
            return bad(format!("mode single runs one model, but m = {}", self.m));
        }
        if self.zeta == 0 {
            return bad("zeta must be at least 1".into());
        }
        if self.clusters == 0 || self.batch_clusters == 0 || self.batch_clusters > self.clusters {
            return bad(format!(
                "need 1 <= batch_clusters <= clusters, got {} and {}",
                self.batch_clusters, self.clusters
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if num_features == 0 || num_classes == 0 {
            return bad("dataset has no features or no classes".into());
        }
        if matches!(self.mode, Mode::Gist | Mode::Ensemble) && self.m > 1 {
            if let Some(&h) = self.hidden.iter().find(|&&h| h < self.m) {
                return bad(format!("hidden width {h} cannot be split into {} blocks", self.m));
            }
            if self.partition_input && num_features < self.m {
                return bad(format!("{num_features} input features cannot be split into {} blocks", self.m));
            }
        }
        Ok(())
    }

    pub fn dims(&self, num_features: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(num_features);
        dims.extend_from_slice(&self.hidden);
        dims.push(num_classes);
        dims
    }

    pub fn lr_at(&self, progress: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::None => self.lr,
            Schedule::Step => crate::model::lr_schedule(self.lr, progress, total),
        }
    }
}

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub mode: String,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub micro_f1: f64,
    pub wall_s: f64,
    pub comm_scalars: u64,
}

/// Callbacks invoked by the training loops.
pub trait Observer {
    /// After every round's synchronisation (every epoch in single mode).
    fn on_round(&mut self, _round: usize, _model: &crate::model::GcnModel<f32>) {}

    fn on_metrics(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// Streams metrics as JSON Lines.
pub struct JsonlWriter<W: Write>(pub W);

impl<W: Write> Observer for JsonlWriter<W> {
    fn on_metrics(&mut self, record: &MetricsRecord) -> Result<()> {
        serde_json::to_writer(&mut self.0, record)?;
        self.0.write_all(b"\n")?;
        self.0.flush()?;
        Ok(())
    }
}
