use serde::Serialize;

use super::Mode;
use crate::model::Arch;

/// Scalars moved per synchronisation, counted in one direction (orchestrator
/// to worker); the return trip carries the same amount.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommCost {
    pub mode: Mode,
    pub per_worker: Vec<u64>,
    pub total: u64,
}

fn block_sizes(d: usize, m: usize, split: bool) -> Vec<usize> {
    if split {
        (0..m).map(|i| d / m + usize::from(i < d % m)).collect()
    } else {
        vec![d; m]
    }
}

/// Exact per-sync scalar counts. GIST sends worker `i` the blocks
/// `|D_ℓ^(i)|·|D_{ℓ+1}^(i)|`; local SGD sends every worker the whole model;
/// a single model communicates nothing. The ensemble moves GIST's amount
/// once, at the start and end of training.
pub fn comm_cost(mode: Mode, arch: Arch, dims: &[usize], m: usize, partition_input: bool) -> CommCost {
    let m = m.max(1);
    let last = dims.len().saturating_sub(1);
    let rm = arch.row_multiplier() as u64;
    let per_worker: Vec<u64> = match mode {
        Mode::Single => Vec::new(),
        Mode::LocalSgd => {
            let full: u64 = dims.windows(2).map(|w| rm * (w[0] * w[1]) as u64).sum();
            vec![full; m]
        }
        Mode::Gist | Mode::Ensemble => {
            let sizes: Vec<Vec<usize>> = dims
                .iter()
                .enumerate()
                .map(|(l, &d)| block_sizes(d, m, m > 1 && l != last && (l != 0 || partition_input)))
                .collect();
            (0..m)
                .map(|i| (0..last).map(|l| rm * (sizes[l][i] * sizes[l + 1][i]) as u64).sum())
                .collect()
        }
    };
    let total = per_worker.iter().sum();
    CommCost { mode, per_worker, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORA: [usize; 4] = [1433, 256, 256, 7];

    #[test]
    fn cora_counts() {
        let gist = comm_cost(Mode::Gist, Arch::Gcn, &CORA, 2, false);
        assert_eq!(gist.per_worker, vec![200_704, 200_704]);
        assert_eq!(1433 * 128 + 128 * 128 + 128 * 7, 200_704);
        let local = comm_cost(Mode::LocalSgd, Arch::Gcn, &CORA, 2, false);
        assert_eq!(local.per_worker, vec![434_176, 434_176]);
        assert_eq!(local.total, 2 * 434_176);
        let four = comm_cost(Mode::Gist, Arch::Gcn, &CORA, 4, false);
        assert_eq!(four.per_worker[0], 1433 * 64 + 64 * 64 + 64 * 7);
    }

    #[test]
    fn one_worker_moves_the_whole_model() {
        let gist = comm_cost(Mode::Gist, Arch::Gcn, &CORA, 1, true);
        assert_eq!(gist.per_worker, vec![434_176]);
        assert_eq!(comm_cost(Mode::Single, Arch::Gcn, &CORA, 1, false).total, 0);
    }

    #[test]
    fn uneven_blocks_and_sage() {
        let c = comm_cost(Mode::Gist, Arch::Gcn, &[3, 5, 2], 2, true);
        assert_eq!(c.per_worker, vec![2 * 3 + 3 * 2, 1 * 2 + 2 * 2]);
        let s = comm_cost(Mode::Gist, Arch::SageMean, &[3, 4, 2], 2, false);
        assert_eq!(s.per_worker, vec![2 * (3 * 2 + 2 * 2); 2]);
    }
}
