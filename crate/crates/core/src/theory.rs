//! Kernel quantities and the one-hidden-layer training procedure used to
//! probe the convergence analysis of GIST.
//!
//! The network is `ŷ = (1/√d₁) Ā σ(ĀXΘ) a` with fixed output signs `a`;
//! everything here runs in 64-bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph};
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Tolerance below which a smallest eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// Arc-cosine NTK Gram matrix,
/// `H_ij = ⟨x̂_i, x̂_j⟩ (π − ∠(x̂_i, x̂_j)) / (2π (d₁ m))`.
pub fn ntk_gram(xhat: &DenseMatrix<f64>, m: usize, d1: usize) -> Result<DenseMatrix<f64>> {
    if m == 0 || d1 == 0 {
        return Err(Error::InvalidArgument("ntk_gram needs m >= 1 and d1 >= 1".into()));
    }
    let n = xhat.rows();
    let norms: Vec<f64> = (0..n).map(|i| xhat.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(node) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroNormRow { node });
    }
    let scale = 1.0 / (d1 as f64 * m as f64);
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = xhat.row(i).iter().zip(xhat.row(j)).map(|(a, b)| a * b).sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let v = scale * dot * (PI - cos.acos()) / (2.0 * PI);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    Ok(h)
}

/// `Ā H Ā`, symmetrised.
pub fn gist_kernel(abar: &SparseMatrix<f64>, h_inf: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
    if abar.rows() != abar.cols() || abar.cols() != h_inf.rows() || h_inf.rows() != h_inf.cols() {
        return Err(Error::shape(
            "gist_kernel",
            format!(
                "abar {}x{} with h {}x{}",
                abar.rows(),
                abar.cols(),
                h_inf.rows(),
                h_inf.cols()
            ),
        ));
    }
    let ah = abar.spmm(h_inf)?;
    // (ĀH)Ā = (Āᵀ (ĀH)ᵀ)ᵀ
    let g = abar.spmm_t(&ah.transpose())?.transpose();
    let gt = g.transpose();
    Ok(g.zip_map(&gt, |a, b| 0.5 * (a + b))?)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::shape("symmetric_eigenvalues", format!("{}x{} is not square", n, a.cols())));
    }
    for i in 0..n {
        for j in i + 1..n {
            let diff = (a.get(i, j) - a.get(j, i)).abs();
            if !(diff <= 1e-9) {
                return Err(Error::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    let mut w: Vec<f64> = a.data().to_vec();
    let total: f64 = w.iter().map(|v| v * v).sum();
    let at = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[at(i, j)] * w[at(i, j)])
            .sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[at(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[at(q, q)] - w[at(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = w[at(k, p)];
                    let akq = w[at(k, q)];
                    w[at(k, p)] = c * akp - s * akq;
                    w[at(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = w[at(p, k)];
                    let aqk = w[at(q, k)];
                    w[at(p, k)] = c * apk - s * aqk;
                    w[at(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| w[at(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(a: &DenseMatrix<f64>) -> Result<f64> {
    symmetric_eigenvalues(a)?
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidArgument("empty matrix has no eigenvalues".into()))
}

/// Sum of the entries of `Ā²`, which is its entrywise ℓ1 norm when `Ā` is
/// nonnegative.
pub fn abar_l1_norm(abar: &SparseMatrix<f64>) -> f64 {
    let mut row_sums = vec![0.0; abar.rows()];
    let mut col_sums = vec![0.0; abar.cols()];
    for r in 0..abar.rows() {
        for (c, v) in abar.row_entries(r) {
            row_sums[r] += v;
            col_sums[c] += v;
        }
    }
    // 1ᵀ Ā Ā 1 = (Āᵀ1) · (Ā1)
    col_sums.iter().zip(&row_sums).map(|(a, b)| a * b).sum()
}

/// Per-round contraction factor `γ + (1 − γ)(1 − ηλ₀/2)^ζ`.
pub fn predicted_rate(gamma: f64, eta: f64, lambda0: f64, zeta: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(eta > 0.0) || !lambda0.is_finite() {
        return Err(Error::InvalidArgument(format!("need eta > 0 and finite lambda0, got {eta} and {lambda0}")));
    }
    if eta * lambda0 >= 2.0 {
        return Err(Error::InvalidArgument(format!(
            "eta * lambda0 = {} must be below 2",
            eta * lambda0
        )));
    }
    Ok(gamma + (1.0 - gamma) * (1.0 - eta * lambda0 / 2.0).powi(zeta as i32))
}

/// Regression targets in `[-1, 1]`: class ids spread evenly, so binary
/// labels become `±1`.
pub fn theory_targets(labels: &[usize], num_classes: usize) -> Vec<f64> {
    if num_classes < 2 {
        return vec![0.0; labels.len()];
    }
    let mid = (num_classes - 1) as f64 / 2.0;
    labels.iter().map(|&l| (l as f64 - mid) / mid).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionResults {
    /// Nonsingular aggregation matrix.
    pub nonsingular_abar: Verdict,
    pub lambda_min_abar: f64,
    /// Degrees within `[(1−ε)²p, (1+ε)²p]`.
    pub degree_concentration: Verdict,
    pub p: f64,
    pub eps: f64,
    /// `‖x_i‖ ≤ (1−ε)/2` for every node.
    pub feature_norms: Verdict,
    /// No two feature rows are parallel.
    pub nonparallel_features: Verdict,
    pub parallel_pair: Option<(usize, usize)>,
    /// `‖x̂_i‖ ≤ 1` with `X̂ = ĀX`.
    pub propagated_norms: Verdict,
    pub max_propagated_norm: f64,
    /// `max |y_i|`.
    pub c: f64,
}

impl AssumptionResults {
    pub fn all_pass(&self) -> bool {
        [
            &self.nonsingular_abar,
            &self.degree_concentration,
            &self.feature_norms,
            &self.nonparallel_features,
            &self.propagated_norms,
        ]
        .iter()
        .all(|v| v.pass)
    }

    fn failures(&self) -> String {
        [
            ("nonsingular_abar", &self.nonsingular_abar),
            ("degree_concentration", &self.degree_concentration),
            ("feature_norms", &self.feature_norms),
            ("nonparallel_features", &self.nonparallel_features),
            ("propagated_norms", &self.propagated_norms),
        ]
        .iter()
        .filter(|(_, v)| !v.pass)
        .map(|(name, v)| format!("{name}: {}", v.detail))
        .collect::<Vec<_>>()
        .join("; ")
    }
}

fn feature_matrix(g: &Graph) -> DenseMatrix<f64> {
    g.features.cast()
}

fn degree_eps(min: f64, max: f64, p: f64) -> f64 {
    (1.0 - (min / p).sqrt()).max((max / p).sqrt() - 1.0)
}

pub fn check_assumptions(g: &Graph) -> Result<AssumptionResults> {
    let abar: SparseMatrix<f64> = g.normalized_adjacency(AdjacencyMode::Chebyshev);
    let lambda_min_abar = min_eigenvalue(&abar.to_dense())?;
    let nonsingular_abar = Verdict {
        pass: lambda_min_abar.abs() > ZERO_EIGENVALUE_TOL,
        detail: format!("lambda_min(abar) = {lambda_min_abar:.3e}"),
    };

    let stats = g.degree_stats();
    let (lo, hi) = (stats.min as f64, stats.max as f64);
    let (p, eps) = if stats.max == 0 {
        (0.0, 1.0)
    } else {
        // integer candidates plus the continuous optimum ((√lo + √hi)/2)²
        let star = ((lo.sqrt() + hi.sqrt()) / 2.0).powi(2);
        (stats.min.max(1)..=stats.max)
            .map(|p| p as f64)
            .chain(std::iter::once(star))
            .map(|p| (p, degree_eps(lo, hi, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty range")
    };
    let degree_concentration = Verdict {
        pass: eps < 1.0,
        detail: format!("degrees in [{}, {}], p = {p:.4}, eps = {eps:.4}", stats.min, stats.max),
    };

    let x = feature_matrix(g);
    let n = x.rows();
    let norms: Vec<f64> = (0..n).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let bound = (1.0 - eps) / 2.0;
    // features are stored in f32
    let slack = 1e-6;
    let worst = norms.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1));
    let feature_norms = match worst {
        Some((i, v)) if v > bound + slack => Verdict {
            pass: false,
            detail: format!("node {i} has norm {v:.6} > (1 - eps)/2 = {bound:.6}"),
        },
        _ => Verdict {
            pass: true,
            detail: format!("max norm {:.6} <= {bound:.6}", worst.map_or(0.0, |w| w.1)),
        },
    };

    let mut parallel_pair = None;
    'outer: for i in 0..n {
        for j in i + 1..n {
            let cos = if norms[i] == 0.0 || norms[j] == 0.0 {
                1.0
            } else {
                x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum::<f64>() / (norms[i] * norms[j])
            };
            if cos.abs() >= 1.0 - 1e-12 {
                parallel_pair = Some((i, j));
                break 'outer;
            }
        }
    }
    let nonparallel_features = Verdict {
        pass: parallel_pair.is_none(),
        detail: match parallel_pair {
            Some((i, j)) => format!("features of nodes {i} and {j} are parallel"),
            None => "no parallel pair".into(),
        },
    };

    let xhat = abar.spmm(&x)?;
    let max_propagated_norm = (0..n)
        .map(|i| xhat.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let propagated_norms = Verdict {
        pass: max_propagated_norm <= 1.0 + slack,
        detail: format!("max ||x_hat_i|| = {max_propagated_norm:.6}"),
    };
    let c = theory_targets(&g.labels, g.num_classes()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(AssumptionResults {
        nonsingular_abar,
        lambda_min_abar,
        degree_concentration,
        p,
        eps,
        feature_norms,
        nonparallel_features,
        parallel_pair,
        propagated_norms,
        max_propagated_norm,
        c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub h_inf: DenseMatrix<f64>,
    pub g_inf: DenseMatrix<f64>,
    pub lambda0: f64,
    pub lambda_min_h: f64,
    pub lambda_min_abar: f64,
    pub assumption_results: AssumptionResults,
}

/// Kernel matrices and assumption checks for `g` with the Chebyshev
/// aggregation matrix.
pub fn kernel_report(g: &Graph, m: usize, d1: usize) -> Result<KernelReport> {
    let assumption_results = check_assumptions(g)?;
    let abar: SparseMatrix<f64> = g.normalized_adjacency(AdjacencyMode::Chebyshev);
    let xhat = abar.spmm(&feature_matrix(g))?;
    let h_inf = ntk_gram(&xhat, m, d1)?;
    let g_inf = gist_kernel(&abar, &h_inf)?;
    Ok(KernelReport {
        lambda0: min_eigenvalue(&g_inf)?,
        lambda_min_h: min_eigenvalue(&h_inf)?,
        lambda_min_abar: assumption_results.lambda_min_abar,
        h_inf,
        g_inf,
        assumption_results,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub d1: usize,
    pub m: usize,
    pub zeta: usize,
    /// Global rounds.
    pub rounds: usize,
    pub eta: f64,
    pub gamma: f64,
    /// Failure probability of the convergence statement; reported only.
    pub delta: f64,
    pub seed: u64,
    /// Run even when the graph fails the assumption checks.
    pub force: bool,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            d1: 4096,
            m: 2,
            zeta: 5,
            rounds: 200,
            eta: 0.05,
            gamma: 0.5,
            delta: 0.1,
            seed: 0,
            force: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRecord {
    pub round: usize,
    pub loss: f64,
    pub max_drift: f64,
    pub predicted_envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRun {
    pub lambda0: f64,
    pub rate: f64,
    /// Final loss, used as the additive term of the envelope.
    pub plateau: f64,
    pub records: Vec<TheoryRecord>,
}

/// One-hidden-layer network state for the theory procedure.
#[derive(Clone, Debug)]
pub struct ShallowNet {
    /// `d₁ × d`; row `r` is `θ_r`.
    pub theta: DenseMatrix<f64>,
    /// Fixed output signs.
    pub a: Vec<f64>,
}

impl ShallowNet {
    pub fn init(d: usize, d1: usize, rng: &mut impl Rng) -> Self {
        let theta = DenseMatrix::from_fn(d1, d, |_, _| rng.sample(StandardNormal));
        let a = (0..d1).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        Self { theta, a }
    }

    /// `scale · Ā σ(X̂ Θ_Sᵀ) a_S` over the neurons in `rows`.
    pub fn output(&self, abar: &SparseMatrix<f64>, xhat: &DenseMatrix<f64>, rows: &[usize], scale: f64) -> Result<Vec<f64>> {
        let th = self.theta.select_rows(rows)?;
        let z = xhat.matmul_nt(&th)?;
        let mut hidden = DenseMatrix::zeros(z.rows(), 1);
        for i in 0..z.rows() {
            let s: f64 = z.row(i).iter().zip(rows).map(|(&v, &r)| v.max(0.0) * self.a[r]).sum();
            hidden.set(i, 0, scale * s);
        }
        Ok(abar.spmm(&hidden)?.into_data())
    }

    /// Gradient of `½‖ŷ_S − y‖²` with respect to `θ_r`, `r ∈ rows`, where
    /// `ŷ_S` uses `scale`. Row `k` of the result belongs to `rows[k]`.
    pub fn gradient(
        &self,
        abar: &SparseMatrix<f64>,
        xhat: &DenseMatrix<f64>,
        y: &[f64],
        rows: &[usize],
        scale: f64,
    ) -> Result<DenseMatrix<f64>> {
        let yhat = self.output(abar, xhat, rows, scale)?;
        let resid = DenseMatrix::from_fn(y.len(), 1, |i, _| yhat[i] - y[i]);
        let u = abar.spmm_t(&resid)?;
        let th = self.theta.select_rows(rows)?;
        let z = xhat.matmul_nt(&th)?;
        let gate = DenseMatrix::from_fn(z.rows(), z.cols(), |i, k| {
            if z.get(i, k) >= 0.0 {
                u.get(i, 0) * scale * self.a[rows[k]]
            } else {
                0.0
            }
        });
        gate.matmul_tn(xhat)
    }
}

/// Runs the masked one-hidden-layer procedure on `g` with squared loss and
/// plain gradient descent. Hidden neurons are assigned to sub-networks by
/// fresh iid uniform draws each round; every sub-network takes `zeta` local
/// steps on its own output `(1/√d₁) Ā σ(X̂Θ_S) a_S`, and the reported loss
/// uses the averaged full output `(1/(m√d₁)) Ā σ(X̂Θ) a`.
pub fn run_theory_experiment(cfg: &TheoryConfig, g: &Graph) -> Result<TheoryRun> {
    if cfg.m == 0 || cfg.d1 == 0 {
        return Err(Error::Config("theory run needs m >= 1 and d1 >= 1".into()));
    }
    if !(cfg.eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {}", cfg.eta)));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", cfg.gamma)));
    }
    let report = kernel_report(g, cfg.m, cfg.d1)?;
    if !report.assumption_results.all_pass() && !cfg.force {
        return Err(Error::AssumptionFailed(report.assumption_results.failures()));
    }
    let rate = predicted_rate(cfg.gamma, cfg.eta, report.lambda0, cfg.zeta)?;
    let abar: SparseMatrix<f64> = g.normalized_adjacency(AdjacencyMode::Chebyshev);
    let xhat = abar.spmm(&feature_matrix(g))?;
    let y = theory_targets(&g.labels, g.num_classes());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = ShallowNet::init(xhat.cols(), cfg.d1, &mut rng);
    let theta0 = net.theta.clone();
    let all: Vec<usize> = (0..cfg.d1).collect();
    let sub_scale = 1.0 / (cfg.d1 as f64).sqrt();
    let full_scale = sub_scale / cfg.m as f64;
    let loss = |net: &ShallowNet| -> Result<f64> {
        let yhat = net.output(&abar, &xhat, &all, full_scale)?;
        Ok(yhat.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum())
    };
    let drift = |net: &ShallowNet| {
        (0..cfg.d1)
            .map(|r| {
                net.theta
                    .row(r)
                    .iter()
                    .zip(theta0.row(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    };
    let mut trace = vec![(loss(&net)?, 0.0)];
    for _ in 0..cfg.rounds {
        let mut blocks = vec![Vec::new(); cfg.m];
        for r in 0..cfg.d1 {
            blocks[rng.gen_range(0..cfg.m)].push(r);
        }
        // blocks are disjoint, so adding each worker's change to θ_t is the
        // same as writing its final rows back
        for rows in blocks.iter().filter(|b| !b.is_empty()) {
            let mut sub = ShallowNet {
                theta: net.theta.select_rows(rows)?,
                a: rows.iter().map(|&r| net.a[r]).collect(),
            };
            let local: Vec<usize> = (0..rows.len()).collect();
            for _ in 0..cfg.zeta {
                let grad = sub.gradient(&abar, &xhat, &y, &local, sub_scale)?;
                sub.theta.axpy(-cfg.eta, &grad)?;
            }
            for (k, &r) in rows.iter().enumerate() {
                net.theta.row_mut(r).copy_from_slice(sub.theta.row(k));
            }
        }
        let l = loss(&net)?;
        if !l.is_finite() {
            return Err(Error::NonFinite("theory loss"));
        }
        trace.push((l, drift(&net)));
    }
    let loss0 = trace[0].0;
    let plateau = trace.last().map_or(loss0, |t| t.0);
    let records = trace
        .into_iter()
        .enumerate()
        .map(|(t, (loss, max_drift))| TheoryRecord {
            round: t,
            loss,
            max_drift,
            predicted_envelope: loss0 * rate.powi(t as i32) + plateau,
        })
        .collect();
    Ok(TheoryRun {
        lambda0: report.lambda0,
        rate,
        plateau,
        records,
    })
}

/// `C²n + (d/m²)‖Ā²‖₁,₁`, the bound on the expected initial loss.
pub fn initial_loss_bound(g: &Graph, m: usize) -> f64 {
    let abar: SparseMatrix<f64> = g.normalized_adjacency(AdjacencyMode::Chebyshev);
    let y = theory_targets(&g.labels, g.num_classes());
    let c = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    c * c * g.num_nodes() as f64 + g.num_features() as f64 / (m * m) as f64 * abar_l1_norm(&abar)
}

/// `‖y − ŷ(0)‖²` for a freshly initialised network.
pub fn initial_loss(g: &Graph, m: usize, d1: usize, seed: u64) -> Result<f64> {
    let abar: SparseMatrix<f64> = g.normalized_adjacency(AdjacencyMode::Chebyshev);
    let xhat = abar.spmm(&feature_matrix(g))?;
    let y = theory_targets(&g.labels, g.num_classes());
    let net = ShallowNet::init(xhat.cols(), d1, &mut ChaCha8Rng::seed_from_u64(seed));
    let all: Vec<usize> = (0..d1).collect();
    let yhat = net.output(&abar, &xhat, &all, 1.0 / (m as f64 * (d1 as f64).sqrt()))?;
    Ok(yhat.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum())
}
