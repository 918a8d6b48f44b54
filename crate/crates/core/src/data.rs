//! Dataset files, synthetic generators and feature preprocessing.
//!
//! A dataset directory holds four UTF-8 files:
//!
//! * `meta.json`: `{"name": str, "num_classes": int, "num_features": int}`
//! * `nodes.tsv`: `node_id \t f_1 … f_d \t label`, one row per node in id order
//! * `edges.tsv`: `u \t v`, one undirected edge per line
//! * `splits.tsv`: `node_id \t train|val|test`

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub num_classes: usize,
    pub graph: Graph,
    /// Self-loop lines skipped while loading.
    pub self_loops_dropped: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    name: String,
    num_classes: usize,
    num_features: usize,
}

fn read(dir: &Path, file: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(file);
    match fs::read_to_string(&path) {
        Ok(text) => Ok((path, text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(e.into()),
    }
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_index(file: &Path, line: usize, field: &str, n: usize) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| parse_err(file, line, format!("bad node id {field:?}")))?;
    if v >= n {
        return Err(parse_err(file, line, format!("node id {v} out of range for {n} nodes")));
    }
    Ok(v)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let (meta_path, meta_text) = read(dir, "meta.json")?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let (nodes_path, nodes_text) = read(dir, "nodes.tsv")?;
    let (edges_path, edges_text) = read(dir, "edges.tsv")?;
    let (splits_path, splits_text) = read(dir, "splits.tsv")?;
    let d = meta.num_features;
    let k = meta.num_classes;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in nodes_text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != d + 2 {
            return Err(Error::RaggedRow {
                file: nodes_path,
                line: lineno,
                expected: d,
                found: fields.len().saturating_sub(2),
            });
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(&nodes_path, lineno, format!("bad node id {:?}", fields[0])))?;
        if id != labels.len() {
            return Err(parse_err(
                &nodes_path,
                lineno,
                format!("expected node id {}, found {id}", labels.len()),
            ));
        }
        for f in &fields[1..=d] {
            let v: f32 = f
                .parse()
                .map_err(|_| parse_err(&nodes_path, lineno, format!("bad feature value {f:?}")))?;
            features.push(v);
        }
        let label: i64 = fields[d + 1]
            .parse()
            .map_err(|_| parse_err(&nodes_path, lineno, format!("bad label {:?}", fields[d + 1])))?;
        if label < 0 || label as u64 >= k as u64 {
            return Err(Error::LabelOutOfRange {
                file: nodes_path,
                line: lineno,
                label,
                num_classes: k,
            });
        }
        labels.push(label as usize);
    }
    let n = labels.len();

    let mut edges = Vec::new();
    for (i, line) in edges_text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(&edges_path, i + 1, "expected two node ids"));
        };
        edges.push((parse_index(&edges_path, i + 1, u, n)?, parse_index(&edges_path, i + 1, v, n)?));
    }

    const SPLITS: [&str; 3] = ["train", "val", "test"];
    let mut split_of: Vec<Option<usize>> = vec![None; n];
    for (i, line) in splits_text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let (Some(node), Some(split), None) = (it.next(), it.next(), it.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(&splits_path, i + 1, "expected node id and split name"));
        };
        let node = parse_index(&splits_path, i + 1, node, n)?;
        let s = SPLITS
            .iter()
            .position(|&name| name == split)
            .ok_or_else(|| parse_err(&splits_path, i + 1, format!("unknown split {split:?}")))?;
        match split_of[node] {
            Some(prev) if prev != s => {
                return Err(Error::OverlappingMasks {
                    node,
                    first: SPLITS[prev].into(),
                    second: SPLITS[s].into(),
                })
            }
            _ => split_of[node] = Some(s),
        }
    }
    let mask = |s: usize| split_of.iter().map(|&x| x == Some(s)).collect::<Vec<_>>();
    let (train, val, test) = (mask(0), mask(1), mask(2));
    for (name, m) in [("train", &train), ("test", &test)] {
        if !m.iter().any(|&b| b) {
            return Err(parse_err(&splits_path, 0, format!("no {name} nodes")));
        }
    }
    let x = DenseMatrix::new(n, d, features)?;
    let (graph, self_loops) = Graph::new(n, edges, x, labels, train, val, test)?;
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loop(s)", edges_path.display());
    }
    Ok(DatasetBundle {
        name: meta.name,
        num_classes: k,
        graph,
        self_loops_dropped: self_loops,
    })
}

/// Writes the canonical form: shortest round-trip floats, edges as sorted
/// `u < v` pairs, splits in node order.
pub fn save_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let g = &bundle.graph;
    let meta = Meta {
        name: bundle.name.clone(),
        num_classes: bundle.num_classes,
        num_features: g.num_features(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string(&meta)? + "\n")?;
    let mut nodes = String::new();
    for i in 0..g.num_nodes() {
        write!(nodes, "{i}").expect("write to string");
        for v in g.features.row(i) {
            write!(nodes, "\t{v}").expect("write to string");
        }
        writeln!(nodes, "\t{}", g.labels[i]).expect("write to string");
    }
    fs::write(dir.join("nodes.tsv"), nodes)?;
    let mut edges = String::new();
    for &(u, v) in g.edges() {
        writeln!(edges, "{u}\t{v}").expect("write to string");
    }
    fs::write(dir.join("edges.tsv"), edges)?;
    let mut splits = String::new();
    for i in 0..g.num_nodes() {
        let name = if g.train_mask[i] {
            "train"
        } else if g.val_mask[i] {
            "val"
        } else if g.test_mask[i] {
            "test"
        } else {
            continue;
        };
        writeln!(splits, "{i}\t{name}").expect("write to string");
    }
    fs::write(dir.join("splits.tsv"), splits)?;
    Ok(())
}

/// Scales every row with a nonzero ℓ1 norm to ℓ1 norm 1.
pub fn row_normalize_features(x: &DenseMatrix<f32>) -> DenseMatrix<f32> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm: f32 = row.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

fn random_masks(n: usize, rng: &mut impl Rng) -> (Vec<bool>, Vec<bool>, Vec<bool>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (n * 6).div_ceil(10);
    let n_val = n / 5;
    let mut masks = (vec![false; n], vec![false; n], vec![false; n]);
    for (pos, &v) in order.iter().enumerate() {
        if pos < n_train {
            masks.0[v] = true;
        } else if pos < n_train + n_val {
            masks.1[v] = true;
        } else {
            masks.2[v] = true;
        }
    }
    masks
}

fn scale_rows_to(x: &mut DenseMatrix<f32>, norm: f64) {
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let cur = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if cur > 0.0 {
            row.iter_mut().for_each(|v| *v = (*v as f64 * norm / cur) as f32);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
    /// When set, every feature row is rescaled to ℓ2 norm `(1 − ε) / 2`.
    pub theory_eps: Option<f64>,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 200,
            k: 4,
            p_in: 0.1,
            p_out: 0.01,
            d: 16,
            noise: 1.0,
            seed: 0,
            theory_eps: None,
        }
    }
}

/// Stochastic block model with contiguous balanced blocks. Features are the
/// one-hot block indicator plus Gaussian noise; labels are block ids; nodes
/// are split 60/20/20 at random.
pub fn synth_sbm(cfg: &SbmConfig) -> Result<DatasetBundle> {
    let SbmConfig {
        n,
        k,
        p_in,
        p_out,
        d,
        noise,
        seed,
        theory_eps,
    } = *cfg;
    if n == 0 || k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("sbm needs 1 <= k <= n, got n={n}, k={k}")));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_in <= p_out {
        return Err(Error::InvalidArgument(format!(
            "sbm needs 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if d < k {
        return Err(Error::InvalidArgument(format!("sbm feature dim {d} is smaller than k = {k}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("sbm noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut x = DenseMatrix::from_fn(n, d, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        (f64::from(u8::from(j == labels[i])) + noise * z) as f32
    });
    if let Some(eps) = theory_eps {
        scale_rows_to(&mut x, (1.0 - eps) / 2.0);
    }
    let (train, val, test) = random_masks(n, &mut rng);
    let (graph, _) = Graph::new(n, edges, x, labels, train, val, test)?;
    Ok(DatasetBundle {
        name: format!("sbm-n{n}-k{k}-s{seed}"),
        num_classes: k,
        graph,
        self_loops_dropped: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularConfig {
    pub n: usize,
    /// Common degree.
    pub p: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for RegularConfig {
    fn default() -> Self {
        Self {
            n: 20,
            p: 4,
            d: 8,
            k: 2,
            seed: 0,
        }
    }
}

/// Random `p`-regular graph with Gaussian features scaled to ℓ2 norm 1/2
/// and uniformly random labels. Built from a circulant graph shuffled by
/// degree-preserving double-edge swaps.
pub fn synth_regular(cfg: &RegularConfig) -> Result<DatasetBundle> {
    let RegularConfig { n, p, d, k, seed } = *cfg;
    if p == 0 || p >= n || (p % 2 == 1 && n % 2 == 1) {
        return Err(Error::InvalidArgument(format!(
            "no simple {p}-regular graph on {n} nodes to start from"
        )));
    }
    if d == 0 || k == 0 {
        return Err(Error::InvalidArgument("regular graph needs d >= 1 and k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = std::collections::BTreeSet::new();
    for u in 0..n {
        for off in 1..=p / 2 {
            let v = (u + off) % n;
            edges.insert((u.min(v), u.max(v)));
        }
        if p % 2 == 1 {
            let v = (u + n / 2) % n;
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let mut list: Vec<(usize, usize)> = edges.iter().copied().collect();
    for _ in 0..10 * list.len() {
        let i = rng.gen_range(0..list.len());
        let j = rng.gen_range(0..list.len());
        let ((a, b), (c, e)) = (list[i], list[j]);
        let (na, nb) = if rng.gen_bool(0.5) { ((a, c), (b, e)) } else { ((a, e), (b, c)) };
        let canon = |(x, y): (usize, usize)| (x.min(y), x.max(y));
        let (na, nb) = (canon(na), canon(nb));
        if na.0 == na.1 || nb.0 == nb.1 || na == nb || edges.contains(&na) || edges.contains(&nb) {
            continue;
        }
        edges.remove(&list[i]);
        edges.remove(&list[j]);
        edges.insert(na);
        edges.insert(nb);
        list[i] = na;
        list[j] = nb;
    }
    let mut x = DenseMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal) as f32);
    scale_rows_to(&mut x, 0.5);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let (train, val, test) = random_masks(n, &mut rng);
    let (graph, _) = Graph::new(n, edges, x, labels, train, val, test)?;
    Ok(DatasetBundle {
        name: format!("regular-n{n}-p{p}-s{seed}"),
        num_classes: k,
        graph,
        self_loops_dropped: 0,
    })
}

fn parse_kv<T: for<'de> Deserialize<'de>>(spec: &str) -> Result<T> {
    let mut obj = serde_json::Map::new();
    for part in spec.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {part:?}")))?;
        let v: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        obj.insert(key.trim().to_string(), v);
    }
    serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))
}

/// Resolves a dataset argument: a directory path, `sbm:key=value,…` or
/// `regular:key=value,…`.
pub fn resolve_dataset(spec: &str) -> Result<DatasetBundle> {
    if let Some(rest) = spec.strip_prefix("sbm:") {
        synth_sbm(&parse_kv(rest)?)
    } else if let Some(rest) = spec.strip_prefix("regular:") {
        synth_regular(&parse_kv(rest)?)
    } else {
        load_dataset(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_dir(nodes: &str, edges: &str, splits: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("meta.json"), r#"{"name": "toy", "num_classes": 2, "num_features": 2}"#).unwrap();
        fs::write(dir.path().join("nodes.tsv"), nodes).unwrap();
        fs::write(dir.path().join("edges.tsv"), edges).unwrap();
        fs::write(dir.path().join("splits.tsv"), splits).unwrap();
        dir
    }

    const NODES: &str = "0\t1\t0\t0\n1\t0\t1\t1\n2\t0.5\t0.5\t1\n";
    const SPLITS: &str = "0\ttrain\n1\tval\n2\ttest\n";

    #[test]
    fn loads_and_canonicalises_edges() {
        let dir = write_dir(NODES, "1\t0\n0\t1\n2 1\n", SPLITS);
        let b = load_dataset(dir.path()).unwrap();
        assert_eq!(b.graph.num_nodes(), 3);
        assert_eq!(b.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(b.graph.labels, vec![0, 1, 1]);
        assert_eq!(b.graph.train_mask, vec![true, false, false]);
        assert_eq!(b.num_classes, 2);
    }

    #[test]
    fn self_loop_is_counted() {
        let dir = write_dir(NODES, "0\t1\n2\t2\n", SPLITS);
        let b = load_dataset(dir.path()).unwrap();
        assert_eq!(b.self_loops_dropped, 1);
        assert_eq!(b.graph.num_edges(), 1);
    }

    #[test]
    fn distinct_errors() {
        let missing = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(missing.path()), Err(Error::MissingFile(_))));
        let ragged = write_dir("0\t1\t0\t0\n1\t0\t1\n", "", "0\ttrain\n1\ttest\n");
        assert!(matches!(
            load_dataset(ragged.path()),
            Err(Error::RaggedRow { line: 2, expected: 2, found: 1, .. })
        ));
        let label = write_dir("0\t1\t0\t2\n", "", "0\ttrain\n");
        assert!(matches!(load_dataset(label.path()), Err(Error::LabelOutOfRange { label: 2, .. })));
        let overlap = write_dir(NODES, "", "0\ttrain\n0\ttest\n2\ttest\n");
        assert!(matches!(load_dataset(overlap.path()), Err(Error::OverlappingMasks { node: 0, .. })));
        let bad_edge = write_dir(NODES, "0\t9\n", SPLITS);
        assert!(matches!(load_dataset(bad_edge.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let dir = write_dir(NODES, "0\t1\n1\t2\n", SPLITS);
        let b = load_dataset(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        save_dataset(&b, out.path()).unwrap();
        let again = load_dataset(out.path()).unwrap();
        assert_eq!(again, b);
        let out2 = tempfile::tempdir().unwrap();
        save_dataset(&again, out2.path()).unwrap();
        for f in ["meta.json", "nodes.tsv", "edges.tsv", "splits.tsv"] {
            assert_eq!(fs::read(out.path().join(f)).unwrap(), fs::read(out2.path().join(f)).unwrap());
        }
        assert_eq!(fs::read_to_string(out.path().join("nodes.tsv")).unwrap(), NODES);
    }

    #[test]
    fn row_normalisation() {
        let x = DenseMatrix::from_rows(&[[2.0f32, 2.0], [0.0, 0.0]]).unwrap();
        let y = row_normalize_features(&x);
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert_eq!(y.row(1), &[0.0, 0.0]);
        assert_eq!(row_normalize_features(&y), y);
    }

    #[test]
    fn separable_sbm() {
        let b = synth_sbm(&SbmConfig {
            n: 40,
            k: 4,
            p_in: 0.5,
            p_out: 0.0,
            d: 4,
            noise: 0.0,
            seed: 3,
            theory_eps: None,
        })
        .unwrap();
        let g = &b.graph;
        for &(u, v) in g.edges() {
            assert_eq!(g.labels[u], g.labels[v]);
        }
        // argmax of the features recovers the label exactly
        for i in 0..g.num_nodes() {
            assert_eq!(g.features.row(i)[g.labels[i]], 1.0);
        }
        assert_eq!(g.train_mask.iter().filter(|&&b| b).count(), 24);
        assert_eq!(g.val_mask.iter().filter(|&&b| b).count(), 8);
        assert_eq!(g.test_mask.iter().filter(|&&b| b).count(), 8);
    }

    #[test]
    fn sbm_rejects_degenerate_probabilities() {
        let base = SbmConfig::default();
        assert!(synth_sbm(&SbmConfig { p_in: 0.1, p_out: 0.1, ..base.clone() }).is_err());
        assert!(synth_sbm(&SbmConfig { p_in: 1.5, ..base.clone() }).is_err());
        assert!(synth_sbm(&SbmConfig { d: 2, ..base }).is_err());
    }

    #[test]
    fn sbm_edge_count_matches_binomial_mean() {
        let (n, k, p_in, p_out) = (60usize, 3usize, 0.2, 0.02);
        let size = n / k;
        let within = (k * size * (size - 1) / 2) as f64;
        let cross = (n * (n - 1) / 2) as f64 - within;
        let mean = within * p_in + cross * p_out;
        let var = within * p_in * (1.0 - p_in) + cross * p_out * (1.0 - p_out);
        let seeds = 100;
        let total: usize = (0..seeds)
            .map(|s| synth_sbm(&SbmConfig { n, k, p_in, p_out, d: 3, noise: 0.1, seed: s, theory_eps: None }).unwrap().graph.num_edges())
            .sum();
        let avg = total as f64 / seeds as f64;
        assert!((avg - mean).abs() < 3.0 * (var / seeds as f64).sqrt(), "{avg} vs {mean}");
    }

    #[test]
    fn sbm_neighbours_mostly_share_labels() {
        let b = synth_sbm(&SbmConfig { n: 120, k: 3, p_in: 0.2, p_out: 0.01, d: 3, noise: 1.0, seed: 5, theory_eps: None }).unwrap();
        let g = &b.graph;
        let adj = g.neighbors();
        let agree = (0..g.num_nodes())
            .filter(|&v| {
                let same = adj[v].iter().filter(|&&u| g.labels[u] == g.labels[v]).count();
                2 * same > adj[v].len()
            })
            .count();
        assert!(agree as f64 > 0.9 * g.num_nodes() as f64);
    }

    #[test]
    fn theory_scaling() {
        let b = synth_sbm(&SbmConfig { theory_eps: Some(0.2), ..SbmConfig::default() }).unwrap();
        for i in 0..b.graph.num_nodes() {
            let norm: f64 = b.graph.features.row(i).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn spec_strings() {
        let b = resolve_dataset("sbm:n=30,k=3,p_in=0.3,p_out=0.01,d=5,seed=2").unwrap();
        assert_eq!(b.graph.num_nodes(), 30);
        assert_eq!(b, resolve_dataset("sbm:n=30,k=3,p_in=0.3,p_out=0.01,d=5,seed=2").unwrap());
        let r = resolve_dataset("regular:n=12,p=3,seed=1").unwrap();
        assert!(r.graph.degrees().iter().all(|&d| d == 3));
        assert!(matches!(resolve_dataset("sbm:bogus=1"), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn regular_graphs_are_regular(n in 5usize..40, p in 1usize..6, seed in any::<u64>()) {
            prop_assume!(p < n && !(p % 2 == 1 && n % 2 == 1));
            let b = synth_regular(&RegularConfig { n, p, d: 3, k: 2, seed }).unwrap();
            prop_assert!(b.graph.degrees().iter().all(|&d| d == p));
        }
    }
}
