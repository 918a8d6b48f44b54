//! Undirected node-classification graphs and their aggregation operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar, SparseMatrix};

/// Normalisation used to build the aggregation matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`.
    #[default]
    Renorm,
    /// `I + D^{-1/2} A D^{-1/2}`; isolated nodes keep only the identity term.
    Chebyshev,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    pub features: DenseMatrix<f32>,
    pub labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are canonicalised to
    /// `(min, max)`, deduplicated and sorted; self-loops are dropped and
    /// counted in the second return value.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: DenseMatrix<f32>,
        labels: Vec<usize>,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<(Self, usize)> {
        if features.rows() != n || labels.len() != n {
            return Err(Error::shape(
                "Graph::new",
                format!(
                    "n={n} but {} feature rows and {} labels",
                    features.rows(),
                    labels.len()
                ),
            ));
        }
        for mask in [&train_mask, &val_mask, &test_mask] {
            if mask.len() != n {
                return Err(Error::shape(
                    "Graph::new",
                    format!("mask of length {} for {n} nodes", mask.len()),
                ));
            }
        }
        for i in 0..n {
            let hits = [train_mask[i], val_mask[i], test_mask[i]]
                .iter()
                .filter(|&&b| b)
                .count();
            if hits > 1 {
                return Err(Error::InvalidArgument(format!(
                    "node {i} belongs to more than one split"
                )));
            }
        }
        let mut self_loops = 0;
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Index {
                    op: "Graph::new",
                    index: u.max(v),
                    len: n,
                });
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok((
            Self {
                n,
                edges: canon,
                features,
                labels,
                train_mask,
                val_mask,
                test_mask,
            },
            self_loops,
        ))
    }

    /// Unlabelled graph with empty masks and zero-width features; used by
    /// structural tests and the theory module.
    pub fn structure(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Ok(Self::new(
            n,
            edges,
            DenseMatrix::zeros(n, 0),
            vec![0; n],
            vec![false; n],
            vec![false; n],
            vec![false; n],
        )?
        .0)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Subgraph over `nodes` keeping exactly the edges with both endpoints
    /// inside; node `nodes[i]` becomes node `i`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut remap = vec![usize::MAX; self.n];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.n {
                return Err(Error::Index {
                    op: "induced_subgraph",
                    index: old,
                    len: self.n,
                });
            }
            if remap[old] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "induced_subgraph: node {old} listed twice"
                )));
            }
            remap[old] = new;
        }
        let mut edges = Vec::new();
        for &(u, v) in &self.edges {
            let (a, b) = (remap[u], remap[v]);
            if a != usize::MAX && b != usize::MAX {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        let pick = |m: &[bool]| nodes.iter().map(|&i| m[i]).collect::<Vec<_>>();
        Ok(Graph {
            n: nodes.len(),
            edges,
            features: self.features.select_rows(nodes)?,
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
            train_mask: pick(&self.train_mask),
            val_mask: pick(&self.val_mask),
            test_mask: pick(&self.test_mask),
        })
    }

    /// Aggregation matrix `Ā` in the requested normalisation. The matrix is
    /// assembled so that `Ā[u][v]` and `Ā[v][u]` come from the same
    /// floating-point expression, which makes it exactly symmetric.
    pub fn normalized_adjacency<T: Scalar>(&self, mode: AdjacencyMode) -> SparseMatrix<T> {
        let deg = self.degrees();
        let (diag, scale): (Vec<T>, Vec<T>) = match mode {
            AdjacencyMode::Renorm => deg
                .iter()
                .map(|&d| {
                    let dt = T::of(d as f64 + 1.0);
                    (dt.recip(), dt)
                })
                .unzip(),
            AdjacencyMode::Chebyshev => deg.iter().map(|&d| (T::one(), T::of(d as f64))).unzip(),
        };
        let mut triplets = Vec::with_capacity(self.n + 2 * self.edges.len());
        for (i, &d) in diag.iter().enumerate() {
            triplets.push((i, i, d));
        }
        for &(u, v) in &self.edges {
            // (u, v) canonical with u < v, so the product order is fixed
            let w = (scale[u] * scale[v]).sqrt().recip();
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        SparseMatrix::from_triplets(self.n, self.n, &triplets)
            .expect("normalized adjacency indices are in range")
    }

    /// Row-normalised neighbour-mean operator (no self term); isolated nodes
    /// get an empty row.
    pub fn mean_neighbor_operator<T: Scalar>(&self) -> SparseMatrix<T> {
        let deg = self.degrees();
        let mut triplets = Vec::with_capacity(2 * self.edges.len());
        for &(u, v) in &self.edges {
            triplets.push((u, v, T::of(1.0 / deg[u] as f64)));
            triplets.push((v, u, T::of(1.0 / deg[v] as f64)));
        }
        SparseMatrix::from_triplets(self.n, self.n, &triplets)
            .expect("mean operator indices are in range")
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let deg = self.degrees();
        if deg.is_empty() {
            return DegreeStats {
                min: 0,
                max: 0,
                mean: 0.0,
            };
        }
        DegreeStats {
            min: *deg.iter().min().expect("nonempty"),
            max: *deg.iter().max().expect("nonempty"),
            mean: deg.iter().sum::<usize>() as f64 / deg.len() as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}
