//! Graph clustering and cluster-union mini-batches.
//!
//! Clusters are grown by balanced round-robin BFS from random seeds, then
//! improved by one Kernighan-Lin style swap pass per pair of adjacent
//! clusters. Swaps keep cluster sizes fixed, so the balance of the growth
//! phase survives refinement.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Clustering {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Clustering {
    /// Builds a clustering from an assignment vector, rejecting empty clusters.
    pub fn from_assignment(assignment: Vec<usize>, c: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); c];
        for (v, &k) in assignment.iter().enumerate() {
            if k >= c {
                return Err(Error::Index {
                    op: "Clustering::from_assignment",
                    index: k,
                    len: c,
                });
            }
            members[k].push(v);
        }
        if let Some(k) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("cluster {k} is empty")));
        }
        Ok(Self { assignment, members })
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Number of edges whose endpoints lie in different clusters.
    pub fn cut_edges(&self, g: &Graph) -> usize {
        g.edges()
            .iter()
            .filter(|&&(u, v)| self.assignment[u] != self.assignment[v])
            .count()
    }
}

/// Splits the graph into `c` clusters whose sizes differ by at most one.
pub fn partition_graph(g: &Graph, c: usize, rng: &mut impl Rng) -> Result<Clustering> {
    let n = g.num_nodes();
    if c == 0 || c > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count must be in 1..={n}, got {c}"
        )));
    }
    let adj = g.neighbors();
    let mut assignment = grow(&adj, n, c, rng);
    refine(&adj, &mut assignment, c);
    Clustering::from_assignment(assignment, c)
}

const UNASSIGNED: usize = usize::MAX;

fn grow(adj: &[Vec<usize>], n: usize, c: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base = n / c;
    let extra = n % c;
    let quota: Vec<usize> = (0..c).map(|k| base + usize::from(k < extra)).collect();
    let mut size = vec![0usize; c];
    let mut assignment = vec![UNASSIGNED; n];
    let mut frontier: Vec<VecDeque<usize>> = vec![VecDeque::new(); c];
    // next position in `order` to look for an unassigned restart node
    let mut cursor = 0;
    let claim = |v: usize, k: usize, assignment: &mut Vec<usize>, frontier: &mut Vec<VecDeque<usize>>, size: &mut Vec<usize>| {
        assignment[v] = k;
        size[k] += 1;
        frontier[k].push_back(v);
    };
    for k in 0..c {
        claim(order[k], k, &mut assignment, &mut frontier, &mut size);
    }
    let mut assigned = c;
    while assigned < n {
        for k in 0..c {
            if size[k] >= quota[k] {
                continue;
            }
            let mut next = None;
            while let Some(&u) = frontier[k].front() {
                if let Some(&v) = adj[u].iter().find(|&&v| assignment[v] == UNASSIGNED) {
                    next = Some(v);
                    break;
                }
                frontier[k].pop_front();
            }
            let v = match next {
                Some(v) => v,
                None => {
                    while assignment[order[cursor]] != UNASSIGNED {
                        cursor += 1;
                    }
                    order[cursor]
                }
            };
            claim(v, k, &mut assignment, &mut frontier, &mut size);
            assigned += 1;
            if assigned == n {
                break;
            }
        }
    }
    assignment
}

/// Moving `v` from its cluster `a` to `b` changes the cut by `-gain(v)`.
fn move_gain(adj: &[Vec<usize>], assignment: &[usize], v: usize, a: usize, b: usize) -> i64 {
    let mut g = 0i64;
    for &u in &adj[v] {
        if assignment[u] == b {
            g += 1;
        } else if assignment[u] == a {
            g -= 1;
        }
    }
    g
}

/// Candidate pool per side; keeps a pass near-linear on large graphs.
const SWAP_CANDIDATES: usize = 64;

fn refine(adj: &[Vec<usize>], assignment: &mut [usize], c: usize) {
    if c < 2 {
        return;
    }
    let mut pairs = BTreeSet::new();
    for (u, nbrs) in adj.iter().enumerate() {
        for &v in nbrs {
            let (a, b) = (assignment[u], assignment[v]);
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (v, &k) in assignment.iter().enumerate() {
        members[k].push(v);
    }
    for (a, b) in pairs {
        let swaps = kl_pass(adj, assignment, &members, a, b);
        for (x, y) in swaps {
            assignment[x] = b;
            assignment[y] = a;
            members[a].retain(|&v| v != x);
            members[b].retain(|&v| v != y);
            members[a].push(y);
            members[b].push(x);
        }
    }
}

/// One Kernighan-Lin pass between clusters `a` and `b`. Returns the best
/// prefix of tentative swaps if its total gain is positive.
fn kl_pass(
    adj: &[Vec<usize>],
    assignment: &[usize],
    members: &[Vec<usize>],
    a: usize,
    b: usize,
) -> Vec<(usize, usize)> {
    let mut work = assignment.to_vec();
    let top = |side: &[usize], from: usize, to: usize, work: &[usize]| {
        let mut c: Vec<(i64, usize)> = side
            .iter()
            .map(|&v| (move_gain(adj, work, v, from, to), v))
            .collect();
        c.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        c.truncate(SWAP_CANDIDATES);
        c.into_iter().map(|(_, v)| v).collect::<Vec<_>>()
    };
    let mut left = top(&members[a], a, b, &work);
    let mut right = top(&members[b], b, a, &work);
    let mut swaps = Vec::new();
    let mut total = 0i64;
    let mut best = (0i64, 0usize);
    while !left.is_empty() && !right.is_empty() {
        let mut pick: Option<(i64, usize, usize)> = None;
        for (i, &x) in left.iter().enumerate() {
            let gx = move_gain(adj, &work, x, a, b);
            for (j, &y) in right.iter().enumerate() {
                let gy = move_gain(adj, &work, y, b, a);
                let shared = i64::from(adj[x].binary_search(&y).is_ok());
                let gain = gx + gy - 2 * shared;
                if pick.map_or(true, |p| gain > p.0) {
                    pick = Some((gain, i, j));
                }
            }
        }
        let (gain, i, j) = pick.expect("both sides non-empty");
        let (x, y) = (left.swap_remove(i), right.swap_remove(j));
        work[x] = b;
        work[y] = a;
        total += gain;
        swaps.push((x, y));
        if total > best.0 {
            best = (total, swaps.len());
        }
    }
    swaps.truncate(best.1);
    swaps
}

/// Draws mini-batches as unions of `q` clusters, visiting every cluster
/// exactly once per epoch.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    q: usize,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(clustering: &Clustering, q: usize) -> Result<Self> {
        let c = clustering.num_clusters();
        if q == 0 || q > c {
            return Err(Error::InvalidArgument(format!(
                "clusters per batch must be in 1..={c}, got {q}"
            )));
        }
        Ok(Self {
            q,
            order: (0..c).collect(),
            pos: c,
        })
    }

    /// Batches per epoch, `⌈c / q⌉`; the last batch of an epoch may hold
    /// fewer clusters.
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.q)
    }

    /// Cluster ids of the next batch.
    pub fn next_clusters(&mut self, rng: &mut impl Rng) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.q).min(self.order.len());
        let ids = self.order[self.pos..end].to_vec();
        self.pos = end;
        ids
    }

    /// Sorted node ids of the next batch.
    pub fn next_nodes(&mut self, clustering: &Clustering, rng: &mut impl Rng) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .next_clusters(rng)
            .into_iter()
            .flat_map(|k| clustering.members(k).iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes
    }
}

/// Next mini-batch: the subgraph induced by the union of `q` sampled clusters.
pub fn make_batch(
    g: &Graph,
    clustering: &Clustering,
    sampler: &mut BatchSampler,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, Graph)> {
    if clustering.assignment().len() != g.num_nodes() {
        return Err(Error::shape(
            "make_batch",
            format!("clustering covers {} nodes, graph has {}", clustering.assignment().len(), g.num_nodes()),
        ));
    }
    let nodes = sampler.next_nodes(clustering, rng);
    let sub = g.induced_subgraph(&nodes)?;
    Ok((nodes, sub))
}
