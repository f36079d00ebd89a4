//! Text-attributed graph data: loading, validation, synthesis, splitting,
//! and ego-subgraph sampling.
//!
//! A [`TagGraph`] is an undirected graph with one dense feature row per node,
//! one class label per node, and one prototype embedding row per class. All
//! operations here are pure and deterministic given their inputs.

mod io;

pub use io::{load_graph, save_graph};

use crate::linalg::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: parse error: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{file}:{line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        file: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{file}: expected {expected} data rows, found {found}")]
    RowCountMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("{file}:{line}: non-finite value")]
    NonFinite { file: String, line: usize },
    #[error("{file}:{line}: label {label} out of range for {n_classes} classes")]
    LabelOutOfRange {
        file: String,
        line: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("{file}:{line}: duplicate edge {u}-{v}")]
    DuplicateEdge {
        file: String,
        line: usize,
        u: usize,
        v: usize,
    },
    #[error("{file}:{line}: self-loop on node {node}")]
    SelfLoop { file: String, line: usize, node: usize },
    #[error("{file}:{line}: node id {node} out of range for {n_nodes} nodes")]
    NodeOutOfRange {
        file: String,
        line: usize,
        node: usize,
        n_nodes: usize,
    },
    #[error("class {0} has no nodes")]
    EmptyClass(usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("center node {center} out of range for {n_nodes} nodes")]
    CenterOutOfRange { center: usize, n_nodes: usize },
    #[error("graph validation failed: {0}")]
    Invalid(String),
}

/// A text-attributed graph with per-class prototype embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TagGraph {
    pub n_nodes: usize,
    pub dim: usize,
    /// Undirected edges in canonical form `(u, v)` with `u < v`, sorted,
    /// no duplicates, no self-loops.
    pub edges: Vec<(usize, usize)>,
    /// N x d node feature matrix.
    pub features: Mat,
    /// Class id per node, each in `[0, n_classes)`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// C x d class-prototype embedding matrix.
    pub text_protos: Mat,
    pub class_names: Option<Vec<String>>,
}

impl TagGraph {
    /// Checks the structural invariants. `require_all_classes` is relaxed for
    /// subgraphs, where a class may legitimately have no members.
    pub fn validate(&self, require_all_classes: bool) -> Result<(), DataError> {
        if self.features.nrows() != self.n_nodes || self.features.ncols() != self.dim {
            return Err(DataError::Invalid(format!(
                "features shape {}x{} does not match n_nodes={} dim={}",
                self.features.nrows(),
                self.features.ncols(),
                self.n_nodes,
                self.dim
            )));
        }
        if self.text_protos.nrows() != self.n_classes || self.text_protos.ncols() != self.dim {
            return Err(DataError::Invalid(format!(
                "text_protos shape {}x{} does not match n_classes={} dim={}",
                self.text_protos.nrows(),
                self.text_protos.ncols(),
                self.n_classes,
                self.dim
            )));
        }
        if self.labels.len() != self.n_nodes {
            return Err(DataError::Invalid(format!(
                "{} labels for {} nodes",
                self.labels.len(),
                self.n_nodes
            )));
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u == v {
                return Err(DataError::Invalid(format!("self-loop on node {u}")));
            }
            if u > v {
                return Err(DataError::Invalid(format!("edge ({u},{v}) not canonical")));
            }
            if v >= self.n_nodes {
                return Err(DataError::Invalid(format!("edge ({u},{v}) out of range")));
            }
            if !seen.insert((u, v)) {
                return Err(DataError::Invalid(format!("duplicate edge ({u},{v})")));
            }
        }
        let mut class_seen = vec![false; self.n_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= self.n_classes {
                return Err(DataError::Invalid(format!(
                    "node {i} has label {y} >= n_classes {}",
                    self.n_classes
                )));
            }
            class_seen[y] = true;
        }
        if require_all_classes {
            if let Some(c) = class_seen.iter().position(|&s| !s) {
                return Err(DataError::EmptyClass(c));
            }
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        if self.text_protos.iter().any(|x| !x.is_finite()) {
            return Err(DataError::Invalid("non-finite prototype value".into()));
        }
        Ok(())
    }

    /// Degree of every node (self-loops are never stored).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        adj
    }

    /// Node ids of every class, sorted.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            members[y].push(i);
        }
        members
    }
}

/// Train/validation/test node-id partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub shots: Option<usize>,
}

/// Configuration for the stochastic-block-model generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub nodes_per_class: usize,
    pub n_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_noise: f64,
    /// Pairwise distance between class centroids.
    pub proto_separation: f64,
    /// Embedding dimension; defaults to `n_classes` when absent. Must be at
    /// least `n_classes` so the centroids stay orthogonal.
    pub dim: Option<usize>,
    pub seed: u64,
}

impl SbmConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.nodes_per_class < 1 {
            return Err(DataError::BadConfig("nodes_per_class must be >= 1".into()));
        }
        if self.n_classes < 1 {
            return Err(DataError::BadConfig("n_classes must be >= 1".into()));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::BadConfig(format!("{name}={p} not in [0,1]")));
            }
        }
        if !(self.feature_noise >= 0.0) {
            return Err(DataError::BadConfig("feature_noise must be >= 0".into()));
        }
        if !(self.proto_separation > 0.0) {
            return Err(DataError::BadConfig("proto_separation must be > 0".into()));
        }
        if let Some(d) = self.dim {
            if d < self.n_classes {
                return Err(DataError::BadConfig(format!(
                    "dim={d} must be >= n_classes={}",
                    self.n_classes
                )));
            }
        }
        Ok(())
    }
}

/// One standard normal draw via Box-Muller; consumes two uniforms.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let mut u1: f64 = rng.random();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.random();
    }
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a stochastic block model graph with Gaussian node features
/// around orthogonal class centroids. Node `i` belongs to class
/// `i / nodes_per_class`; centroid `c` is the one-hot direction `e_c` scaled
/// so that centroids sit at pairwise distance exactly `proto_separation`. The
/// prototype matrix is exactly the centroid matrix.
pub fn synth_sbm(cfg: &SbmConfig) -> Result<TagGraph, DataError> {
    cfg.validate()?;
    let c = cfg.n_classes;
    let n = c * cfg.nodes_per_class;
    let dim = cfg.dim.unwrap_or(c);
    // |a e_i - a e_j| = a sqrt(2) = separation
    let scale = cfg.proto_separation / std::f64::consts::SQRT_2;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_class).collect();

    let mut protos = Mat::zeros((c, dim));
    for j in 0..c {
        protos[[j, j]] = scale;
    }

    let mut features = Mat::zeros((n, dim));
    for i in 0..n {
        for k in 0..dim {
            let noise = if cfg.feature_noise > 0.0 {
                cfg.feature_noise * standard_normal(&mut rng)
            } else {
                0.0
            };
            features[[i, k]] = protos[[labels[i], k]] + noise;
        }
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                cfg.p_intra
            } else {
                cfg.p_inter
            };
            let draw: f64 = rng.random();
            if draw < p {
                edges.push((u, v));
            }
        }
    }

    let g = TagGraph {
        n_nodes: n,
        dim,
        edges,
        features,
        labels,
        n_classes: c,
        text_protos: protos,
        class_names: None,
    };
    g.validate(true)?;
    Ok(g)
}

fn shuffled(ids: &[usize], rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut v = ids.to_vec();
    // Fisher-Yates with an explicit loop so the draw sequence is pinned.
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

/// Stratified train/val/test split. With `shots = Some(k)` the train set gets
/// `min(k, class size)` nodes per class; without shots the train set is empty
/// (zero-shot). Validation is stratified at `val_frac` of the non-train pool;
/// everything else goes to test.
pub fn make_split(
    g: &TagGraph,
    shots: Option<usize>,
    val_frac: f64,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(DataError::BadConfig(format!(
            "val_frac={val_frac} not in (0,1)"
        )));
    }
    let members = g.class_members();
    if let Some(c) = members.iter().position(|m| m.is_empty()) {
        return Err(DataError::EmptyClass(c));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class_nodes in &members {
        let order = shuffled(class_nodes, &mut rng);
        let k = shots.map_or(0, |k| k.min(order.len()));
        train.extend_from_slice(&order[..k]);
        let rest = &order[k..];
        let n_val = ((rest.len() as f64) * val_frac).round() as usize;
        val.extend_from_slice(&rest[..n_val]);
        test.extend_from_slice(&rest[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        train_ids: train,
        val_ids: val,
        test_ids: test,
        shots,
    })
}

/// An induced subgraph with the recorded id remapping:
/// `original_ids[new_id] = old_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSubgraph {
    pub graph: TagGraph,
    pub original_ids: Vec<usize>,
}

/// Induced subgraph on all nodes within `hops` edges of `center`. Node ids
/// are remapped contiguously in ascending original-id order; prototypes are
/// carried over unchanged, so classes absent from the ball stay legal.
///
/// Graph-level tasks can be layered on top by encoding an ego subgraph and
/// mean-pooling its node embeddings; no such head ships here.
pub fn ego_subgraph(g: &TagGraph, center: usize, hops: usize) -> Result<EgoSubgraph, DataError> {
    if center >= g.n_nodes {
        return Err(DataError::CenterOutOfRange {
            center,
            n_nodes: g.n_nodes,
        });
    }
    let adj = g.adjacency_lists();
    let mut dist = vec![usize::MAX; g.n_nodes];
    dist[center] = 0;
    let mut frontier = vec![center];
    for d in 1..=hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = d;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let original_ids: Vec<usize> = (0..g.n_nodes).filter(|&v| dist[v] != usize::MAX).collect();
    let mut new_id = vec![usize::MAX; g.n_nodes];
    for (new, &old) in original_ids.iter().enumerate() {
        new_id[old] = new;
    }
    let n = original_ids.len();
    let mut features = Mat::zeros((n, g.dim));
    let mut labels = Vec::with_capacity(n);
    for (new, &old) in original_ids.iter().enumerate() {
        for k in 0..g.dim {
            features[[new, k]] = g.features[[old, k]];
        }
        labels.push(g.labels[old]);
    }
    let mut edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter(|&&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
        .map(|&(u, v)| {
            let (a, b) = (new_id[u], new_id[v]);
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    edges.sort_unstable();
    Ok(EgoSubgraph {
        graph: TagGraph {
            n_nodes: n,
            dim: g.dim,
            edges,
            features,
            labels,
            n_classes: g.n_classes,
            text_protos: g.text_protos.clone(),
            class_names: g.class_names.clone(),
        },
        original_ids,
    })
}
