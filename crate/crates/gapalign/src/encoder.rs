//! Two-layer message-passing encoder with a linear projection head.
//!
//! Forward pass: `H = rownorm( A_hat * relu(A_hat * X * W1) * W2 * P )` where
//! `A_hat = D^{-1/2}(A+I)D^{-1/2}`. Row normalization is part of the encoder
//! so cosine similarity against unit prototypes reduces to a dot product.
//!
//! Neighborhood aggregation sums products in value-sorted order, which makes
//! the result independent of how node ids are assigned. That is what lets the
//! permutation-equivariance guarantee hold bitwise instead of approximately.

use crate::graphdata::TagGraph;
use crate::linalg::{self, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid dimension: {0}")]
    BadDimension(String),
    #[error("checkpoint io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
}

/// Encoder weights. `proj` maps the hidden width to the prototype dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Mat,
    pub w2: Mat,
    pub proj: Mat,
}

impl EncoderParams {
    pub fn d(&self) -> usize {
        self.w1.nrows()
    }
    pub fn d_hidden(&self) -> usize {
        self.w1.ncols()
    }
    pub fn d_out(&self) -> usize {
        self.proj.ncols()
    }
}

/// Gradients with the same shapes as [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub w1: Mat,
    pub w2: Mat,
    pub proj: Mat,
}

impl EncoderGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        Self {
            w1: Mat::zeros(p.w1.dim()),
            w2: Mat::zeros(p.w2.dim()),
            proj: Mat::zeros(p.proj.dim()),
        }
    }
}

/// Sparse symmetric-normalized adjacency with self-loops,
/// `A_hat = D^{-1/2}(A+I)D^{-1/2}`, stored as per-row (index, weight) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `A_hat * v` for a dense matrix `v`.
    ///
    /// Each row's neighbors are visited in a canonical order derived from the
    /// operand values themselves (lexicographic over the neighbor's value row,
    /// weight as tie-break), not from node ids. Renumbering the nodes permutes
    /// neighbor lists but leaves the visit order of (weight, value-row) pairs
    /// unchanged, so the accumulated sums are bitwise identical under
    /// permutation.
    pub fn apply(&self, v: &Mat) -> Mat {
        assert_eq!(v.nrows(), self.rows.len(), "spmv shape mismatch");
        let cols = v.ncols();
        let vs = v.as_slice().expect("standard layout");
        let mut out = Mat::zeros((self.rows.len(), cols));
        {
            let outs = out.as_slice_mut().expect("standard layout");
            let mut order: Vec<(usize, f64)> = Vec::new();
            for (i, row) in self.rows.iter().enumerate() {
                order.clear();
                order.extend_from_slice(row);
                order.sort_unstable_by(|a, b| {
                    let ra = &vs[a.0 * cols..a.0 * cols + cols];
                    let rb = &vs[b.0 * cols..b.0 * cols + cols];
                    for (x, y) in ra.iter().zip(rb) {
                        let ord = x.total_cmp(y);
                        if ord != std::cmp::Ordering::Equal {
                            return ord;
                        }
                    }
                    a.1.total_cmp(&b.1)
                });
                let orow = &mut outs[i * cols..(i + 1) * cols];
                for &(j, w) in order.iter() {
                    let vrow = &vs[j * cols..j * cols + cols];
                    for (o, x) in orow.iter_mut().zip(vrow) {
                        *o += w * x;
                    }
                }
            }
        }
        out
    }
}

/// Builds `A_hat` with weights `1/sqrt((deg_u+1)(deg_v+1))`. The row of an
/// isolated node is exactly `{(self, 1.0)}`.
pub fn normalize_adjacency(g: &TagGraph) -> NormAdjacency {
    let deg = g.degrees();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..g.n_nodes)
        .map(|i| vec![(i, 1.0 / (deg[i] as f64 + 1.0))])
        .collect();
    for &(u, v) in &g.edges {
        let w = 1.0 / (((deg[u] as f64 + 1.0) * (deg[v] as f64 + 1.0)).sqrt());
        rows[u].push((v, w));
        rows[v].push((u, w));
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    NormAdjacency { rows }
}

/// Xavier-uniform initialization, bound `sqrt(6/(fan_in+fan_out))` per matrix.
pub fn init_params(
    d: usize,
    d_hidden: usize,
    d_out: usize,
    seed: u64,
) -> Result<EncoderParams, EncoderError> {
    for (name, v) in [("d", d), ("d_hidden", d_hidden), ("d_out", d_out)] {
        if v == 0 {
            return Err(EncoderError::BadDimension(format!("{name} must be > 0")));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sample = |rows: usize, cols: usize| -> Mat {
        let bound = (6.0 / (rows as f64 + cols as f64)).sqrt();
        let mut m = Mat::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let u: f64 = rng.random();
                m[[i, j]] = bound * (2.0 * u - 1.0);
            }
        }
        m
    };
    Ok(EncoderParams {
        w1: sample(d, d_hidden),
        w2: sample(d_hidden, d_hidden),
        proj: sample(d_hidden, d_out),
    })
}

fn check_shapes(p: &EncoderParams, adj: &NormAdjacency, x: &Mat) -> Result<(), EncoderError> {
    if x.nrows() != adj.n_nodes() {
        return Err(EncoderError::ShapeMismatch(format!(
            "{} feature rows for {} adjacency rows",
            x.nrows(),
            adj.n_nodes()
        )));
    }
    if x.ncols() != p.d() {
        return Err(EncoderError::ShapeMismatch(format!(
            "feature dim {} does not match W1 input dim {}",
            x.ncols(),
            p.d()
        )));
    }
    if p.w2.nrows() != p.d_hidden() || p.w2.ncols() != p.d_hidden() {
        return Err(EncoderError::ShapeMismatch("W2 must be d_hidden x d_hidden".into()));
    }
    if p.proj.nrows() != p.d_hidden() {
        return Err(EncoderError::ShapeMismatch("P rows must equal d_hidden".into()));
    }
    Ok(())
}

struct ForwardTrace {
    m1: Mat,   // A_hat X
    z1: Mat,   // M1 W1
    a1: Mat,   // relu(Z1)
    w2p: Mat,  // W2 P, the collapsed head
    y: Mat,    // A_hat (A1 W2 P), pre-normalization
    norms: Vec<f64>,
}

// The head is evaluated as A_hat (A1 (W2 P)) so both sparse propagations run
// over the narrow output width; by associativity this is the same map as
// ((A_hat A1) W2) P but costs O(nnz d_out) instead of O(nnz d_hidden).
fn forward(p: &EncoderParams, adj: &NormAdjacency, x: &Mat) -> ForwardTrace {
    let m1 = adj.apply(x);
    let z1 = linalg::matmul(&m1, &p.w1);
    let a1 = z1.mapv(|v| if v > 0.0 { v } else { 0.0 });
    let w2p = linalg::matmul(&p.w2, &p.proj);
    let b = linalg::matmul(&a1, &w2p);
    let y = adj.apply(&b);
    let norms: Vec<f64> = y
        .rows()
        .into_iter()
        .map(|r| linalg::norm(r.as_slice().expect("contiguous row")))
        .collect();
    ForwardTrace { m1, z1, a1, w2p, y, norms }
}

/// Encodes all nodes to L2-normalized rows. Rows whose pre-normalization norm
/// is zero come out as zero rows.
pub fn encode(p: &EncoderParams, adj: &NormAdjacency, x: &Mat) -> Result<Mat, EncoderError> {
    check_shapes(p, adj, x)?;
    let tr = forward(p, adj, x);
    let mut h = tr.y;
    for (i, mut row) in h.rows_mut().into_iter().enumerate() {
        let r = tr.norms[i];
        if r > 0.0 {
            row.mapv_inplace(|v| v / r);
        }
    }
    Ok(h)
}

/// Analytic gradients of `<upstream, encode(p, adj, x)>` with respect to the
/// three weight matrices. The relu subgradient at 0 is taken as 0; rows whose
/// pre-normalization norm is zero contribute nothing.
pub fn encode_backward(
    p: &EncoderParams,
    adj: &NormAdjacency,
    x: &Mat,
    upstream: &Mat,
) -> Result<EncoderGrads, EncoderError> {
    check_shapes(p, adj, x)?;
    if upstream.nrows() != x.nrows() || upstream.ncols() != p.d_out() {
        return Err(EncoderError::ShapeMismatch(format!(
            "upstream {}x{} does not match output {}x{}",
            upstream.nrows(),
            upstream.ncols(),
            x.nrows(),
            p.d_out()
        )));
    }
    let tr = forward(p, adj, x);

    // Jacobian of row normalization: d(y/r) applied to u is (u - (u.yhat) yhat)/r.
    let d_out = p.d_out();
    let mut g_y = Mat::zeros(tr.y.dim());
    for i in 0..tr.y.nrows() {
        let r = tr.norms[i];
        if r == 0.0 {
            continue;
        }
        let mut u_dot_yhat = 0.0;
        for k in 0..d_out {
            u_dot_yhat += upstream[[i, k]] * tr.y[[i, k]] / r;
        }
        for k in 0..d_out {
            let yhat = tr.y[[i, k]] / r;
            g_y[[i, k]] = (upstream[[i, k]] - u_dot_yhat * yhat) / r;
        }
    }

    // A_hat is symmetric, so the adjoint of apply() is apply() itself.
    let g_b = adj.apply(&g_y);
    let g_w2p = linalg::matmul_tn(&tr.a1, &g_b);
    let g_w2 = linalg::matmul_nt(&g_w2p, &p.proj);
    let g_proj = linalg::matmul_tn(&p.w2, &g_w2p);
    let g_a1 = linalg::matmul_nt(&g_b, &tr.w2p);
    let mut g_z1 = g_a1;
    for (g, &z) in g_z1.iter_mut().zip(tr.z1.iter()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    let g_w1 = linalg::matmul_tn(&tr.m1, &g_z1);

    Ok(EncoderGrads {
        w1: g_w1,
        w2: g_w2,
        proj: g_proj,
    })
}

fn fmt17(x: f64) -> String {
    // 17 significant digits round-trip any f64 exactly
    format!("{x:.16e}")
}

fn mat_json(m: &Mat) -> String {
    let vals: Vec<String> = m.iter().map(|&x| fmt17(x)).collect();
    format!("[{}]", vals.join(","))
}

/// Writes a checkpoint with shape metadata and row-major weight arrays.
pub fn save_params(p: &EncoderParams, path: &Path) -> Result<(), EncoderError> {
    let json = format!(
        "{{\n  \"d\": {},\n  \"d_hidden\": {},\n  \"d_out\": {},\n  \"w1\": {},\n  \"w2\": {},\n  \"p\": {}\n}}\n",
        p.d(),
        p.d_hidden(),
        p.d_out(),
        mat_json(&p.w1),
        mat_json(&p.w2),
        mat_json(&p.proj),
    );
    std::fs::write(path, json).map_err(|source| EncoderError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_params(path: &Path) -> Result<EncoderParams, EncoderError> {
    let text = std::fs::read_to_string(path).map_err(|source| EncoderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| EncoderError::Parse(e.to_string()))?;
    let dim = |key: &str| -> Result<usize, EncoderError> {
        v.get(key)
            .and_then(|x| x.as_u64())
            .map(|x| x as usize)
            .ok_or_else(|| EncoderError::Parse(format!("missing field {key}")))
    };
    let (d, d_hidden, d_out) = (dim("d")?, dim("d_hidden")?, dim("d_out")?);
    let mat = |key: &str, rows: usize, cols: usize| -> Result<Mat, EncoderError> {
        let arr = v
            .get(key)
            .and_then(|x| x.as_array())
            .ok_or_else(|| EncoderError::Parse(format!("missing array {key}")))?;
        if arr.len() != rows * cols {
            return Err(EncoderError::Parse(format!(
                "{key}: expected {} values, found {}",
                rows * cols,
                arr.len()
            )));
        }
        let vals: Option<Vec<f64>> = arr.iter().map(|x| x.as_f64()).collect();
        let vals = vals.ok_or_else(|| EncoderError::Parse(format!("{key}: non-numeric entry")))?;
        Mat::from_shape_vec((rows, cols), vals)
            .map_err(|e| EncoderError::Parse(e.to_string()))
    };
    Ok(EncoderParams {
        w1: mat("w1", d, d_hidden)?,
        w2: mat("w2", d_hidden, d_hidden)?,
        proj: mat("p", d_hidden, d_out)?,
    })
}
