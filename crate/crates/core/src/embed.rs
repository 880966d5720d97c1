//! Deterministic message-passing encoder.
//!
//! Node embeddings are `Â^r · V · P` where `Â = D^{-1/2}(A + I)D^{-1/2}` is
//! the self-looped, symmetrically normalized template adjacency and `P` is a
//! seeded semi-orthogonal projection. The graph-level vector is the mean of
//! the node rows.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::StateGraph;
use crate::{rng, Error, Result};

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_ROUNDS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub h: usize,
    pub rounds: usize,
    pub seed: u64,
    /// `input_width × h`. Orthonormal columns when `h <= input_width`,
    /// orthonormal rows otherwise.
    pub projection: DMatrix<f64>,
}

impl EncoderParams {
    pub fn new(input_width: usize, h: usize, rounds: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let (rows, cols) = if h <= input_width { (input_width, h) } else { (h, input_width) };
        let gaussian =
            DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
        let qr = gaussian.qr();
        let mut q = qr.q();
        // Fix the sign ambiguity of Householder QR so the basis is a
        // deterministic function of the Gaussian draw.
        let r = qr.r();
        for j in 0..cols {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let projection = if h <= input_width { q } else { q.transpose() };
        Self { h, rounds, seed, projection }
    }

    pub fn input_width(&self) -> usize {
        self.projection.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    pub state_id: usize,
    pub node_embeddings: DMatrix<f64>,
    pub graph_vector: Vec<f64>,
}

/// `D^{-1/2}(A + I)D^{-1/2}` for the weighted undirected edge list.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::identity(n, n);
    for &(i, ii, w) in edges {
        a[(i, ii)] += w;
        a[(ii, i)] += w;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).sum().sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

pub fn propagation(n: usize, edges: &[(usize, usize, f64)], rounds: usize) -> DMatrix<f64> {
    let a_hat = normalized_adjacency(n, edges);
    let mut out = DMatrix::identity(n, n);
    for _ in 0..rounds {
        out = &a_hat * out;
    }
    out
}

pub fn encode_state(g: &StateGraph, p: &EncoderParams) -> Result<GraphEmbedding> {
    if g.feature_width() != p.input_width() {
        return Err(Error::DimensionMismatch { expected: p.input_width(), got: g.feature_width() });
    }
    let prop = propagation(g.n_nodes(), &g.edges, p.rounds);
    let node_embeddings = prop * &g.node_features * &p.projection;
    if node_embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("node embeddings"));
    }
    let n = node_embeddings.nrows() as f64;
    let graph_vector = (0..node_embeddings.ncols())
        .map(|c| node_embeddings.column(c).sum() / n)
        .collect();
    Ok(GraphEmbedding { state_id: g.state_id, node_embeddings, graph_vector })
}

pub fn encode_corpus(graphs: &[StateGraph], p: &EncoderParams) -> Result<Vec<GraphEmbedding>> {
    graphs.iter().map(|g| encode_state(g, p)).collect()
}
