//! Spectral clustering of graph vectors with eigengap model selection and
//! soft assignment of a new point.
//!
//! ```text
//! cargo run --release --example clustering
//! ```

use nalgebra::DMatrix;
use phenokg::embed::GraphEmbedding;
use phenokg::phenotype::{fit_clusters, soft_assign, ClusterConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> phenokg::Result<()> {
    let centers = [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]];
    let noise = Normal::new(0.0, 0.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let states: Vec<GraphEmbedding> = (0..300)
        .map(|i| GraphEmbedding {
            state_id: i,
            node_embeddings: DMatrix::zeros(0, 0),
            graph_vector: centers[i % 3].iter().map(|c| c + noise.sample(&mut rng)).collect(),
        })
        .collect();

    let model = fit_clusters(&states, &ClusterConfig::default())?;
    println!("K = {} (silhouette {:.3})", model.k, model.silhouette);
    println!("leading eigenvalues: {:?}", &model.eigenvalues[..5.min(model.eigenvalues.len())]);
    for (k, m) in model.members.iter().enumerate() {
        println!("cluster {k}: {} members", m.len());
    }

    let between = [2.5, 0.0, 0.0];
    let s = soft_assign(0, &between, &model);
    println!("soft assignment of {between:?}: {:.3?}", s.pi);
    Ok(())
}
