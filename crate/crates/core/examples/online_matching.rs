//! Matches new states against a phenotype model, buffers anomalies
//! and reports when a candidate phenotype is ready for promotion.
//!
//! ```text
//! cargo run --release --example online_matching
//! ```

use phenokg::online::{process_state, sp_projection, CandidateBuffer, IsolationForest, OnlineConfig, OnlineState};
use phenokg::phenotype::{soft_assign, ClusterModel, SpMixture};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> phenokg::Result<()> {
    // Six known phenotypes in a tight ring around +x.
    let centers: Vec<[f64; 3]> = (0..6)
        .map(|k| {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            [1.0, 0.1 * a.cos(), 0.1 * a.sin()]
        })
        .collect();
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let training: Vec<Vec<f64>> =
        (0..300).map(|i| centers[i % 6].iter().map(|c| c + noise.sample(&mut rng)).collect()).collect();
    let model = ClusterModel {
        k: 6,
        centroids: centers.iter().map(|c| c.to_vec()).collect(),
        members: Vec::new(),
        labels: Vec::new(),
        soft_temperature: 0.02,
        silhouette: 0.0,
        eigenvalues: Vec::new(),
        degenerate: false,
    };
    let mixtures: Vec<SpMixture> = (0..6)
        .map(|k| SpMixture::from_similarities(k, (0..6).map(|m| if m == k { 1.0 } else { -1.0 }).collect(), 0.05))
        .collect();

    let cfg = OnlineConfig::default();
    let forest = IsolationForest::fit(&training, &cfg.iforest, 1);
    let mut buffer = CandidateBuffer::default();
    let arrivals: Vec<Vec<f64>> = vec![vec![1.0, 0.1, 0.0], vec![1.0, -0.05, 0.087]]
        .into_iter()
        .chain((0..6).map(|i| vec![-12.0, 0.001 * i as f64, 0.0]))
        .collect();
    for (i, z) in arrivals.into_iter().enumerate() {
        let pi = soft_assign(300 + i, &z, &model).pi;
        let pi_sp = sp_projection(&pi, &mixtures);
        let s = OnlineState { state_id: 300 + i, values: z.clone(), z, pi, pi_sp };
        let r = process_state(&s, &model, &mixtures, &forest, &mut buffer, &cfg)?;
        println!("state {} -> {:?} (s* = {:.3}, anomalous = {})", s.state_id, r.decision.decision, r.decision.score_star, r.anomalous);
        if let Some(c) = r.candidate.filter(|c| c.promoted) {
            println!("  candidate {} reached {} members: promote", c.candidate, c.n_c);
        }
    }
    Ok(())
}
