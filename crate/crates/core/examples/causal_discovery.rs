//! Recovers a planted linear structural equation model with NOTEARS.
//!
//! ```text
//! cargo run --release --example causal_discovery
//! ```

use nalgebra::DMatrix;
use phenokg::causal::{fit_notears, NotearsConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> phenokg::Result<()> {
    // sleep -> stress -> anxiety, sleep -> gpa, stress -> gpa
    let names = ["sleep", "stress", "anxiety", "gpa"];
    let truth = [(0, 1, -1.2), (1, 2, 0.9), (0, 3, 0.7), (1, 3, -0.8)];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1000;
    let mut x = DMatrix::<f64>::zeros(n, names.len());
    for r in 0..n {
        for j in 0..names.len() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[(r, j)] = noise + truth.iter().filter(|e| e.1 == j).map(|e| e.2 * x[(r, e.0)]).sum::<f64>();
        }
    }

    let g = fit_notears(&x, 0, &NotearsConfig::default())?;
    println!("h = {:.2e}, converged = {}", g.h_final, g.converged);
    for e in &g.edges {
        println!("{:>8} -> {:<8} {:+.3}", names[e.from], names[e.to], e.weight);
    }
    Ok(())
}
