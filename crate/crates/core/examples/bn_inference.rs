//! Fits a discrete Bayesian network and queries it: posteriors, Markov
//! blanket and directed influence.
//!
//! ```text
//! cargo run --example bn_inference
//! ```

use phenokg::probnet::{fit_bn_discrete, influence, markov_blanket, posterior, Query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> phenokg::Result<()> {
    // screen time -> sleep -> mood, three bins each
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy = |v: usize, rng: &mut ChaCha8Rng| if rng.random::<f64>() < 0.8 { v } else { rng.random_range(0..3) };
    let rows: Vec<Vec<usize>> = (0..2000)
        .map(|_| {
            let screen = rng.random_range(0..3);
            let sleep = noisy(2 - screen, &mut rng);
            let mood = noisy(sleep, &mut rng);
            vec![screen, sleep, mood]
        })
        .collect();
    let names: Vec<String> = ["screen_time", "sleep", "mood"].map(String::from).to_vec();
    let bn = fit_bn_discrete(0, names.clone(), &rows, vec![3, 3, 3], vec![vec![], vec![0], vec![1]], 1.0);

    println!("P(mood)                    = {:.3?}", posterior(&bn, &Query::marginal(2))?);
    println!("P(mood | screen_time=high) = {:.3?}", posterior(&bn, &Query::given(2, &[(0, 2)]))?);
    println!("P(screen_time | mood=low)  = {:.3?}", posterior(&bn, &Query::given(0, &[(2, 0)]))?);
    println!("blanket of sleep: {:?}", markov_blanket(&bn, 1).iter().map(|&v| &names[v]).collect::<Vec<_>>());
    for (i, ii) in [(0, 2), (2, 0), (1, 2)] {
        println!("influence {} -> {}: {:.3}", names[i], names[ii], influence(&bn, i, ii)?);
    }
    Ok(())
}
