//! Runs the three attention variants on the same tokens and shows how the
//! attention of one token spreads over the others.
//!
//! cargo run --example attention_kernels

use genprompt::spatial_attention::{attention_probabilities, AttentionMode, HeadProjections, TokenFeatures};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> genprompt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (tokens, width, heads) = (6, 8, 2);
    let mut random = |r, c| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0));
    let x = TokenFeatures::new(random(tokens, width), 1)?;
    let proj = HeadProjections::new(random(width, width), random(width, width), random(width, width), heads)?;

    for mode in AttentionMode::ALL {
        let probs = attention_probabilities(&x, &proj, mode)?;
        let row = probs[0].row(0);
        let diag: f64 = (0..tokens).map(|i| probs[0][[i, i]]).sum::<f64>() / tokens as f64;
        println!(
            "{:>3}: token 0 attends [{}]  mean self-weight {:.3}",
            mode.as_str(),
            row.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" "),
            diag
        );
    }
    Ok(())
}
