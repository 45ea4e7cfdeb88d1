//! Pushes one synthetic scene through the mock encoder for each attention
//! mode and start block, and reports how far the alternate stream drifts
//! from the original one and how well it separates the object.
//!
//! cargo run --release --example dual_path_encoder

use genprompt::backends::{EncoderBackend, MockEncoder, MockEncoderConfig};
use genprompt::heatmap::{similarity_map, Polarity, TextFeature};
use genprompt::spatial_attention::AttentionMode;
use genprompt::synthetic::{generate_scene, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let scene = generate_scene(0, &SyntheticConfig::default());
    println!("scene {} ({} on {})", scene.id, scene.fore_keyword, scene.back_keyword);
    for mode in AttentionMode::ALL {
        for delta in [1, 7, 12] {
            let enc = MockEncoder::new(MockEncoderConfig { delta, mode, ..Default::default() })?;
            let encoded = enc.encode_image(&scene.image)?;
            let alt = encoded.alternate.patch_features();
            let gap = alt.iter().zip(encoded.original.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                / alt.iter().map(|a| a * a).sum::<f64>().sqrt();

            let text = TextFeature::new(enc.encode_text(&scene.fore_keyword)?, scene.fore_keyword.clone(), 1, Polarity::Foreground)?;
            let sim = similarity_map(&encoded.alternate, &text)?;
            let g = enc.grid_side();
            let (h, w) = scene.image.size();
            let (mut on, mut off, mut n_on) = (0.0, 0.0, 0);
            for (i, v) in sim.values.iter().enumerate() {
                // patch centre on the object?
                if scene.mask.get((2 * (i / g) + 1) * h / (2 * g), (2 * (i % g) + 1) * w / (2 * g)) {
                    on += v;
                    n_on += 1;
                } else {
                    off += v;
                }
            }
            println!(
                "{:>3} delta {delta:>2}: stream gap {gap:.2e}, similarity on object {:.4}, elsewhere {:.4}",
                mode.as_str(),
                on / n_on.max(1) as f64,
                off / (g * g - n_on).max(1) as f64
            );
        }
    }
    Ok(())
}
