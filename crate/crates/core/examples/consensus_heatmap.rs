//! Builds the foreground-minus-background heatmap for a scene from a few
//! keywords and writes it as a grey image.
//!
//! cargo run --release --example consensus_heatmap [-- <out.png>]

use genprompt::backends::{EncoderBackend, MockEncoder, MockEncoderConfig};
use genprompt::heatmap::{consensus_map, spatialize_and_upsample, Polarity, TextFeature};
use genprompt::synthetic::{generate_scene, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "heatmap.png".into());
    let scene = generate_scene(3, &SyntheticConfig::default());
    let enc = MockEncoder::new(MockEncoderConfig::default())?;
    let features = |words: &[&str], polarity| -> genprompt::Result<Vec<TextFeature>> {
        words
            .iter()
            .enumerate()
            .map(|(j, w)| TextFeature::new(enc.encode_text(w)?, *w, j + 1, polarity))
            .collect()
    };
    // one chain found the right object, one did not
    let fore = features(&[&scene.fore_keyword, &scene.fore_keyword, "owl"], Polarity::Foreground)?;
    let back = features(&[&scene.back_keyword, &scene.back_keyword, "leaf"], Polarity::Background)?;
    let image = enc.encode_image(&scene.image)?.alternate;
    let si = consensus_map(&image, &fore, &back)?;
    let heat = spatialize_and_upsample(si.view(), image.grid_side(), 2.0, scene.image.size())?;

    let inside: f64 = heat.grid.indexed_iter().filter(|(p, _)| scene.mask.get(p.0, p.1)).map(|(_, v)| v).sum::<f64>()
        / scene.mask.count() as f64;
    let total = heat.grid.sum() / heat.grid.len() as f64;
    println!("{}: mean heat on object {inside:.3}, whole image {total:.3}", scene.id);
    heat.save_png(std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
