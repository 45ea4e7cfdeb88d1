//! Runs one scene and writes the image | heatmap | mask-outline panel.
//!
//! cargo run --release --example overlay [-- <out.png>]

use std::sync::Arc;

use genprompt::backends::{BackendSet, ImageRef, MockCaptionQa, MockEncoder, MockEncoderConfig, MockSegmenter};
use genprompt::cctp::PromptTemplates;
use genprompt::config::RunConfig;
use genprompt::pmg::{run_pmg, PipelineConfig};
use genprompt::render::save_overlay;
use genprompt::synthetic::{generate, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "overlay.png".into());
    let (scenes, fixture) = generate(&SyntheticConfig { count: 1, ..Default::default() });
    let backends = BackendSet {
        qa: Arc::new(MockCaptionQa::new(fixture)),
        encoder: Arc::new(MockEncoder::new(MockEncoderConfig::default())?),
        segmenter: Arc::new(MockSegmenter::default()),
    };
    let scene = &scenes[0];
    let trace = run_pmg(
        ImageRef { id: &scene.id, pixels: &scene.image },
        &RunConfig::default().prompt()?,
        &backends,
        &PromptTemplates::default(),
        &PipelineConfig::default(),
    )?;
    let kept = &trace.records[trace.selected_index];
    save_overlay(&scene.image, trace.final_mask(), kept.heatmap.grid.view(), std::path::Path::new(&out))?;
    println!("{}: IoU {:.3}, wrote {out}", scene.id, trace.final_mask().iou(&scene.mask));
    Ok(())
}
