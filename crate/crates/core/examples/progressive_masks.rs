//! Runs the refinement loop on one scene and prints each round's IoU and
//! which round the final selection keeps.
//!
//! cargo run --release --example progressive_masks [-- <scene index>]

use std::sync::Arc;

use genprompt::backends::{BackendSet, ImageRef, MockCaptionQa, MockEncoder, MockEncoderConfig, MockSegmenter};
use genprompt::cctp::PromptTemplates;
use genprompt::config::RunConfig;
use genprompt::pmg::{run_pmg, PipelineConfig};
use genprompt::synthetic::{generate, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let (scenes, fixture) = generate(&SyntheticConfig { count: index + 1, ..Default::default() });
    let scene = &scenes[index];
    let backends = BackendSet {
        qa: Arc::new(MockCaptionQa::new(fixture)),
        encoder: Arc::new(MockEncoder::new(MockEncoderConfig::default())?),
        segmenter: Arc::new(MockSegmenter::default()),
    };
    let prompt = RunConfig::default().prompt()?;
    let trace = run_pmg(
        ImageRef { id: &scene.id, pixels: &scene.image },
        &prompt,
        &backends,
        &PromptTemplates::default(),
        &PipelineConfig::default(),
    )?;
    println!("{}: fore {:?} back {:?}", scene.id, trace.keywords.fore_keywords, trace.keywords.back_keywords);
    for r in &trace.records {
        println!(
            "round {}: {:>3} positives, box {:?}, mask {:>5} px, IoU {:.3}",
            r.iteration,
            r.prompts.positives.len(),
            r.prompts.bbox.map(|b| (b.x0, b.y0, b.x1, b.y1)),
            r.mask.count(),
            r.mask.iou(&scene.mask)
        );
    }
    println!("kept round {}", trace.selected_index + 1);
    Ok(())
}
