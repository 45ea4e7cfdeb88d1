//! Generates a synthetic camouflage dataset, runs the full pipeline with the
//! mock backends and compares the first-round mask with the selected one.
//!
//! cargo run --release --example synthetic_dataset_run [-- <out dir>]

use std::time::Instant;

use genprompt::config::RunConfig;
use genprompt::run::run_dataset;
use genprompt::synthetic::{write_dataset, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("genprompt-synthetic"));
    let data = out.join("data");
    let scenes = write_dataset(&data, &SyntheticConfig::default())?;

    let cfg = RunConfig {
        dataset_root: Some(data),
        out: out.join("run"),
        save_trace: true,
        ..RunConfig::default()
    };
    let started = Instant::now();
    let summary = run_dataset(&cfg)?;
    println!("{} images in {:.2?}", summary.outcomes.len(), started.elapsed());

    let (mut first, mut chosen) = (0.0, 0.0);
    for (o, scene) in summary.outcomes.iter().zip(&scenes) {
        let trace = o.trace.as_ref().expect("mock run succeeds");
        let iou_first = trace.records[0].mask.iou(&scene.mask);
        let iou_chosen = trace.final_mask().iou(&scene.mask);
        println!(
            "{}  {:>8}/{:<8} i*={} IoU first {:.3} chosen {:.3}",
            o.stem,
            scene.fore_keyword,
            scene.back_keyword,
            trace.selected_index + 1,
            iou_first,
            iou_chosen
        );
        first += iou_first;
        chosen += iou_chosen;
    }
    let n = scenes.len() as f64;
    println!("mean IoU first round {:.4}, selected {:.4}", first / n, chosen / n);
    if let Some(m) = summary.aggregate {
        println!("M {:.4}  F_beta {:.4}  E_phi {:.4}  S_alpha {:.4}", m.mae, m.f_beta, m.e_phi, m.s_alpha);
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}
