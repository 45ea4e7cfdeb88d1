//! Sweeps one knob over a small synthetic dataset and prints the table.
//!
//! cargo run --release --example ablation_sweep [-- chains|factor|threshold|post]

use genprompt::config::RunConfig;
use genprompt::run::{build_backends, sweep, sweep_markdown, SweepKnob};
use genprompt::synthetic::{write_dataset, SyntheticConfig};

fn main() -> genprompt::Result<()> {
    let knob: SweepKnob = std::env::args().nth(1).as_deref().unwrap_or("threshold").parse()?;
    let dir = std::env::temp_dir().join("genprompt-sweep");
    write_dataset(&dir, &SyntheticConfig { count: 6, ..Default::default() })?;
    let cfg = RunConfig {
        dataset_root: Some(dir),
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..RunConfig::default()
    };
    let rows = sweep(&cfg, knob, &build_backends(&cfg)?)?;
    print!("{}", sweep_markdown(knob, &rows));
    Ok(())
}
