use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use genprompt::config::RunConfig;
use genprompt::pmg::{ReweightBase, SegmentInput, SelectionNorm};
use genprompt::run::{run_dataset, run_sweep, SweepKnob};
use genprompt::spatial_attention::AttentionMode;
use genprompt::visual_prompts::PostMode;

/// Segment a dataset from one generic task prompt and score the masks.
///
/// Settings come from `--config` (TOML), then GENPROMPT_* environment
/// variables, then flags; later sources win.
#[derive(Debug, Parser)]
#[command(name = "genprompt", version)]
struct Cli {
    #[arg(long, env = "GENPROMPT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "GENPROMPT_TASK_PROMPT")]
    task_prompt: Option<String>,
    /// Synonym of the task prompt; one extra chain each.
    #[arg(long = "synonym")]
    synonyms: Vec<String>,
    #[arg(long, env = "GENPROMPT_CHAINS")]
    chains: Option<usize>,
    #[arg(long, env = "GENPROMPT_THRESHOLD")]
    threshold: Option<f64>,
    #[arg(long, env = "GENPROMPT_UPSAMPLE_FACTOR")]
    upsample_factor: Option<f64>,
    #[arg(long, env = "GENPROMPT_W_PIC")]
    w_pic: Option<f64>,
    #[arg(long, env = "GENPROMPT_ITERS")]
    iters: Option<usize>,
    #[arg(long, env = "GENPROMPT_ATTENTION", value_parser = ["kkv", "vvv", "kqv"])]
    attention: Option<String>,
    #[arg(long, env = "GENPROMPT_POST", value_parser = ["none", "maxbox", "mask", "maxioubox"])]
    post: Option<String>,
    #[arg(long, env = "GENPROMPT_REWEIGHT_BASE", value_parser = ["original", "compounding"])]
    reweight_base: Option<String>,
    #[arg(long, env = "GENPROMPT_SEGMENT_INPUT", value_parser = ["weighted", "original"])]
    segment_input: Option<String>,
    #[arg(long, env = "GENPROMPT_SELECTION_NORM", value_parser = ["l1", "l2"])]
    selection_norm: Option<String>,
    #[arg(long, env = "GENPROMPT_BACKEND")]
    backend: Option<String>,
    /// Backend parameter as key=value.
    #[arg(long = "backend-param", value_parser = parse_key_value)]
    backend_params: Vec<(String, String)>,
    #[arg(long, env = "GENPROMPT_DATASET_ROOT")]
    dataset_root: Option<PathBuf>,
    #[arg(long, env = "GENPROMPT_QA_FIXTURE")]
    qa_fixture: Option<PathBuf>,
    #[arg(long, env = "GENPROMPT_TEMPLATES")]
    templates: Option<PathBuf>,
    #[arg(long, env = "GENPROMPT_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "GENPROMPT_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "GENPROMPT_SAVE_TRACE")]
    save_trace: Option<Option<bool>>,
    #[arg(long, env = "GENPROMPT_WORKERS")]
    workers: Option<usize>,
    /// Run one aggregate row per setting of a knob instead of a plain run.
    #[arg(long, value_parser = ["chains", "factor", "threshold", "post"])]
    sweep: Option<String>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

fn parse<T: std::str::FromStr<Err = genprompt::Error>>(v: Option<String>) -> genprompt::Result<Option<T>> {
    v.map(|s| s.parse()).transpose()
}

fn serde_enum<T: serde::de::DeserializeOwned>(v: Option<String>) -> genprompt::Result<Option<T>> {
    v.map(|s| {
        serde_json::from_value(serde_json::Value::String(s))
            .map_err(|e| genprompt::Error::Config(e.to_string()))
    })
    .transpose()
}

fn resolve(cli: Cli) -> genprompt::Result<(RunConfig, Option<SweepKnob>)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
            }
        };
    }
    set!(task_prompt, cli.task_prompt);
    if !cli.synonyms.is_empty() {
        cfg.synonyms = cli.synonyms;
    }
    set!(chains, cli.chains);
    set!(threshold, cli.threshold);
    set!(upsample_factor, cli.upsample_factor);
    set!(w_pic, cli.w_pic);
    set!(iterations, cli.iters);
    set!(attention, parse::<AttentionMode>(cli.attention)?);
    set!(post, parse::<PostMode>(cli.post)?);
    set!(reweight_base, serde_enum::<ReweightBase>(cli.reweight_base)?);
    set!(segment_input, serde_enum::<SegmentInput>(cli.segment_input)?);
    set!(selection_norm, serde_enum::<SelectionNorm>(cli.selection_norm)?);
    set!(backend, cli.backend);
    cfg.backend_params.extend(cli.backend_params);
    if let Some(root) = cli.dataset_root {
        cfg.dataset_root = Some(root);
    }
    if let Some(f) = cli.qa_fixture {
        cfg.qa_fixture = Some(f);
    }
    if let Some(t) = cli.templates {
        cfg.templates = Some(t);
    }
    set!(out, cli.out);
    set!(seed, cli.seed);
    set!(save_trace, cli.save_trace.map(|v| v.unwrap_or(true)));
    set!(workers, cli.workers);
    let knob = parse::<SweepKnob>(cli.sweep)?;
    Ok((cfg, knob))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = resolve(Cli::parse()).and_then(|(cfg, knob)| match knob {
        Some(knob) => run_sweep(&cfg, knob).map(|rows| {
            for r in rows {
                println!("{}={} evaluated={} failed={}", knob.as_str(), r.setting, r.evaluated, r.failed);
            }
        }),
        None => run_dataset(&cfg).map(|s| {
            println!(
                "{}: {} evaluated, {} failed, outputs in {}",
                s.dataset,
                s.succeeded(),
                s.failed(),
                cfg.out.display()
            );
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
