//! Dataset runs: per-image pipeline, artifacts, metric tables and sweeps.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::backends::{BackendRegistry, BackendSet, ImageRef};
use crate::cctp::{write_transcripts, PromptTemplates, TaskPrompt};
use crate::config::RunConfig;
use crate::dataset::{DatasetSpec, Sample};
use crate::error::{Error, Result};
use crate::heatmap::SUPPORTED_FACTORS;
use crate::metrics::{aggregate, evaluate, MetricsRecord};
use crate::pmg::{run_pmg, IterationTrace, PipelineConfig, TraceStatus};
use crate::render::save_overlay;
use crate::visual_prompts::PostMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageStatus {
    Ok,
    /// Finished over fewer rounds than configured.
    Truncated,
    Failed,
}

impl ImageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageStatus::Ok => "ok",
            ImageStatus::Truncated => "truncated",
            ImageStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub stem: String,
    pub status: ImageStatus,
    pub metrics: Option<MetricsRecord>,
    pub trace: Option<IterationTrace>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dataset: String,
    pub outcomes: Vec<ImageOutcome>,
    /// Mean over images that produced a mask; `None` when none did.
    pub aggregate: Option<MetricsRecord>,
}

impl RunSummary {
    pub fn succeeded(&self) -> usize {
        self.outcomes.iter().filter(|o| o.metrics.is_some()).count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.succeeded()
    }
}

#[derive(Debug, Clone, Copy)]
struct Job<'a> {
    prompt: &'a TaskPrompt,
    templates: &'a PromptTemplates,
    pipeline: &'a PipelineConfig,
    backends: &'a BackendSet,
}

fn process(sample: &Sample, job: Job<'_>) -> ImageOutcome {
    let attempt = || -> Result<(IterationTrace, MetricsRecord)> {
        let image = sample.load_image()?;
        let gt = sample.load_mask()?;
        if gt.size() != image.size() {
            return Err(Error::contract(format!(
                "mask {:?} does not match image {:?}",
                gt.size(),
                image.size()
            )));
        }
        let trace = run_pmg(
            ImageRef {
                id: &sample.stem,
                pixels: &image,
            },
            job.prompt,
            job.backends,
            job.templates,
            job.pipeline,
        )?;
        let metrics = evaluate(trace.final_mask().to_f64().view(), &gt)?;
        Ok((trace, metrics))
    };
    match attempt() {
        Ok((trace, metrics)) => ImageOutcome {
            stem: sample.stem.clone(),
            status: match trace.status {
                TraceStatus::Complete => ImageStatus::Ok,
                TraceStatus::Truncated(_) => ImageStatus::Truncated,
            },
            metrics: Some(metrics),
            trace: Some(trace),
            error: None,
        },
        Err(e) => {
            log::error!("image {}: {e}", sample.stem);
            ImageOutcome {
                stem: sample.stem.clone(),
                status: ImageStatus::Failed,
                metrics: None,
                trace: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs every sample, in order with one worker or spread over `workers`
/// threads. Results come back in sample order either way.
fn process_all(samples: &[Sample], job: Job<'_>, workers: usize) -> Result<Vec<ImageOutcome>> {
    if workers > 1 && !job.backends.concurrent_safe() {
        return Err(Error::Config(format!(
            "{workers} workers requested but backends {:?} are not safe for concurrent use",
            job.backends.names()
        )));
    }
    if workers <= 1 {
        return Ok(samples.iter().map(|s| process(s, job)).collect());
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ImageOutcome>>> = Mutex::new(vec![None; samples.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(samples.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = samples.get(i) else { break };
                let outcome = process(sample, job);
                slots.lock().expect("worker panicked")[i] = Some(outcome);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect())
}

fn load_templates(cfg: &RunConfig) -> Result<PromptTemplates> {
    match &cfg.templates {
        Some(p) => PromptTemplates::load(p),
        None => Ok(PromptTemplates::default()),
    }
}

fn dataset_spec(cfg: &RunConfig) -> Result<DatasetSpec> {
    let root = cfg
        .dataset_root
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset root given".into()))?;
    DatasetSpec::discover(root)
}

/// Pipeline over the dataset without writing anything.
pub fn evaluate_dataset(cfg: &RunConfig, backends: &BackendSet) -> Result<RunSummary> {
    cfg.validate()?;
    let spec = dataset_spec(cfg)?;
    let samples = spec.samples()?;
    let prompt = cfg.prompt()?;
    let templates = load_templates(cfg)?;
    let pipeline = cfg.pipeline();
    let job = Job {
        prompt: &prompt,
        templates: &templates,
        pipeline: &pipeline,
        backends,
    };
    let outcomes = process_all(&samples, job, cfg.workers)?;
    let records: Vec<MetricsRecord> = outcomes.iter().filter_map(|o| o.metrics).collect();
    Ok(RunSummary {
        dataset: spec.name,
        aggregate: aggregate(&records).ok(),
        outcomes,
    })
}

pub fn build_backends(cfg: &RunConfig) -> Result<BackendSet> {
    BackendRegistry::default().build(&cfg.backend, &cfg.backend_options())
}

/// Runs the dataset with the configured backend and writes
/// `masks/<stem>.png`, `metrics.csv`, `summary.md`, `transcripts.jsonl`
/// and, with `save_trace`, `trace/<stem>/`.
pub fn run_dataset(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    dataset_spec(cfg)?;
    let backends = build_backends(cfg)?;
    run_dataset_with(cfg, &backends)
}

pub fn run_dataset_with(cfg: &RunConfig, backends: &BackendSet) -> Result<RunSummary> {
    let summary = evaluate_dataset(cfg, backends)?;
    write_outputs(cfg, &summary)?;
    Ok(summary)
}

fn write_outputs(cfg: &RunConfig, summary: &RunSummary) -> Result<()> {
    let out = &cfg.out;
    std::fs::create_dir_all(out.join("masks"))?;
    let spec = dataset_spec(cfg)?;
    let samples = spec.samples()?;
    let mut transcripts = BufWriter::new(File::create(out.join("transcripts.jsonl"))?);
    for (o, sample) in summary.outcomes.iter().zip(&samples) {
        let Some(trace) = &o.trace else { continue };
        trace.final_mask().save_png(&out.join("masks").join(format!("{}.png", o.stem)))?;
        write_transcripts(&mut transcripts, &o.stem, &trace.transcripts)?;
        if cfg.save_trace {
            let dir = out.join("trace").join(&o.stem);
            trace.export(&dir, &o.stem)?;
            let chosen = &trace.records[trace.selected_index];
            save_overlay(
                &sample.load_image()?,
                trace.final_mask(),
                chosen.heatmap.grid.view(),
                &dir.join("overlay.png"),
            )?;
        }
    }
    transcripts.flush()?;
    write_metrics_csv(&out.join("metrics.csv"), summary)?;
    std::fs::write(out.join("summary.md"), summary_markdown(cfg, summary))?;
    Ok(())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    image: &'a str,
    status: &'a str,
    mae: Option<f64>,
    f_beta: Option<f64>,
    e_phi: Option<f64>,
    s_alpha: Option<f64>,
    i_star: Option<usize>,
    iterations: Option<usize>,
}

pub fn write_metrics_csv(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for o in &summary.outcomes {
        let m = o.metrics;
        w.serialize(CsvRow {
            image: &o.stem,
            status: o.status.as_str(),
            mae: m.map(|m| m.mae),
            f_beta: m.map(|m| m.f_beta),
            e_phi: m.map(|m| m.e_phi),
            s_alpha: m.map(|m| m.s_alpha),
            i_star: o.trace.as_ref().map(|t| t.selected_index + 1),
            iterations: o.trace.as_ref().map(|t| t.records.len()),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn metric_cells(m: Option<&MetricsRecord>) -> String {
    match m {
        Some(m) => format!("{:.4} | {:.4} | {:.4} | {:.4}", m.mae, m.f_beta, m.e_phi, m.s_alpha),
        None => "- | - | - | -".to_string(),
    }
}

pub fn summary_markdown(cfg: &RunConfig, summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", summary.dataset);
    let _ = writeln!(
        s,
        "{} images: {} evaluated, {} failed. Means are over evaluated images only.\n",
        summary.outcomes.len(),
        summary.succeeded(),
        summary.failed()
    );
    let _ = writeln!(s, "| Setting | M | F_β | E_φ | S_α |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    let _ = writeln!(
        s,
        "| {} J={} thr={} up={} w={} iter={} {} | {} |",
        cfg.backend,
        cfg.chains,
        cfg.threshold,
        cfg.upsample_factor,
        cfg.w_pic,
        cfg.iterations,
        cfg.post,
        metric_cells(summary.aggregate.as_ref())
    );
    let failed: Vec<&ImageOutcome> = summary.outcomes.iter().filter(|o| o.metrics.is_none()).collect();
    if !failed.is_empty() {
        let _ = writeln!(s, "\n## Failed images\n");
        for o in failed {
            let _ = writeln!(s, "- {}: {}", o.stem, o.error.as_deref().unwrap_or("unknown error"));
        }
    }
    s
}

/// Knobs with a predefined sweep range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKnob {
    Chains,
    Factor,
    Threshold,
    Post,
}

impl SweepKnob {
    pub const ALL: [SweepKnob; 4] = [SweepKnob::Chains, SweepKnob::Factor, SweepKnob::Threshold, SweepKnob::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepKnob::Chains => "chains",
            SweepKnob::Factor => "factor",
            SweepKnob::Threshold => "threshold",
            SweepKnob::Post => "post",
        }
    }

    /// `(label, config)` per setting.
    pub fn settings(self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            (label, c)
        };
        match self {
            SweepKnob::Chains => (1..=5).map(|j| with(j.to_string(), &|c| c.chains = j)).collect(),
            SweepKnob::Factor => SUPPORTED_FACTORS
                .iter()
                .map(|&f| with(f.to_string(), &|c| c.upsample_factor = f))
                .collect(),
            SweepKnob::Threshold => [0.80, 0.85, 0.90, 0.95]
                .iter()
                .map(|&t| with(format!("{t:.2}"), &|c| c.threshold = t))
                .collect(),
            SweepKnob::Post => PostMode::ALL
                .iter()
                .map(|&p| with(p.as_str().to_string(), &|c| c.post = p))
                .collect(),
        }
    }
}

impl FromStr for SweepKnob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKnob::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep knob `{s}` (chains, factor, threshold, post)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting: String,
    pub evaluated: usize,
    pub failed: usize,
    pub aggregate: Option<MetricsRecord>,
}

/// One aggregate row per knob setting. Nothing is written per image.
pub fn sweep(base: &RunConfig, knob: SweepKnob, backends: &BackendSet) -> Result<Vec<SweepRow>> {
    knob.settings(base)
        .into_iter()
        .map(|(setting, cfg)| {
            let s = evaluate_dataset(&cfg, backends)?;
            Ok(SweepRow {
                setting,
                evaluated: s.succeeded(),
                failed: s.failed(),
                aggregate: s.aggregate,
            })
        })
        .collect()
}

pub fn sweep_markdown(knob: SweepKnob, rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} | M | F_β | E_φ | S_α |", knob.as_str());
    let _ = writeln!(s, "|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(s, "| {} | {} |", r.setting, metric_cells(r.aggregate.as_ref()));
    }
    s
}

/// Runs the sweep with the configured backend and writes `sweep_<knob>.md`.
pub fn run_sweep(base: &RunConfig, knob: SweepKnob) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let backends = build_backends(base)?;
    let rows = sweep(base, knob, &backends)?;
    std::fs::create_dir_all(&base.out)?;
    std::fs::write(base.out.join(format!("sweep_{}.md", knob.as_str())), sweep_markdown(knob, &rows))?;
    Ok(rows)
}
