//! Progressive mask generation: heatmap-weighted re-encoding over several
//! rounds, then picking the round whose mask sits closest to the mean mask.

use std::path::Path;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::backends::{select_candidate, BackendSet, ImageRef};
use crate::cctp::{run_cctp, ChainTranscript, KeywordBundle, PromptTemplates, TaskPrompt};
use crate::error::{Error, Result};
use crate::heatmap::{
    consensus_map, spatialize_and_upsample, Heatmap, Polarity, TextFeature, DEFAULT_UPSAMPLE_FACTOR,
};
use crate::image_ops::ImageTensor;
use crate::visual_prompts::{assemble_prompts, extract_points, BinaryMask, PostMode, PromptSet, DEFAULT_THRESHOLD};

pub const DEFAULT_W_PIC: f64 = 0.3;
pub const DEFAULT_ITERATIONS: usize = 6;

/// Which image the next round's weighting is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReweightBase {
    /// Always weight the original image with the latest heatmap.
    #[default]
    Original,
    /// Weight the previous round's input (weights compound).
    Compounding,
}

/// Which image the segmenter receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentInput {
    #[default]
    Weighted,
    Original,
}

/// Distance between a mask and the mean mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionNorm {
    #[default]
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmgConfig {
    pub w_pic: f64,
    pub iterations: usize,
    pub reweight_base: ReweightBase,
    pub segment_input: SegmentInput,
    pub selection_norm: SelectionNorm,
}

impl Default for PmgConfig {
    fn default() -> Self {
        Self {
            w_pic: DEFAULT_W_PIC,
            iterations: DEFAULT_ITERATIONS,
            reweight_base: ReweightBase::Original,
            segment_input: SegmentInput::Weighted,
            selection_norm: SelectionNorm::L1,
        }
    }
}

/// Per-image settings of the whole prompt → mask loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub upsample_factor: f64,
    pub post_mode: PostMode,
    pub pmg: PmgConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            upsample_factor: DEFAULT_UPSAMPLE_FACTOR,
            post_mode: PostMode::MaxIouBox,
            pmg: PmgConfig::default(),
        }
    }
}

/// `X' = X·H·w + X·(1 − w)`, with `H` broadcast over channels.
pub fn reweight(image: &ImageTensor, heat: &Heatmap, w_pic: f64) -> Result<ImageTensor> {
    if !(0.0..=1.0).contains(&w_pic) {
        return Err(Error::contract(format!("w_pic {w_pic} outside [0, 1]")));
    }
    if heat.size() != image.size() {
        return Err(Error::contract(format!(
            "heatmap {:?} does not match image {:?}",
            heat.size(),
            image.size()
        )));
    }
    let mut out = image.0.clone();
    for ((y, x, _), v) in out.indexed_iter_mut() {
        let h = heat.grid[[y, x]];
        // same as X·H·w + X·(1 − w), exact at H = 1 and H = 0
        *v *= 1.0 - w_pic * (1.0 - h);
    }
    Ok(ImageTensor(out))
}

/// Index (0-based) of the mask closest to the entrywise mean, and the mean.
/// Ties go to the smallest index.
pub fn select_final(masks: &[BinaryMask], norm: SelectionNorm) -> Result<(usize, Array2<f64>)> {
    let first = masks
        .first()
        .ok_or_else(|| Error::contract("cannot select from an empty mask list"))?;
    let size = first.size();
    if masks.iter().any(|m| m.size() != size) {
        return Err(Error::contract("masks differ in shape"));
    }
    // distances scaled by n stay integral, so ties are exact
    let n = masks.len() as u64;
    let mut counts = Array2::<u64>::zeros(size);
    for m in masks {
        Zip::from(&mut counts).and(m.grid()).for_each(|a, &b| *a += b as u64);
    }
    let mut best = (0, u64::MAX);
    for (i, m) in masks.iter().enumerate() {
        let mut d = 0u64;
        Zip::from(&counts).and(m.grid()).for_each(|&c, &b| {
            let diff = (b as u64 * n).abs_diff(c);
            d += match norm {
                SelectionNorm::L1 => diff,
                SelectionNorm::L2 => diff * diff,
            };
        });
        if d < best.1 {
            best = (i, d);
        }
    }
    let mean = counts.mapv(|c| c as f64 / n as f64);
    Ok((best.0, mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based round number.
    pub iteration: usize,
    pub input_digest: String,
    pub heatmap: Heatmap,
    pub prompts: PromptSet,
    pub mask: BinaryMask,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "error")]
pub enum TraceStatus {
    Complete,
    /// A backend failed after at least one round completed.
    Truncated(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub keywords: KeywordBundle,
    pub transcripts: Vec<ChainTranscript>,
    pub records: Vec<IterationRecord>,
    /// 0-based index into `records`.
    pub selected_index: usize,
    pub mean_mask: Array2<f64>,
    pub status: TraceStatus,
}

impl IterationTrace {
    pub fn final_mask(&self) -> &BinaryMask {
        &self.records[self.selected_index].mask
    }

    pub fn summary(&self, image_id: &str) -> TraceSummary {
        TraceSummary {
            image_id: image_id.to_string(),
            i_star: self.selected_index + 1,
            iterations: self.records.len(),
            status: self.status.clone(),
            keywords: self.keywords.clone(),
            rounds: self
                .records
                .iter()
                .map(|r| RoundSummary {
                    iteration: r.iteration,
                    input_digest: r.input_digest.clone(),
                    positives: r.prompts.positives.len(),
                    negatives: r.prompts.negatives.len(),
                    bbox: r.prompts.bbox.map(|b| [b.x0, b.y0, b.x1, b.y1]),
                    mask_prompt: r.prompts.prev_mask.is_some(),
                    mask_pixels: r.mask.count(),
                    score: r.score,
                })
                .collect(),
        }
    }

    /// Writes `iter_<i>_heatmap.png`, `iter_<i>_mask.png` and `summary.json`.
    pub fn export(&self, dir: &Path, image_id: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.records {
            r.heatmap.save_png(&dir.join(format!("iter_{}_heatmap.png", r.iteration)))?;
            r.mask.save_png(&dir.join(format!("iter_{}_mask.png", r.iteration)))?;
        }
        let json = serde_json::to_string_pretty(&self.summary(image_id))?;
        std::fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub iteration: usize,
    pub input_digest: String,
    pub positives: usize,
    pub negatives: usize,
    pub bbox: Option<[usize; 4]>,
    pub mask_prompt: bool,
    pub mask_pixels: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub image_id: String,
    /// 1-based selected round.
    pub i_star: usize,
    pub iterations: usize,
    #[serde(flatten)]
    pub status: TraceStatus,
    pub keywords: KeywordBundle,
    pub rounds: Vec<RoundSummary>,
}

fn text_features(
    backends: &BackendSet,
    keywords: &[String],
    polarity: Polarity,
) -> Result<Vec<TextFeature>> {
    keywords
        .iter()
        .enumerate()
        .map(|(i, k)| TextFeature::new(backends.encoder.encode_text(k)?, k.clone(), i + 1, polarity))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    iteration: usize,
    input: &ImageTensor,
    original: &ImageTensor,
    prev_mask: Option<&BinaryMask>,
    fore: &[TextFeature],
    back: &[TextFeature],
    backends: &BackendSet,
    cfg: &PipelineConfig,
) -> Result<IterationRecord> {
    let encoded = backends.encoder.encode_image(input)?;
    let si = consensus_map(&encoded.alternate, fore, back)?;
    let heatmap = spatialize_and_upsample(
        si.view(),
        encoded.alternate.grid_side(),
        cfg.upsample_factor,
        input.size(),
    )?;
    let points = extract_points(heatmap.lattice.view(), cfg.threshold, input.size())?;
    let prompts = assemble_prompts(points, prev_mask, cfg.post_mode);
    let seg_image = match cfg.pmg.segment_input {
        SegmentInput::Weighted => input,
        SegmentInput::Original => original,
    };
    let candidates = backends.segmenter.segment(seg_image, &prompts)?;
    let mask = select_candidate(&candidates)?.clone();
    if mask.size() != input.size() {
        return Err(Error::contract("segmenter mask size differs from the image"));
    }
    let score = candidates
        .iter()
        .find(|c| c.mask == mask)
        .map_or(0.0, |c| c.score);
    Ok(IterationRecord {
        iteration,
        input_digest: input.digest(),
        heatmap,
        prompts,
        mask,
        score,
    })
}

/// Runs keyword chains once, then `cfg.pmg.iterations` rounds of
/// heatmap → prompts → mask → reweighting, and selects the final mask.
///
/// A backend failure after the first round truncates the trace and the
/// selection runs over the completed rounds.
pub fn run_pmg(
    image: ImageRef<'_>,
    prompt: &TaskPrompt,
    backends: &BackendSet,
    templates: &PromptTemplates,
    cfg: &PipelineConfig,
) -> Result<IterationTrace> {
    if cfg.pmg.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let (keywords, transcripts) = run_cctp(image, prompt, backends.qa.as_ref(), templates)?;
    let fore = text_features(backends, &keywords.fore_keywords, Polarity::Foreground)?;
    let back = text_features(backends, &keywords.back_keywords, Polarity::Background)?;

    let original = image.pixels;
    let mut input = original.clone();
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.pmg.iterations);
    let mut status = TraceStatus::Complete;

    for i in 1..=cfg.pmg.iterations {
        let prev = records.last().map(|r| &r.mask);
        let record = match run_round(i, &input, original, prev, &fore, &back, backends, cfg) {
            Ok(r) => r,
            Err(e) if !records.is_empty() && matches!(e, Error::Backend { .. }) => {
                log::warn!("image {}: round {i} failed, keeping {} rounds: {e}", image.id, records.len());
                status = TraceStatus::Truncated(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if i < cfg.pmg.iterations {
            let base = match cfg.pmg.reweight_base {
                ReweightBase::Original => original,
                ReweightBase::Compounding => &input,
            };
            input = reweight(base, &record.heatmap, cfg.pmg.w_pic)?;
        }
        records.push(record);
    }

    let masks: Vec<BinaryMask> = records.iter().map(|r| r.mask.clone()).collect();
    let (selected_index, mean_mask) = select_final(&masks, cfg.pmg.selection_norm)?;
    Ok(IterationTrace {
        keywords,
        transcripts,
        records,
        selected_index,
        mean_mask,
        status,
    })
}
