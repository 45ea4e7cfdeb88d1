use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::BackendOptions;
use crate::cctp::TaskPrompt;
use crate::error::{Error, Result};
use crate::heatmap::{DEFAULT_UPSAMPLE_FACTOR, SUPPORTED_FACTORS};
use crate::pmg::{
    PipelineConfig, PmgConfig, ReweightBase, SegmentInput, SelectionNorm, DEFAULT_ITERATIONS, DEFAULT_W_PIC,
};
use crate::spatial_attention::AttentionMode;
use crate::visual_prompts::{PostMode, DEFAULT_THRESHOLD};

pub const DEFAULT_TASK_PROMPT: &str = "the camouflaged animal";
pub const DEFAULT_SYNONYMS: [&str; 4] = [
    "the hidden animal",
    "the concealed animal",
    "the disguised animal",
    "the cryptic animal",
];
pub const DEFAULT_CHAINS: usize = 3;
pub const FIXTURE_FILE_NAME: &str = "qa_fixture.toml";

/// Everything a dataset run needs. Loadable from TOML; every key is optional.
///
/// ```toml
/// task_prompt = "the camouflaged animal"
/// synonyms = ["the hidden animal", "the concealed animal"]
/// chains = 3
/// threshold = 0.9
/// post = "maxioubox"
/// dataset_root = "data/cod"
/// out = "runs/cod"
///
/// [backend_params]
/// "encoder.layers" = "12"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task_prompt: String,
    pub synonyms: Vec<String>,
    pub chains: usize,
    pub threshold: f64,
    pub upsample_factor: f64,
    pub w_pic: f64,
    pub iterations: usize,
    pub attention: AttentionMode,
    pub post: PostMode,
    pub reweight_base: ReweightBase,
    pub segment_input: SegmentInput,
    pub selection_norm: SelectionNorm,
    pub backend: String,
    pub backend_params: BTreeMap<String, String>,
    pub dataset_root: Option<PathBuf>,
    /// Mock QA answers; defaults to `<dataset_root>/qa_fixture.toml`.
    pub qa_fixture: Option<PathBuf>,
    /// Question templates; the bundled set when absent.
    pub templates: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub save_trace: bool,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task_prompt: DEFAULT_TASK_PROMPT.to_string(),
            synonyms: DEFAULT_SYNONYMS.iter().map(|s| s.to_string()).collect(),
            chains: DEFAULT_CHAINS,
            threshold: DEFAULT_THRESHOLD,
            upsample_factor: DEFAULT_UPSAMPLE_FACTOR,
            w_pic: DEFAULT_W_PIC,
            iterations: DEFAULT_ITERATIONS,
            attention: AttentionMode::Kkv,
            post: PostMode::MaxIouBox,
            reweight_base: ReweightBase::Original,
            segment_input: SegmentInput::Weighted,
            selection_norm: SelectionNorm::L1,
            backend: "mock".to_string(),
            backend_params: BTreeMap::new(),
            dataset_root: None,
            qa_fixture: None,
            templates: None,
            out: PathBuf::from("out"),
            seed: 0,
            save_trace: false,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !SUPPORTED_FACTORS.contains(&self.upsample_factor) {
            return bad(format!(
                "upsample factor {} not in {SUPPORTED_FACTORS:?}",
                self.upsample_factor
            ));
        }
        if !(0.0..=1.0).contains(&self.w_pic) {
            return bad(format!("w_pic {} outside [0, 1]", self.w_pic));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.prompt()?;
        Ok(())
    }

    /// Task prompt truncated to `chains` chains.
    pub fn prompt(&self) -> Result<TaskPrompt> {
        TaskPrompt::new(self.task_prompt.clone(), self.synonyms.clone())?.with_chains(self.chains)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            threshold: self.threshold,
            upsample_factor: self.upsample_factor,
            post_mode: self.post,
            pmg: PmgConfig {
                w_pic: self.w_pic,
                iterations: self.iterations,
                reweight_base: self.reweight_base,
                segment_input: self.segment_input,
                selection_norm: self.selection_norm,
            },
        }
    }

    pub fn fixture_path(&self) -> Option<PathBuf> {
        self.qa_fixture
            .clone()
            .or_else(|| self.dataset_root.as_ref().map(|r| r.join(FIXTURE_FILE_NAME)))
    }

    pub fn backend_options(&self) -> BackendOptions {
        BackendOptions {
            seed: self.seed,
            attention: self.attention,
            qa_fixture: self.fixture_path(),
            params: self.backend_params.clone(),
        }
    }
}
