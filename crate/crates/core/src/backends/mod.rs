//! Interfaces for the three heavy models and the registry used to pick an
//! implementation by name.
//!
//! Real adapters (weights, tokenizers, devices) live outside this crate and
//! register themselves through [`BackendRegistry::register`]. The crate
//! ships the deterministic `mock` set.

mod fixture;
mod mock_encoder;
mod mock_segmenter;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::ImageFeatures;
use crate::image_ops::ImageTensor;
use crate::spatial_attention::AttentionMode;
use crate::visual_prompts::{BinaryMask, PromptSet};

pub use fixture::{MockCaptionQa, QaFixture};
pub use mock_encoder::{keyword_color, patch_descriptor, MockEncoder, MockEncoderConfig};
pub use mock_segmenter::MockSegmenter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub concurrent_safe: bool,
    pub deterministic: bool,
}

/// An image handed to a backend together with its dataset identifier.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub id: &'a str,
    pub pixels: &'a ImageTensor,
}

/// Which slot of the keyword chains a question fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "chain")]
pub enum QueryKind {
    Caption,
    Foreground(usize),
    Background(usize),
}

impl QueryKind {
    /// Stable identifier used as the fixture key: `caption`, `fore.<j>`, `back.<j>`.
    pub fn template_id(&self) -> String {
        match self {
            QueryKind::Caption => "caption".to_string(),
            QueryKind::Foreground(j) => format!("fore.{j}"),
            QueryKind::Background(j) => format!("back.{j}"),
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.template_id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub answer: String,
}

/// Structured conversational query. Adapters decide how to serialize the
/// caption and prior turns into their model's prompt format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaQuery {
    pub kind: QueryKind,
    pub caption: Option<String>,
    pub history: Vec<QaTurn>,
    pub question: String,
}

pub trait CaptionQaBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn ask(&self, image: ImageRef<'_>, query: &QaQuery) -> Result<String>;
}

/// Both streams of an encoded image. `original` is kept for adapters that
/// align text against it; the heatmap reads `alternate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub original: Array2<f64>,
    pub alternate: ImageFeatures,
}

pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn grid_side(&self) -> usize;
    fn channels(&self) -> usize;
    fn encode_image(&self, image: &ImageTensor) -> Result<EncodedImage>;
    fn encode_text(&self, keyword: &str) -> Result<Array1<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: BinaryMask,
    pub score: f64,
}

pub trait SegmenterBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn segment(&self, image: &ImageTensor, prompts: &PromptSet) -> Result<Vec<Candidate>>;
}

/// Highest score wins; ties go to the earliest candidate.
pub fn select_candidate(candidates: &[Candidate]) -> Result<&BinaryMask> {
    let mut best: Option<&Candidate> = None;
    for c in candidates {
        if best.is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    best.map(|c| &c.mask)
        .ok_or_else(|| Error::contract("segmenter returned no candidates"))
}

#[derive(Clone)]
pub struct BackendSet {
    pub qa: Arc<dyn CaptionQaBackend>,
    pub encoder: Arc<dyn EncoderBackend>,
    pub segmenter: Arc<dyn SegmenterBackend>,
}

impl BackendSet {
    pub fn concurrent_safe(&self) -> bool {
        self.qa.capabilities().concurrent_safe
            && self.encoder.capabilities().concurrent_safe
            && self.segmenter.capabilities().concurrent_safe
    }

    pub fn names(&self) -> [&str; 3] {
        [self.qa.name(), self.encoder.name(), self.segmenter.name()]
    }
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSet")
            .field("qa", &self.qa.name())
            .field("encoder", &self.encoder.name())
            .field("segmenter", &self.segmenter.name())
            .finish()
    }
}

/// Inputs a backend factory may consult.
#[derive(Debug, Clone, Default)]
pub struct BackendOptions {
    pub seed: u64,
    pub attention: AttentionMode,
    pub qa_fixture: Option<PathBuf>,
    /// Free-form adapter parameters (`key = value`).
    pub params: BTreeMap<String, String>,
}

pub type BackendFactory = fn(&BackendOptions) -> Result<BackendSet>;

/// Name → factory lookup.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("mock", mock_backends);
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, name: impl Into<String>, factory: BackendFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, opts: &BackendOptions) -> Result<BackendSet> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown backend `{name}` (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(opts)
    }
}

/// Mock set: fixture-driven QA, seeded encoder, disk segmenter.
pub fn mock_backends(opts: &BackendOptions) -> Result<BackendSet> {
    let fixture_path = opts
        .qa_fixture
        .as_ref()
        .ok_or_else(|| Error::Config("mock backend needs a QA fixture file".into()))?;
    let qa = MockCaptionQa::new(QaFixture::load(fixture_path)?);
    let mut enc_cfg = MockEncoderConfig {
        seed: opts.seed,
        mode: opts.attention,
        ..MockEncoderConfig::default()
    };
    if let Some(v) = opts.params.get("encoder.layers") {
        enc_cfg.layers = parse_param("encoder.layers", v)?;
    }
    if let Some(v) = opts.params.get("encoder.delta") {
        enc_cfg.delta = parse_param("encoder.delta", v)?;
    }
    if let Some(v) = opts.params.get("encoder.grid_side") {
        enc_cfg.grid_side = parse_param("encoder.grid_side", v)?;
    }
    Ok(BackendSet {
        qa: Arc::new(qa),
        encoder: Arc::new(MockEncoder::new(enc_cfg)?),
        segmenter: Arc::new(MockSegmenter::default()),
    })
}

fn parse_param<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}
