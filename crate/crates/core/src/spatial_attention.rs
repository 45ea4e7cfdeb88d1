//! Self-attention kernels and the dual-path block recurrence.
//!
//! Each encoder block `m` (1-based) consumes the original stream `S_m` and,
//! from block `delta + 1` onward, the alternate stream `Ŝ_m`:
//!
//! ```text
//! S_{m+1} = ffn(attn_kqv(S_m) + S_m)
//! Ŝ_{m+1} = none                           if m < delta
//!           ffn(attn_alt(S_m) + S_m)        if m = delta
//!           ffn(attn_alt(S_m) + Ŝ_m)        if m > delta
//! ```
//!
//! The alternate attention always reads the original stream; only the
//! residual switches to `Ŝ_m`. With `delta = 7` on a 12-block encoder the
//! blocks 7..=12 carry the alternate stream.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token matrix `[L × d]` entering block `layer_index`.
///
/// Row 0 is the class token, rows `1..L` are patch tokens in row-major grid
/// order. The kernels accept any `L ≥ 1`; spatial consumers call
/// [`TokenFeatures::patch_grid_side`] to require a square patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    tokens: Array2<f64>,
    layer_index: usize,
}

impl TokenFeatures {
    pub fn new(tokens: Array2<f64>, layer_index: usize) -> Result<Self> {
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(Error::contract("token matrix must be non-empty"));
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("token features must be finite"));
        }
        Ok(Self {
            tokens,
            layer_index,
        })
    }

    pub fn tokens(&self) -> ArrayView2<'_, f64> {
        self.tokens.view()
    }

    pub fn into_tokens(self) -> Array2<f64> {
        self.tokens
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }

    /// Side of the square patch grid (`L - 1 = g²`, `g ≥ 1`).
    pub fn patch_grid_side(&self) -> Result<usize> {
        let patches = self.len().saturating_sub(1);
        let side = (patches as f64).sqrt().round() as usize;
        if patches == 0 || side * side != patches {
            return Err(Error::contract(format!(
                "{patches} patch tokens do not form a square grid"
            )));
        }
        Ok(side)
    }

    /// Patch tokens with the class token removed.
    pub fn patch_tokens(&self) -> ArrayView2<'_, f64> {
        self.tokens.slice(s![1.., ..])
    }
}

/// Per-block projection weights for key, query and value.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjections {
    w_k: Array2<f64>,
    w_q: Array2<f64>,
    w_v: Array2<f64>,
    num_heads: usize,
    scale: f64,
}

impl HeadProjections {
    /// Builds projections with the default scale `1 / sqrt(d_k / num_heads)`.
    pub fn new(
        w_k: Array2<f64>,
        w_q: Array2<f64>,
        w_v: Array2<f64>,
        num_heads: usize,
    ) -> Result<Self> {
        if num_heads == 0 {
            return Err(Error::contract("num_heads must be at least 1"));
        }
        let head_width = w_k.ncols() / num_heads.max(1);
        let scale = 1.0 / (head_width.max(1) as f64).sqrt();
        Self::with_scale(w_k, w_q, w_v, num_heads, scale)
    }

    pub fn with_scale(
        w_k: Array2<f64>,
        w_q: Array2<f64>,
        w_v: Array2<f64>,
        num_heads: usize,
        scale: f64,
    ) -> Result<Self> {
        if num_heads == 0 {
            return Err(Error::contract("num_heads must be at least 1"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::contract(format!("scale must be positive, got {scale}")));
        }
        let d = w_k.nrows();
        if w_q.nrows() != d || w_v.nrows() != d {
            return Err(Error::contract(
                "projection matrices disagree on the input width",
            ));
        }
        if w_k.ncols() != w_q.ncols() {
            return Err(Error::contract(format!(
                "d_k ({}) must equal d_q ({})",
                w_k.ncols(),
                w_q.ncols()
            )));
        }
        if w_k.ncols() == 0 || !w_k.ncols().is_multiple_of(num_heads) || !w_v.ncols().is_multiple_of(num_heads) {
            return Err(Error::contract(format!(
                "d_k ({}) and d_v ({}) must be positive multiples of {num_heads} heads",
                w_k.ncols(),
                w_v.ncols()
            )));
        }
        for w in [&w_k, &w_q, &w_v] {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("projection weights must be finite"));
            }
        }
        Ok(Self {
            w_k,
            w_q,
            w_v,
            num_heads,
            scale,
        })
    }

    pub fn input_width(&self) -> usize {
        self.w_k.nrows()
    }

    pub fn key_width(&self) -> usize {
        self.w_k.ncols()
    }

    pub fn value_width(&self) -> usize {
        self.w_v.ncols()
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn w_k(&self) -> &Array2<f64> {
        &self.w_k
    }

    pub fn w_q(&self) -> &Array2<f64> {
        &self.w_q
    }

    pub fn w_v(&self) -> &Array2<f64> {
        &self.w_v
    }
}

/// Which projections form the attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Key-key logits, distinct values.
    #[default]
    Kkv,
    /// Value-value logits.
    Vvv,
    /// Standard query-key logits.
    Kqv,
}

impl AttentionMode {
    pub const ALL: [AttentionMode; 3] = [AttentionMode::Kkv, AttentionMode::Vvv, AttentionMode::Kqv];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionMode::Kkv => "kkv",
            AttentionMode::Vvv => "vvv",
            AttentionMode::Kqv => "kqv",
        }
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kkv" => Ok(AttentionMode::Kkv),
            "vvv" => Ok(AttentionMode::Vvv),
            "kqv" => Ok(AttentionMode::Kqv),
            other => Err(Error::Config(format!("unknown attention mode `{other}`"))),
        }
    }
}

/// Token-wise feed-forward map supplied by the host encoder.
pub trait TokenFfn: Send + Sync + fmt::Debug {
    fn apply(&self, tokens: ArrayView2<'_, f64>) -> Array2<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFfn;

impl TokenFfn for IdentityFfn {
    fn apply(&self, tokens: ArrayView2<'_, f64>) -> Array2<f64> {
        tokens.to_owned()
    }
}

/// `tanh(x · weight + bias)` applied row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTanhFfn {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl TokenFfn for AffineTanhFfn {
    fn apply(&self, tokens: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = tokens.dot(&self.weight);
        out += &self.bias;
        out.mapv_inplace(f64::tanh);
        out
    }
}

#[derive(Debug, Clone)]
pub struct BlockConfig {
    /// 1-based block index at which the alternate stream starts.
    pub delta: usize,
    pub mode: AttentionMode,
    pub ffn: Arc<dyn TokenFfn>,
}

impl BlockConfig {
    pub fn new(delta: usize, mode: AttentionMode, ffn: Arc<dyn TokenFfn>) -> Result<Self> {
        if delta == 0 {
            return Err(Error::contract("delta must be at least 1"));
        }
        Ok(Self { delta, mode, ffn })
    }
}

fn check_dims(features: &TokenFeatures, proj: &HeadProjections) -> Result<()> {
    if features.width() != proj.input_width() {
        return Err(Error::contract(format!(
            "token width {} does not match projection input width {}",
            features.width(),
            proj.input_width()
        )));
    }
    Ok(())
}

/// In-place numerically stable softmax over each row.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

struct Projected {
    keys: Array2<f64>,
    queries: Option<Array2<f64>>,
    values: Array2<f64>,
}

fn project(features: &TokenFeatures, proj: &HeadProjections, mode: AttentionMode) -> Projected {
    let x = features.tokens();
    let values = x.dot(&proj.w_v);
    match mode {
        AttentionMode::Kqv => Projected {
            keys: x.dot(&proj.w_k),
            queries: Some(x.dot(&proj.w_q)),
            values,
        },
        AttentionMode::Kkv => Projected {
            keys: x.dot(&proj.w_k),
            queries: None,
            values,
        },
        AttentionMode::Vvv => Projected {
            keys: values.clone(),
            queries: None,
            values,
        },
    }
}

fn head_probabilities(p: &Projected, head: usize, head_k: usize, scale: f64) -> Array2<f64> {
    let cols = s![.., head * head_k..(head + 1) * head_k];
    let keys = p.keys.slice(cols);
    let left = match &p.queries {
        Some(q) => q.slice(cols),
        None => keys,
    };
    let mut logits = left.dot(&keys.t());
    logits *= scale;
    softmax_rows(&mut logits);
    logits
}

/// Row-stochastic attention matrices, one `[L × L]` matrix per head.
pub fn attention_probabilities(
    features: &TokenFeatures,
    proj: &HeadProjections,
    mode: AttentionMode,
) -> Result<Vec<Array2<f64>>> {
    check_dims(features, proj)?;
    let p = project(features, proj, mode);
    let logit_width = p.keys.ncols();
    let head_k = logit_width / proj.num_heads;
    Ok((0..proj.num_heads)
        .map(|h| head_probabilities(&p, h, head_k, proj.scale))
        .collect())
}

/// Multi-head self-attention with logits chosen by `mode`. Output is `[L × d_v]`
/// with heads concatenated along the channel axis.
pub fn attention(
    features: &TokenFeatures,
    proj: &HeadProjections,
    mode: AttentionMode,
) -> Result<Array2<f64>> {
    check_dims(features, proj)?;
    let p = project(features, proj, mode);
    let heads = proj.num_heads;
    let head_k = p.keys.ncols() / heads;
    let head_v = p.values.ncols() / heads;
    let mut out = Array2::<f64>::zeros((features.len(), p.values.ncols()));
    for h in 0..heads {
        let probs = head_probabilities(&p, h, head_k, proj.scale);
        let v = p.values.slice(s![.., h * head_v..(h + 1) * head_v]);
        out.slice_mut(s![.., h * head_v..(h + 1) * head_v])
            .assign(&probs.dot(&v));
    }
    Ok(out)
}

pub fn attention_kkv(features: &TokenFeatures, proj: &HeadProjections) -> Result<Array2<f64>> {
    attention(features, proj, AttentionMode::Kkv)
}

pub fn attention_kqv(features: &TokenFeatures, proj: &HeadProjections) -> Result<Array2<f64>> {
    attention(features, proj, AttentionMode::Kqv)
}

pub fn attention_vvv(features: &TokenFeatures, proj: &HeadProjections) -> Result<Array2<f64>> {
    attention(features, proj, AttentionMode::Vvv)
}

/// One block of the dual-path recurrence. `m` is the 1-based block index.
pub fn dual_path_step(
    s_m: &TokenFeatures,
    s_hat_m: Option<&TokenFeatures>,
    m: usize,
    cfg: &BlockConfig,
    proj: &HeadProjections,
) -> Result<(TokenFeatures, Option<TokenFeatures>)> {
    if m == 0 {
        return Err(Error::contract("block index is 1-based"));
    }
    match (s_hat_m, m <= cfg.delta) {
        (Some(_), true) => {
            return Err(Error::contract(format!(
                "alternate stream present at block {m} <= delta {}",
                cfg.delta
            )))
        }
        (None, false) => {
            return Err(Error::contract(format!(
                "alternate stream missing at block {m} > delta {}",
                cfg.delta
            )))
        }
        _ => {}
    }
    if proj.value_width() != s_m.width() {
        return Err(Error::contract(format!(
            "residual needs d_v ({}) == d ({})",
            proj.value_width(),
            s_m.width()
        )));
    }
    if let Some(hat) = s_hat_m {
        if hat.tokens.dim() != s_m.tokens.dim() {
            return Err(Error::contract("streams disagree on shape"));
        }
    }

    let original = attention(s_m, proj, AttentionMode::Kqv)? + &s_m.tokens;
    let s_next = TokenFeatures::new(cfg.ffn.apply(original.view()), m + 1)?;

    let s_hat_next = if m < cfg.delta {
        None
    } else {
        let residual = s_hat_m.map_or(&s_m.tokens, |h| &h.tokens);
        let alt = attention(s_m, proj, cfg.mode)? + residual;
        Some(TokenFeatures::new(cfg.ffn.apply(alt.view()), m + 1)?)
    };
    Ok((s_next, s_hat_next))
}

/// A block's weights: attention projections plus its feed-forward map.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub proj: HeadProjections,
    pub ffn: Arc<dyn TokenFfn>,
}

/// Stack of blocks run through [`dual_path_step`].
#[derive(Debug, Clone)]
pub struct DualPathEncoder {
    pub blocks: Vec<EncoderBlock>,
    pub delta: usize,
    pub mode: AttentionMode,
}

/// Final states of both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPathOutput {
    pub original: TokenFeatures,
    pub alternate: TokenFeatures,
}

impl DualPathEncoder {
    pub fn new(blocks: Vec<EncoderBlock>, delta: usize, mode: AttentionMode) -> Result<Self> {
        if delta == 0 || delta > blocks.len() {
            return Err(Error::contract(format!(
                "delta {delta} must lie in 1..={}",
                blocks.len()
            )));
        }
        Ok(Self {
            blocks,
            delta,
            mode,
        })
    }

    pub fn forward(&self, input: TokenFeatures) -> Result<DualPathOutput> {
        let mut s = input;
        let mut s_hat: Option<TokenFeatures> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let cfg = BlockConfig {
                delta: self.delta,
                mode: self.mode,
                ffn: Arc::clone(&block.ffn),
            };
            let (next, next_hat) = dual_path_step(&s, s_hat.as_ref(), i + 1, &cfg, &block.proj)?;
            s = next;
            s_hat = next_hat;
        }
        let alternate = s_hat.ok_or_else(|| Error::contract("alternate stream never started"))?;
        Ok(DualPathOutput {
            original: s,
            alternate,
        })
    }
}
