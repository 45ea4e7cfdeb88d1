use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{Capabilities, EncodedImage, EncoderBackend};
use crate::error::{Error, Result};
use crate::heatmap::ImageFeatures;
use crate::image_ops::{area_downsample, ImageTensor};
use crate::spatial_attention::{
    AffineTanhFfn, AttentionMode, DualPathEncoder, EncoderBlock, HeadProjections, TokenFeatures,
};

const WEIGHTS_MAGIC: &[u8; 4] = b"KKVW";
const WEIGHTS_VERSION: u32 = 1;
/// Patch descriptor: scaled centred chromaticity plus a constant.
const DESCRIPTOR_WIDTH: usize = 4;
const DESCRIPTOR_BIAS: f64 = 0.25;
const CHROMA_GAIN: f64 = 3.0;

/// Brightness-free colour descriptor of a mean patch colour.
pub fn patch_descriptor(rgb: [f64; 3]) -> [f64; DESCRIPTOR_WIDTH] {
    let sum = rgb[0] + rgb[1] + rgb[2];
    let chroma = |v: f64| if sum > 1e-9 { CHROMA_GAIN * (v / sum - 1.0 / 3.0) } else { 0.0 };
    [chroma(rgb[0]), chroma(rgb[1]), chroma(rgb[2]), DESCRIPTOR_BIAS]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockEncoderConfig {
    pub seed: u64,
    pub grid_side: usize,
    pub channels: usize,
    pub layers: usize,
    pub delta: usize,
    pub heads: usize,
    pub mode: AttentionMode,
}

impl Default for MockEncoderConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_side: 14,
            channels: 32,
            layers: 12,
            delta: 7,
            heads: 4,
            mode: AttentionMode::Kkv,
        }
    }
}

/// Seeded random weights stored in flat form.
#[derive(Debug, Clone, PartialEq)]
struct MockWeights {
    seed: u64,
    channels: usize,
    heads: usize,
    embedding: Array2<f64>,
    class_token: Array1<f64>,
    layers: Vec<LayerWeights>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerWeights {
    w_k: Array2<f64>,
    w_q: Array2<f64>,
    w_v: Array2<f64>,
    ffn_w: Array2<f64>,
    ffn_b: Array1<f64>,
}

impl MockWeights {
    fn generate(seed: u64, channels: usize, heads: usize, layers: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let unit = Normal::new(0.0, 1.0).unwrap();
        let proj = Normal::new(0.0, 0.5 / (c as f64).sqrt()).unwrap();
        let ffn_noise = Normal::new(0.0, 0.1 / (c as f64).sqrt()).unwrap();
        let bias = Normal::new(0.0, 0.02).unwrap();
        // small value weights keep patch identity from washing out over depth
        let value = Normal::new(0.0, 0.1 / (c as f64).sqrt()).unwrap();
        let mut sample = |shape: (usize, usize), d: &Normal<f64>| {
            Array2::from_shape_simple_fn(shape, || d.sample(&mut rng))
        };
        let embedding = sample((DESCRIPTOR_WIDTH, c), &unit);
        let class_token = sample((1, c), &proj).row(0).to_owned();
        let layers = (0..layers)
            .map(|_| {
                let w_k = sample((c, c), &proj);
                let w_q = sample((c, c), &proj);
                let w_v = sample((c, c), &value);
                let ffn_w = Array2::<f64>::eye(c) + sample((c, c), &ffn_noise);
                let ffn_b = sample((1, c), &bias).row(0).to_owned();
                LayerWeights {
                    w_k,
                    w_q,
                    w_v,
                    ffn_w,
                    ffn_b,
                }
            })
            .collect();
        Self {
            seed,
            channels,
            heads,
            embedding,
            class_token,
            layers,
        }
    }

    fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        for v in [WEIGHTS_VERSION, self.channels as u32, self.heads as u32, self.layers.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        let mut put = |xs: &mut dyn Iterator<Item = &f64>| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&mut self.embedding.iter())?;
        put(&mut self.class_token.iter())?;
        for l in &self.layers {
            put(&mut l.w_k.iter())?;
            put(&mut l.w_q.iter())?;
            put(&mut l.w_v.iter())?;
            put(&mut l.ffn_w.iter())?;
            put(&mut l.ffn_b.iter())?;
        }
        Ok(())
    }

    fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format("not a mock encoder weights file".into()));
        }
        let mut u32s = [0u32; 4];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, channels, heads, layers] = u32s.map(|v| v as usize);
        if version != WEIGHTS_VERSION as usize {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let seed = u64::from_le_bytes(b);
        let c = channels;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
                .collect())
        };
        let shape = |v: Vec<f64>, rows: usize| {
            Array2::from_shape_vec((rows, c), v).map_err(|e| Error::Format(e.to_string()))
        };
        let embedding = shape(take(DESCRIPTOR_WIDTH * c)?, DESCRIPTOR_WIDTH)?;
        let class_token = Array1::from(take(c)?);
        let mut layer_weights = Vec::with_capacity(layers);
        for _ in 0..layers {
            layer_weights.push(LayerWeights {
                w_k: shape(take(c * c)?, c)?,
                w_q: shape(take(c * c)?, c)?,
                w_v: shape(take(c * c)?, c)?,
                ffn_w: shape(take(c * c)?, c)?,
                ffn_b: Array1::from(take(c)?),
            });
        }
        Ok(Self {
            seed,
            channels,
            heads,
            embedding,
            class_token,
            layers: layer_weights,
        })
    }
}

/// Deterministic stand-in for a surgery-modified vision-language encoder.
///
/// Image patches are embedded from their mean colour and pushed through a
/// [`DualPathEncoder`]. A keyword's text vector is the pooled alternate
/// stream of a uniform image painted in [`keyword_color`], so a scene region
/// painted in that colour lines up with the keyword.
#[derive(Debug, Clone)]
pub struct MockEncoder {
    config: MockEncoderConfig,
    weights: MockWeights,
    encoder: DualPathEncoder,
}

impl MockEncoder {
    pub fn new(config: MockEncoderConfig) -> Result<Self> {
        let weights = MockWeights::generate(config.seed, config.channels, config.heads, config.layers);
        Self::from_weights(config, weights)
    }

    fn from_weights(config: MockEncoderConfig, weights: MockWeights) -> Result<Self> {
        if config.grid_side < 2 {
            return Err(Error::Config("mock encoder grid side must be >= 2".into()));
        }
        let blocks = weights
            .layers
            .iter()
            .map(|l| {
                Ok(EncoderBlock {
                    proj: HeadProjections::new(l.w_k.clone(), l.w_q.clone(), l.w_v.clone(), weights.heads)?,
                    ffn: Arc::new(AffineTanhFfn {
                        weight: l.ffn_w.clone(),
                        bias: l.ffn_b.clone(),
                    }) as _,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder = DualPathEncoder::new(blocks, config.delta, config.mode)?;
        Ok(Self {
            config,
            weights,
            encoder,
        })
    }

    pub fn config(&self) -> &MockEncoderConfig {
        &self.config
    }

    pub fn dual_path(&self) -> &DualPathEncoder {
        &self.encoder
    }

    /// Writes weights as a flat little-endian file: magic `KKVW`, then
    /// `version, d, heads, layers` (u32) and `seed` (u64), then f64 arrays.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.weights.write_to(f)
    }

    /// Loads weights; `grid_side`, `delta` and `mode` come from `config`,
    /// the remaining fields from the file header.
    pub fn load_weights(path: &Path, config: MockEncoderConfig) -> Result<Self> {
        let weights = MockWeights::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let config = MockEncoderConfig {
            seed: weights.seed,
            channels: weights.channels,
            heads: weights.heads,
            layers: weights.layers.len(),
            ..config
        };
        Self::from_weights(config, weights)
    }

    /// Input tokens (class token + one token per patch colour).
    pub fn embed(&self, patch_colors: &[[f64; 3]]) -> Result<TokenFeatures> {
        let c = self.weights.channels;
        let mut tokens = Array2::<f64>::zeros((patch_colors.len() + 1, c));
        tokens.row_mut(0).assign(&self.weights.class_token);
        for (i, rgb) in patch_colors.iter().enumerate() {
            let desc = ndarray::arr1(&patch_descriptor(*rgb));
            tokens.row_mut(i + 1).assign(&desc.dot(&self.weights.embedding));
        }
        TokenFeatures::new(tokens, 1)
    }

    fn patch_colors(&self, image: &ImageTensor) -> Result<Vec<[f64; 3]>> {
        let g = self.config.grid_side;
        if image.height() < g || image.width() < g {
            return Err(Error::contract(format!(
                "image {}x{} smaller than the {g}x{g} token grid",
                image.width(),
                image.height()
            )));
        }
        let small = area_downsample(image, g);
        Ok((0..g * g)
            .map(|i| {
                let (r, c) = (i / g, i % g);
                [small[[r, c, 0]], small[[r, c, 1]], small[[r, c, 2]]]
            })
            .collect())
    }
}

/// Prototype colour for a keyword, derived from the seed and the keyword text.
/// Channels lie in `[0.1, 0.9]`.
pub fn keyword_color(seed: u64, keyword: &str) -> [f64; 3] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(keyword.trim().to_lowercase().as_bytes());
    let d = h.finalize();
    [0, 1, 2].map(|i| 0.1 + 0.8 * (d[i] as f64 / 255.0))
}

impl EncoderBackend for MockEncoder {
    fn name(&self) -> &str {
        "mock-encoder"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            concurrent_safe: true,
            deterministic: true,
        }
    }

    fn grid_side(&self) -> usize {
        self.config.grid_side
    }

    fn channels(&self) -> usize {
        self.weights.channels
    }

    fn encode_image(&self, image: &ImageTensor) -> Result<EncodedImage> {
        let tokens = self.embed(&self.patch_colors(image)?)?;
        let out = self.encoder.forward(tokens)?;
        Ok(EncodedImage {
            original: out.original.patch_tokens().to_owned(),
            alternate: ImageFeatures::new(out.alternate.patch_tokens().to_owned(), self.config.grid_side)?,
        })
    }

    fn encode_text(&self, keyword: &str) -> Result<Array1<f64>> {
        let g = self.config.grid_side;
        let color = keyword_color(self.config.seed, keyword);
        let out = self.encoder.forward(self.embed(&vec![color; g * g])?)?;
        let pooled = out
            .alternate
            .patch_tokens()
            .mean_axis(ndarray::Axis(0))
            .expect("non-empty grid");
        let norm = pooled.dot(&pooled).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateFeature(format!("text vector for `{keyword}`")));
        }
        Ok(pooled / norm)
    }
}
