//! Consensus heatmap: per-keyword cosine maps, chain averaging, background
//! subtraction and the two resampled grids derived from the result.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_ops::{min_max_normalize, resize_bilinear, save_gray};

const MIN_NORM: f64 = 1e-12;

/// Upsample factors accepted for the point-sampling lattice.
pub const SUPPORTED_FACTORS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_UPSAMPLE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Foreground,
    Background,
}

/// Alternate-stream patch features `[N_i × C]`, class token removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    patch_features: Array2<f64>,
    grid_side: usize,
}

impl ImageFeatures {
    pub fn new(patch_features: Array2<f64>, grid_side: usize) -> Result<Self> {
        if grid_side < 2 {
            return Err(Error::contract(format!("grid side must be >= 2, got {grid_side}")));
        }
        if patch_features.nrows() != grid_side * grid_side {
            return Err(Error::contract(format!(
                "{} patches do not fill a {grid_side}x{grid_side} grid",
                patch_features.nrows()
            )));
        }
        for (t, row) in patch_features.rows().into_iter().enumerate() {
            if l2(row) < MIN_NORM {
                return Err(Error::DegenerateFeature(format!("patch {t} has zero norm")));
            }
        }
        Ok(Self {
            patch_features,
            grid_side,
        })
    }

    pub fn patch_features(&self) -> ArrayView2<'_, f64> {
        self.patch_features.view()
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn channels(&self) -> usize {
        self.patch_features.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextFeature {
    pub vector: Array1<f64>,
    pub source_keyword: String,
    /// 1-based chain index.
    pub chain_index: usize,
    pub polarity: Polarity,
}

impl TextFeature {
    pub fn new(
        vector: Array1<f64>,
        source_keyword: impl Into<String>,
        chain_index: usize,
        polarity: Polarity,
    ) -> Result<Self> {
        let keyword = source_keyword.into();
        if l2(vector.view()) < MIN_NORM {
            return Err(Error::DegenerateFeature(format!(
                "text vector for `{keyword}` has zero norm"
            )));
        }
        Ok(Self {
            vector,
            source_keyword: keyword,
            chain_index,
            polarity,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub values: Array1<f64>,
    pub polarity: Polarity,
    pub chain_index: usize,
}

fn l2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine similarity between every patch and the text vector.
pub fn similarity_map(image: &ImageFeatures, text: &TextFeature) -> Result<SimilarityMap> {
    if image.channels() != text.vector.len() {
        return Err(Error::contract(format!(
            "image has {} channels, text vector has {}",
            image.channels(),
            text.vector.len()
        )));
    }
    let text_norm = l2(text.vector.view());
    if text_norm < MIN_NORM {
        return Err(Error::DegenerateFeature(format!(
            "text vector for `{}` has zero norm",
            text.source_keyword
        )));
    }
    let unit_text = &text.vector / text_norm;
    let values = image
        .patch_features
        .rows()
        .into_iter()
        .map(|row| {
            let n = l2(row);
            (row.dot(&unit_text) / n).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(SimilarityMap {
        values,
        polarity: text.polarity,
        chain_index: text.chain_index,
    })
}

/// Entrywise mean over chains of one polarity.
pub fn consensus(maps: &[SimilarityMap], polarity: Polarity) -> Result<Array1<f64>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::contract("consensus needs at least one map"))?;
    let n = first.values.len();
    let mut sum = Array1::<f64>::zeros(n);
    for m in maps {
        if m.polarity != polarity {
            return Err(Error::contract("consensus over mixed polarities"));
        }
        if m.values.len() != n {
            return Err(Error::contract("similarity maps differ in length"));
        }
        sum += &m.values;
    }
    Ok(sum / maps.len() as f64)
}

pub fn subtract_background(fore: ArrayView1<'_, f64>, back: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if fore.len() != back.len() {
        return Err(Error::contract("foreground and background lengths differ"));
    }
    Ok(&fore - &back)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapProvenance {
    pub grid_side: usize,
    pub upsample_factor: f64,
    pub lattice_side: usize,
    /// Raw bounds of the lattice before normalization.
    pub lattice_min: f64,
    pub lattice_max: f64,
    /// Raw bounds of the full-resolution map before normalization.
    pub raw_min: f64,
    pub raw_max: f64,
}

/// Normalized consensus heatmap at image resolution plus the normalized
/// point-sampling lattice it was derived alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: Array2<f64>,
    pub lattice: Array2<f64>,
    pub provenance: HeatmapProvenance,
}

impl Heatmap {
    /// `(height, width)` of the full-resolution grid.
    pub fn size(&self) -> (usize, usize) {
        self.grid.dim()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray(self.grid.view(), path)
    }
}

/// Side of the point-sampling lattice for a token grid and factor.
pub fn lattice_side(grid_side: usize, factor: f64) -> usize {
    ((grid_side as f64 * factor).round() as usize).max(1)
}

/// Reshapes `si` into its `g × g` grid and derives the lattice
/// (`g·factor` square) and the full-resolution heatmap, each min–max
/// normalized independently.
pub fn spatialize_and_upsample(
    si: ArrayView1<'_, f64>,
    grid_side: usize,
    factor: f64,
    target: (usize, usize),
) -> Result<Heatmap> {
    if grid_side == 0 || si.len() != grid_side * grid_side {
        return Err(Error::contract(format!(
            "{} similarity values do not form a {grid_side}x{grid_side} grid",
            si.len()
        )));
    }
    if !SUPPORTED_FACTORS.contains(&factor) {
        return Err(Error::contract(format!(
            "upsample factor {factor} not in {SUPPORTED_FACTORS:?}"
        )));
    }
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::contract("target size must be non-empty"));
    }
    let grid = si
        .to_owned()
        .into_shape_with_order((grid_side, grid_side))
        .map_err(|e| Error::contract(e.to_string()))?;

    let side = lattice_side(grid_side, factor);
    let raw_lattice = resize_bilinear(grid.view(), side, side);
    let (lattice, lattice_min, lattice_max) = min_max_normalize(raw_lattice.view());

    let full = resize_bilinear(grid.view(), th, tw);
    let (grid, raw_min, raw_max) = min_max_normalize(full.view());

    Ok(Heatmap {
        grid,
        lattice,
        provenance: HeatmapProvenance {
            grid_side,
            upsample_factor: factor,
            lattice_side: side,
            lattice_min,
            lattice_max,
            raw_min,
            raw_max,
        },
    })
}

/// Full consensus: mean foreground map minus mean background map.
pub fn consensus_map(
    image: &ImageFeatures,
    fore: &[TextFeature],
    back: &[TextFeature],
) -> Result<Array1<f64>> {
    let fore_maps = fore
        .iter()
        .map(|t| similarity_map(image, t))
        .collect::<Result<Vec<_>>>()?;
    let back_maps = back
        .iter()
        .map(|t| similarity_map(image, t))
        .collect::<Result<Vec<_>>>()?;
    let f = consensus(&fore_maps, Polarity::Foreground)?;
    let b = consensus(&back_maps, Polarity::Background)?;
    subtract_background(f.view(), b.view())
}
