//! Heatmap → segmenter prompts: thresholded positive points, an equal
//! number of lowest-valued negative points, and an optional box or dense
//! mask derived from the previous iteration's mask.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{GrayImage, Luma};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.90;

/// Pixel-space point; `x` is the column axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Half-open pixel box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoxPrompt {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    pub fn contains_pixel(&self, row: usize, col: usize) -> bool {
        (self.y0..self.y1).contains(&row) && (self.x0..self.x1).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask(Array2<bool>);

impl BinaryMask {
    pub fn new(grid: Array2<bool>) -> Self {
        Self(grid)
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self(Array2::from_elem((height, width), value))
    }

    /// `true` where `grid >= threshold`.
    pub fn from_threshold(grid: ArrayView2<'_, f64>, threshold: f64) -> Self {
        Self(grid.mapv(|v| v >= threshold))
    }

    pub fn grid(&self) -> ArrayView2<'_, bool> {
        self.0.view()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0[[row, col]]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.0[[row, col]] = v;
    }

    /// `(height, width)`
    pub fn size(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&v| v)
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.0.mapv(|v| if v { 1.0 } else { 0.0 })
    }

    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.0.iter().zip(other.0.iter()) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn fill_box(height: usize, width: usize, b: &BoxPrompt) -> Self {
        Self(Array2::from_shape_fn((height, width), |(r, c)| b.contains_pixel(r, c)))
    }

    /// 8-bit single channel image, 0 / 255.
    pub fn to_gray(&self) -> GrayImage {
        let (h, w) = self.size();
        GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([if self.0[[y as usize, x as usize]] { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray().save(path)?;
        Ok(())
    }

    /// Loads a grayscale image binarized at mid-gray (`>= 128`).
    pub fn load_png(path: &Path) -> Result<Self> {
        let g = crate::image_ops::load_gray(path)?;
        Ok(Self(g.mapv(|v| v >= 128)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptSet {
    pub positives: Vec<Point>,
    pub negatives: Vec<Point>,
    pub bbox: Option<BoxPrompt>,
    /// Dense mask prompt (only in [`PostMode::Mask`]).
    pub prev_mask: Option<BinaryMask>,
}

/// How the previous mask feeds the next prompt set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostMode {
    None,
    /// Bounding box of the whole previous mask.
    MaxBox,
    /// Previous mask as a dense mask prompt.
    Mask,
    /// Component box with the best fill-IoU against the previous mask.
    #[default]
    MaxIouBox,
}

impl PostMode {
    pub const ALL: [PostMode; 4] = [PostMode::None, PostMode::MaxBox, PostMode::Mask, PostMode::MaxIouBox];

    pub fn as_str(self) -> &'static str {
        match self {
            PostMode::None => "none",
            PostMode::MaxBox => "maxbox",
            PostMode::Mask => "mask",
            PostMode::MaxIouBox => "maxioubox",
        }
    }
}

impl fmt::Display for PostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PostMode::None),
            "maxbox" => Ok(PostMode::MaxBox),
            "mask" => Ok(PostMode::Mask),
            "maxioubox" => Ok(PostMode::MaxIouBox),
            other => Err(Error::Config(format!("unknown post-processing mode `{other}`"))),
        }
    }
}

fn cell_center(r: usize, c: usize, side: usize, (height, width): (usize, usize)) -> Point {
    Point {
        x: (c as f64 + 0.5) / side as f64 * width as f64,
        y: (r as f64 + 0.5) / side as f64 * height as f64,
    }
}

/// Positive and negative points from a normalized square lattice.
///
/// Positives are every cell `>= threshold` (or the single argmax cell when
/// none qualifies); negatives are the same number of lowest cells, ties in
/// row-major order. `image_size` is `(height, width)`.
pub fn extract_points(
    lattice: ArrayView2<'_, f64>,
    threshold: f64,
    image_size: (usize, usize),
) -> Result<PromptSet> {
    let (rows, cols) = lattice.dim();
    if rows == 0 || rows != cols {
        return Err(Error::contract(format!("lattice must be square, got {rows}x{cols}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!("threshold {threshold} outside (0, 1)")));
    }
    if image_size.0 == 0 || image_size.1 == 0 {
        return Err(Error::contract("image size must be non-empty"));
    }
    let side = rows;
    let values: Vec<f64> = lattice.iter().copied().collect();

    let mut positive_cells: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= threshold).collect();
    if positive_cells.is_empty() {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        positive_cells.push(best);
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let negative_cells = &order[..positive_cells.len()];

    let to_point = |i: usize| cell_center(i / side, i % side, side, image_size);
    Ok(PromptSet {
        positives: positive_cells.iter().map(|&i| to_point(i)).collect(),
        negatives: negative_cells.iter().map(|&i| to_point(i)).collect(),
        bbox: None,
        prev_mask: None,
    })
}

/// A 4-connected component: its pixel count and tight box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub pixels: usize,
    pub bbox: BoxPrompt,
}

/// 4-connected components in row-major order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (h, w) = mask.size();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || seen[[r, c]] {
                continue;
            }
            seen[[r, c]] = true;
            stack.push((r, c));
            let mut comp = Component {
                pixels: 0,
                bbox: BoxPrompt { x0: c, y0: r, x1: c + 1, y1: r + 1 },
            };
            while let Some((y, x)) = stack.pop() {
                comp.pixels += 1;
                comp.bbox.x0 = comp.bbox.x0.min(x);
                comp.bbox.x1 = comp.bbox.x1.max(x + 1);
                comp.bbox.y0 = comp.bbox.y0.min(y);
                comp.bbox.y1 = comp.bbox.y1.max(y + 1);
                let mut visit = |ny: usize, nx: usize| {
                    if mask.get(ny, nx) && !seen[[ny, nx]] {
                        seen[[ny, nx]] = true;
                        stack.push((ny, nx));
                    }
                };
                if y > 0 {
                    visit(y - 1, x);
                }
                if y + 1 < h {
                    visit(y + 1, x);
                }
                if x > 0 {
                    visit(y, x - 1);
                }
                if x + 1 < w {
                    visit(y, x + 1);
                }
            }
            out.push(comp);
        }
    }
    out
}

/// IoU between the solid box region and the mask.
pub fn box_fill_iou(b: &BoxPrompt, mask: &BinaryMask) -> f64 {
    let mut inter = 0usize;
    for r in b.y0..b.y1 {
        for c in b.x0..b.x1 {
            inter += mask.get(r, c) as usize;
        }
    }
    let union = b.area() + mask.count() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Component box maximizing fill-IoU with the whole mask; first wins ties.
pub fn max_iou_box(mask: &BinaryMask) -> Option<BoxPrompt> {
    let mut best: Option<(BoxPrompt, f64)> = None;
    for comp in connected_components(mask) {
        let iou = box_fill_iou(&comp.bbox, mask);
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((comp.bbox, iou));
        }
    }
    best.map(|(b, _)| b)
}

/// Tight box around every foreground pixel.
pub fn max_box(mask: &BinaryMask) -> Option<BoxPrompt> {
    let mut b: Option<BoxPrompt> = None;
    for ((r, c), &v) in mask.grid().indexed_iter() {
        if !v {
            continue;
        }
        let bb = b.get_or_insert(BoxPrompt { x0: c, y0: r, x1: c + 1, y1: r + 1 });
        bb.x0 = bb.x0.min(c);
        bb.x1 = bb.x1.max(c + 1);
        bb.y0 = bb.y0.min(r);
        bb.y1 = bb.y1.max(r + 1);
    }
    b
}

/// Adds the previous-mask prompt selected by `mode` to a point set.
pub fn assemble_prompts(points: PromptSet, prev_mask: Option<&BinaryMask>, mode: PostMode) -> PromptSet {
    let mut out = PromptSet {
        bbox: None,
        prev_mask: None,
        ..points
    };
    let Some(prev) = prev_mask else {
        return out;
    };
    match mode {
        PostMode::None => {}
        PostMode::MaxBox => out.bbox = max_box(prev),
        PostMode::MaxIouBox => out.bbox = max_iou_box(prev),
        PostMode::Mask => out.prev_mask = Some(prev.clone()),
    }
    out
}
