//! Image containers, resampling and file IO shared by the pipeline stages.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::{Array2, Array3, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// RGB image with channels in `[0, 1]`, laid out `[height, width, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor(pub Array3<f64>);

impl ImageTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 || c != 3 {
            return Err(Error::contract(format!("expected [H, W, 3] image, got [{h}, {w}, {c}]")));
        }
        Ok(Self(data))
    }

    pub fn height(&self) -> usize {
        self.0.dim().0
    }

    pub fn width(&self) -> usize {
        self.0.dim().1
    }

    /// `(height, width)`
    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
        });
        Self(data)
    }

    pub fn to_rgb(&self) -> RgbImage {
        let (h, w) = self.size();
        RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c| to_u8(self.0[[y as usize, x as usize, c]]);
            Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::from_rgb(&image::open(path)?.to_rgb8()))
    }

    /// Short hex digest of the exact pixel values.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        let (h, w) = self.size();
        hasher.update((h as u64).to_le_bytes());
        hasher.update((w as u64).to_le_bytes());
        for v in self.0.iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        let bytes = hasher.finalize();
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Bilinear resize with half-pixel centres and edge clamping.
///
/// Output pixel `i` samples the source at `(i + 0.5) · in / out - 0.5`,
/// clamped to `[0, in - 1]`.
pub fn resize_bilinear(src: ArrayView2<'_, f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = src.dim();
    assert!(in_h > 0 && in_w > 0, "cannot resize an empty grid");
    let ys: Vec<(usize, usize, f64)> = (0..out_h).map(|i| sample_axis(i, in_h, out_h)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|j| sample_axis(j, in_w, out_w)).collect();
    Array2::from_shape_fn((out_h, out_w), |(i, j)| {
        let (y0, y1, fy) = ys[i];
        let (x0, x1, fx) = xs[j];
        let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
        let bottom = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn sample_axis(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n_in - 1);
    (lo, hi, pos - lo as f64)
}

/// Min–max normalization to `[0, 1]`; constant grids map to 0.5.
/// Returns the normalized grid and the raw `(min, max)`.
pub fn min_max_normalize(grid: ArrayView2<'_, f64>) -> (Array2<f64>, f64, f64) {
    let min = grid.fold(f64::INFINITY, |m, &v| m.min(v));
    let max = grid.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let range = max - min;
    let out = if range > 0.0 {
        grid.mapv(|v| ((v - min) / range).clamp(0.0, 1.0))
    } else {
        Array2::from_elem(grid.dim(), 0.5)
    };
    (out, min, max)
}

/// Area-average an image channel-wise onto a `side × side` grid.
pub fn area_downsample(image: &ImageTensor, side: usize) -> Array3<f64> {
    let (h, w) = image.size();
    let mut out = Array3::<f64>::zeros((side, side, 3));
    for r in 0..side {
        let (y0, y1) = span(r, side, h);
        for c in 0..side {
            let (x0, x1) = span(c, side, w);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for ch in 0..3 {
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += image.0[[y, x, ch]];
                    }
                }
                out[[r, c, ch]] = sum / n;
            }
        }
    }
    out
}

fn span(i: usize, parts: usize, len: usize) -> (usize, usize) {
    let a = i * len / parts;
    let b = ((i + 1) * len / parts).max(a + 1).min(len);
    (a.min(len - 1), b)
}

/// Writes a `[0, 1]` grid as 8-bit grayscale with value `round(255 · v)`.
pub fn save_gray(grid: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let (h, w) = grid.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([to_u8(grid[[y as usize, x as usize]])]));
    img.save(path)?;
    Ok(())
}

pub fn load_gray(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        img.get_pixel(x as u32, y as u32)[0]
    }))
}
