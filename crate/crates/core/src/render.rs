//! Inspection panels: input | colorized heatmap | mask boundary.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::image_ops::ImageTensor;
use crate::visual_prompts::BinaryMask;

pub const BOUNDARY_COLOR: [u8; 3] = [255, 0, 0];

/// Jet colormap for `v` in `[0, 1]`.
pub fn jet(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel = |center: f64| (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0);
    [channel(3.0), channel(2.0), channel(1.0)].map(|c| (c * 255.0).round() as u8)
}

/// Mask pixels with a 4-neighbour outside the mask. The image border counts
/// as outside.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.size();
    let mut out = BinaryMask::filled(h, w, false);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            out.set(r, c, edge);
        }
    }
    out
}

pub fn render_overlay(image: &ImageTensor, mask: &BinaryMask, heatmap: ArrayView2<'_, f64>) -> Result<RgbImage> {
    let (h, w) = image.size();
    if mask.size() != (h, w) || heatmap.dim() != (h, w) {
        return Err(Error::contract("image, mask and heatmap must share one size"));
    }
    let input = image.to_rgb();
    let edge = boundary(mask);
    let mut out = RgbImage::new(3 * w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (c as u32, r as u32);
            let px = *input.get_pixel(x, y);
            out.put_pixel(x, y, px);
            out.put_pixel(x + w as u32, y, Rgb(jet(heatmap[[r, c]])));
            let overlay = if edge.get(r, c) { Rgb(BOUNDARY_COLOR) } else { px };
            out.put_pixel(x + 2 * w as u32, y, overlay);
        }
    }
    Ok(out)
}

pub fn save_overlay(image: &ImageTensor, mask: &BinaryMask, heatmap: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    render_overlay(image, mask, heatmap)?.save(path)?;
    Ok(())
}
