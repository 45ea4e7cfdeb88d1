use ndarray::Array2;

use super::{Candidate, Capabilities, SegmenterBackend};
use crate::error::{Error, Result};
use crate::image_ops::ImageTensor;
use crate::visual_prompts::{BinaryMask, Point, PromptSet};

/// Geometric stand-in for a promptable segmenter.
///
/// Mask = (union of disks around positives) minus (union of disks around
/// negatives), then intersected with the box if present. A dense mask
/// prompt restricts the result to the prompt mask grown by one radius.
/// Confidence is the fraction of positives inside the box (1.0 without one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockSegmenter {
    /// Disk radius as a fraction of the shorter image side.
    pub radius_fraction: f64,
}

impl Default for MockSegmenter {
    fn default() -> Self {
        Self {
            radius_fraction: 0.07,
        }
    }
}

impl MockSegmenter {
    pub fn radius(&self, height: usize, width: usize) -> f64 {
        self.radius_fraction * height.min(width) as f64
    }

    /// Pixel `(row, col)` lies in the disk when its centre is within `radius`.
    pub fn in_disk(row: usize, col: usize, p: &Point, radius: f64) -> bool {
        let dx = col as f64 + 0.5 - p.x;
        let dy = row as f64 + 0.5 - p.y;
        dx * dx + dy * dy <= radius * radius
    }

    fn paint(grid: &mut Array2<bool>, points: &[Point], radius: f64, value: bool) {
        let (h, w) = grid.dim();
        for p in points {
            let r0 = (p.y - radius - 1.0).floor().max(0.0) as usize;
            let r1 = ((p.y + radius + 1.0).ceil().max(0.0) as usize).min(h);
            let c0 = (p.x - radius - 1.0).floor().max(0.0) as usize;
            let c1 = ((p.x + radius + 1.0).ceil().max(0.0) as usize).min(w);
            for r in r0..r1 {
                for c in c0..c1 {
                    if Self::in_disk(r, c, p, radius) {
                        grid[[r, c]] = value;
                    }
                }
            }
        }
    }
}

impl SegmenterBackend for MockSegmenter {
    fn name(&self) -> &str {
        "mock-segmenter"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            concurrent_safe: true,
            deterministic: true,
        }
    }

    fn segment(&self, image: &ImageTensor, prompts: &PromptSet) -> Result<Vec<Candidate>> {
        let (h, w) = image.size();
        if prompts.positives.is_empty() {
            return Err(Error::contract("segmenter needs at least one positive point"));
        }
        let radius = self.radius(h, w);
        let mut grid = Array2::from_elem((h, w), false);
        Self::paint(&mut grid, &prompts.positives, radius, true);
        Self::paint(&mut grid, &prompts.negatives, radius, false);

        if let Some(b) = &prompts.bbox {
            for ((r, c), v) in grid.indexed_iter_mut() {
                *v &= b.contains_pixel(r, c);
            }
        }
        if let Some(prev) = &prompts.prev_mask {
            if prev.size() != (h, w) {
                return Err(Error::contract("mask prompt size differs from image"));
            }
            let mut grown = prev.grid().to_owned();
            let seeds: Vec<Point> = prev
                .grid()
                .indexed_iter()
                .filter(|(_, &v)| v)
                .map(|((r, c), _)| Point { x: c as f64 + 0.5, y: r as f64 + 0.5 })
                .collect();
            Self::paint(&mut grown, &seeds, radius, true);
            grid.zip_mut_with(&grown, |a, &b| *a &= b);
        }

        let score = match &prompts.bbox {
            Some(b) => {
                let inside = prompts.positives.iter().filter(|p| b.contains(p.x, p.y)).count();
                inside as f64 / prompts.positives.len() as f64
            }
            None => 1.0,
        };
        Ok(vec![Candidate {
            mask: BinaryMask::new(grid),
            score,
        }])
    }
}
