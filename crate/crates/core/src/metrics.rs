//! Camouflaged-object metrics: mean absolute error, adaptive F-measure,
//! mean enhanced-alignment measure and structure measure.
//!
//! Predictions are real-valued maps in `[0, 1]`; ground truth is binary.

use ndarray::{s, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::visual_prompts::BinaryMask;

pub const BETA_SQUARED: f64 = 0.3;
pub const S_ALPHA: f64 = 0.5;
pub const E_THRESHOLDS: usize = 256;
const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mae: f64,
    pub f_beta: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
}

fn check(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<()> {
    if pred.dim() != gt.size() {
        return Err(Error::contract(format!(
            "prediction {:?} and ground truth {:?} differ in shape",
            pred.dim(),
            gt.size()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("empty prediction"));
    }
    if pred.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::contract("prediction values must lie in [0, 1]"));
    }
    Ok(())
}

pub fn mae(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let sum: f64 = pred
        .iter()
        .zip(gt.grid().iter())
        .map(|(&p, &g)| (p - g as u8 as f64).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Adaptive F-measure with `β² = 0.3`.
///
/// The prediction is binarized at `min(2·mean, 1)`. An all-zero prediction
/// binarizes to the empty set (rather than "everything ≥ 0").
pub fn adaptive_f(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let mean = pred.mean().unwrap_or(0.0);
    let threshold = (2.0 * mean).min(1.0);
    let (mut tp, mut predicted, mut actual) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt.grid().iter()) {
        let b = mean > 0.0 && p >= threshold;
        tp += (b && g) as usize;
        predicted += b as usize;
        actual += g as usize;
    }
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
    let denom = BETA_SQUARED * precision + recall;
    Ok(if denom == 0.0 {
        0.0
    } else {
        (1.0 + BETA_SQUARED) * precision * recall / denom
    })
}

/// Enhanced-alignment score of one binary foreground map.
fn e_binary(fm: &[bool], gt: &[bool]) -> f64 {
    let n = gt.len() as f64;
    let gt_fg = gt.iter().filter(|&&g| g).count();
    let fm_fg = fm.iter().filter(|&&f| f).count();
    // counts[fm][gt]
    let mut counts = [[0usize; 2]; 2];
    for (&f, &g) in fm.iter().zip(gt) {
        counts[f as usize][g as usize] += 1;
    }
    let sum = if gt_fg == 0 {
        // all-black GT: reward background agreement
        (gt.len() - fm_fg) as f64
    } else if gt_fg == gt.len() {
        fm_fg as f64
    } else {
        let mu_fm = fm_fg as f64 / n;
        let mu_gt = gt_fg as f64 / n;
        let mut total = 0.0;
        for (f, row) in counts.iter().enumerate() {
            for (g, &count) in row.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let a_fm = f as f64 - mu_fm;
                let a_gt = g as f64 - mu_gt;
                let align = 2.0 * a_gt * a_fm / (a_gt * a_gt + a_fm * a_fm + EPS);
                total += count as f64 * (align + 1.0).powi(2) / 4.0;
            }
        }
        total
    };
    sum / n
}

/// Mean enhanced-alignment measure over 256 thresholds at the bin centres
/// `(k + 0.5) / 256`, so binary predictions give the same map at every
/// threshold.
pub fn e_measure(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let gt_flat: Vec<bool> = gt.grid().iter().copied().collect();
    let values: Vec<f64> = pred.iter().copied().collect();
    let mut fm = vec![false; values.len()];
    let mut total = 0.0;
    let mut prev: Option<(Vec<bool>, f64)> = None;
    for k in 0..E_THRESHOLDS {
        let t = (k as f64 + 0.5) / E_THRESHOLDS as f64;
        for (b, &v) in fm.iter_mut().zip(&values) {
            *b = v >= t;
        }
        let score = match &prev {
            Some((p, s)) if *p == fm => *s,
            _ => {
                let s = e_binary(&fm, &gt_flat);
                prev = Some((fm.clone(), s));
                s
            }
        };
        total += score;
    }
    Ok(total / E_THRESHOLDS as f64)
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std, n)
}

fn object_score(values: impl Iterator<Item = f64>) -> f64 {
    let (x, sigma, n) = mean_std(values);
    if n == 0 {
        return 0.0;
    }
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

fn s_object(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> f64 {
    let u = gt.count() as f64 / pred.len() as f64;
    let g = gt.grid();
    let fg = pred
        .iter()
        .zip(g.iter())
        .filter(|(_, &g)| g)
        .map(|(&p, _)| p);
    let bg = pred
        .iter()
        .zip(g.iter())
        .filter(|(_, &g)| !g)
        .map(|(&p, _)| 1.0 - p);
    u * object_score(fg) + (1.0 - u) * object_score(bg)
}

fn ssim(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, bool>) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let x = pred.sum() / nf;
    let y = gt.iter().filter(|&&g| g).count() as f64 / nf;
    let denom = if n > 1 { nf - 1.0 } else { 1.0 };
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let dx = p - x;
        let dy = g as u8 as f64 - y;
        sx += dx * dx;
        sy += dy * dy;
        sxy += dx * dy;
    }
    let (sx, sy, sxy) = if n > 1 { (sx / denom, sy / denom, sxy / denom) } else { (0.0, 0.0, 0.0) };
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Candidate split positions along one axis: the number of leading
/// rows/columns in the first part. The split sits on the pixel boundary
/// nearest the centroid; a centroid exactly on a pixel centre yields both
/// neighbouring boundaries.
fn split_candidates(index_sum: u64, count: u64, len: usize) -> Vec<usize> {
    let q = (index_sum / count) as usize;
    if index_sum.is_multiple_of(count) {
        vec![q, (q + 1).min(len)]
    } else {
        vec![(q + 1).min(len)]
    }
}

fn s_region_at(pred: ArrayView2<'_, f64>, gt: &BinaryMask, sx: usize, sy: usize) -> f64 {
    let (h, w) = pred.dim();
    let area = (h * w) as f64;
    let g = gt.grid();
    let parts = [
        (s![..sy, ..sx], (sy * sx) as f64),
        (s![..sy, sx..], (sy * (w - sx)) as f64),
        (s![sy.., ..sx], ((h - sy) * sx) as f64),
        (s![sy.., sx..], ((h - sy) * (w - sx)) as f64),
    ];
    parts
        .into_iter()
        .map(|(sl, n)| {
            if n == 0.0 {
                0.0
            } else {
                n / area * ssim(pred.slice(sl), g.slice(sl))
            }
        })
        .sum()
}

fn s_region(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> f64 {
    let (h, w) = pred.dim();
    let (mut sum_r, mut sum_c, mut count) = (0u64, 0u64, 0u64);
    for ((r, c), &v) in gt.grid().indexed_iter() {
        if v {
            sum_r += r as u64;
            sum_c += c as u64;
            count += 1;
        }
    }
    let ys = split_candidates(sum_r, count, h);
    let xs = split_candidates(sum_c, count, w);
    let mut total = 0.0;
    for &sy in &ys {
        for &sx in &xs {
            total += s_region_at(pred, gt, sx, sy);
        }
    }
    total / (ys.len() * xs.len()) as f64
}

/// Structure measure `α·S_object + (1 − α)·S_region` with `α = 0.5`.
/// All-black GT scores `1 − mean(pred)`, all-white GT scores `mean(pred)`.
pub fn s_measure(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<f64> {
    check(pred, gt)?;
    let y = gt.count();
    let mean = pred.mean().unwrap_or(0.0);
    if y == 0 {
        return Ok(1.0 - mean);
    }
    if y == pred.len() {
        return Ok(mean);
    }
    let q = S_ALPHA * s_object(pred, gt) + (1.0 - S_ALPHA) * s_region(pred, gt);
    Ok(q.max(0.0))
}

pub fn evaluate(pred: ArrayView2<'_, f64>, gt: &BinaryMask) -> Result<MetricsRecord> {
    Ok(MetricsRecord {
        mae: mae(pred, gt)?,
        f_beta: adaptive_f(pred, gt)?,
        e_phi: e_measure(pred, gt)?,
        s_alpha: s_measure(pred, gt)?,
    })
}

/// Arithmetic mean per metric.
pub fn aggregate(records: &[MetricsRecord]) -> Result<MetricsRecord> {
    if records.is_empty() {
        return Err(Error::contract("nothing to aggregate"));
    }
    let n = records.len() as f64;
    let mut out = MetricsRecord::default();
    for r in records {
        out.mae += r.mae;
        out.f_beta += r.f_beta;
        out.e_phi += r.e_phi;
        out.s_alpha += r.s_alpha;
    }
    out.mae /= n;
    out.f_beta /= n;
    out.e_phi /= n;
    out.s_alpha /= n;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn gt_square() -> BinaryMask {
        BinaryMask::new(Array2::from_shape_fn((8, 8), |(r, c)| (2..5).contains(&r) && (3..7).contains(&c)))
    }

    #[test]
    fn perfect_prediction() {
        let gt = gt_square();
        let m = evaluate(gt.to_f64().view(), &gt).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.f_beta, 1.0);
        assert!((m.e_phi - 1.0).abs() < 1e-6);
        assert!(m.s_alpha >= 0.99);
    }

    #[test]
    fn inverted_prediction() {
        let gt = gt_square();
        let inv = gt.to_f64().mapv(|v| 1.0 - v);
        assert_eq!(mae(inv.view(), &gt).unwrap(), 1.0);
        assert_eq!(adaptive_f(inv.view(), &gt).unwrap(), 0.0);
    }

    #[test]
    fn all_zero_prediction() {
        let gt = gt_square();
        let z = Array2::<f64>::zeros((8, 8));
        assert_eq!(adaptive_f(z.view(), &gt).unwrap(), 0.0);
        // fm empty, gt mixed: every pixel has alignment 0 -> 0.25
        assert!((e_measure(z.view(), &gt).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ground_truth() {
        let empty = BinaryMask::filled(4, 4, false);
        let z = Array2::<f64>::zeros((4, 4));
        assert_eq!(e_measure(z.view(), &empty).unwrap(), 1.0);
        assert_eq!(s_measure(z.view(), &empty).unwrap(), 1.0);
        let half = Array2::from_elem((4, 4), 0.5);
        assert_eq!(s_measure(half.view(), &empty).unwrap(), 0.5);
        let full = BinaryMask::filled(4, 4, true);
        assert_eq!(s_measure(half.view(), &full).unwrap(), 0.5);
        assert_eq!(e_measure(Array2::ones((4, 4)).view(), &full).unwrap(), 1.0);
        assert_eq!(e_measure(z.view(), &full).unwrap(), 0.0);
    }

    #[test]
    fn shape_and_range_checks() {
        let gt = gt_square();
        assert!(mae(Array2::zeros((4, 4)).view(), &gt).is_err());
        assert!(mae(Array2::from_elem((8, 8), 1.5).view(), &gt).is_err());
    }

    #[test]
    fn aggregate_means() {
        let a = MetricsRecord { mae: 0.1, f_beta: 0.5, e_phi: 0.7, s_alpha: 0.9 };
        let b = MetricsRecord { mae: 0.3, f_beta: 0.7, e_phi: 0.9, s_alpha: 0.5 };
        assert_eq!(aggregate(&[a]).unwrap(), a);
        let m = aggregate(&[a, b]).unwrap();
        assert!((m.mae - 0.2).abs() < 1e-15 && (m.s_alpha - 0.7).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn split_candidates_tie() {
        // centroid column 3 exactly -> splits after 3 or 4 columns
        assert_eq!(split_candidates(6, 2, 8), vec![3, 4]);
        // centroid 3.5 -> boundary 4
        assert_eq!(split_candidates(7, 2, 8), vec![4]);
        assert_eq!(split_candidates(7, 1, 8), vec![7, 8]);
    }
}
