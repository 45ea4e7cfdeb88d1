//! Loop-based reference implementations shared by the integration tests.
//! Each one is written from the definitions, without calling the library
//! routine it checks.
#![allow(dead_code)]

use genprompt::spatial_attention::{AttentionMode, TokenFfn};
use genprompt::visual_prompts::{BinaryMask, BoxPrompt, Point};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-amp..amp))
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    BinaryMask::new(Array2::from_shape_simple_fn((h, w), || rng.random_bool(p)))
}

/// Random mask with at least one set and one unset pixel.
pub fn random_mixed_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    loop {
        let p = rng.random_range(0.1..0.9);
        let m = random_mask(rng, h, w, p);
        if m.count() > 0 && m.count() < h * w {
            return m;
        }
    }
}

fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.ncols();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[[i, t]] * b[[t, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Per-head, per-row attention with explicit softmax. Returns the output and
/// each head's probability matrix.
pub fn attention_oracle(
    x: &Array2<f64>,
    w_k: &Array2<f64>,
    w_q: &Array2<f64>,
    w_v: &Array2<f64>,
    heads: usize,
    mode: AttentionMode,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let k = matmul(x, w_k);
    let q = matmul(x, w_q);
    let v = matmul(x, w_v);
    let (left, right) = match mode {
        AttentionMode::Kkv => (&k, &k),
        AttentionMode::Kqv => (&q, &k),
        AttentionMode::Vvv => (&v, &v),
    };
    let l = x.nrows();
    let logit_width = left.ncols() / heads;
    let value_width = v.ncols() / heads;
    let scale = 1.0 / (w_k.ncols() as f64 / heads as f64).sqrt();
    let mut out = Array2::zeros((l, v.ncols()));
    let mut probs = Vec::new();
    for h in 0..heads {
        let mut p = Array2::zeros((l, l));
        for i in 0..l {
            let mut logits = vec![0.0; l];
            for (j, logit) in logits.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..logit_width {
                    s += left[[i, h * logit_width + c]] * right[[j, h * logit_width + c]];
                }
                *logit = s * scale;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..l {
                p[[i, j]] = exps[j] / total;
            }
            for c in 0..value_width {
                let mut s = 0.0;
                for j in 0..l {
                    s += p[[i, j]] * v[[j, h * value_width + c]];
                }
                out[[i, h * value_width + c]] = s;
            }
        }
        probs.push(p);
    }
    (out, probs)
}

/// One block's weights for the straight-line recurrence.
pub struct OracleBlock<'a> {
    pub w_k: &'a Array2<f64>,
    pub w_q: &'a Array2<f64>,
    pub w_v: &'a Array2<f64>,
    pub heads: usize,
    pub ffn: &'a dyn TokenFfn,
}

/// The two-stream recurrence unrolled layer by layer:
/// original `s ← f(kqv(s) + s)`; from block δ on the alternate stream
/// `ŝ ← f(mode(s) + r)` where `r = s` at block δ and `ŝ` afterwards.
pub fn dual_path_oracle(
    input: &Array2<f64>,
    blocks: &[OracleBlock<'_>],
    delta: usize,
    mode: AttentionMode,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let mut s = input.clone();
    let mut s_hat: Option<Array2<f64>> = None;
    for (i, b) in blocks.iter().enumerate() {
        let m = i + 1;
        let (orig_attn, _) = attention_oracle(&s, b.w_k, b.w_q, b.w_v, b.heads, AttentionMode::Kqv);
        let next = b.ffn.apply((&orig_attn + &s).view());
        let next_hat = if m < delta {
            None
        } else {
            let (alt_attn, _) = attention_oracle(&s, b.w_k, b.w_q, b.w_v, b.heads, mode);
            let residual = if m == delta { s.clone() } else { s_hat.clone().expect("stream open") };
            Some(b.ffn.apply((&alt_attn + &residual).view()))
        };
        s = next;
        s_hat = next_hat;
    }
    (s, s_hat)
}

pub fn cosine_oracle(patches: &Array2<f64>, text: &Array1<f64>) -> Vec<f64> {
    let tn: f64 = text.iter().map(|v| v * v).sum::<f64>().sqrt();
    patches
        .rows()
        .into_iter()
        .map(|row| {
            let mut dot = 0.0;
            let mut rn = 0.0;
            for (a, b) in row.iter().zip(text.iter()) {
                dot += a * b;
                rn += a * a;
            }
            dot / (rn.sqrt() * tn)
        })
        .collect()
}

/// Bilinear sample with half-pixel centres, written per output pixel.
pub fn bilinear_oracle(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let coord = |o: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        let x = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, x - lo as f64)
    };
    Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let (r0, r1, fy) = coord(r, out_h, h);
        let (c0, c1, fx) = coord(c, out_w, w);
        let top = src[[r0, c0]] * (1.0 - fx) + src[[r0, c1]] * fx;
        let bottom = src[[r1, c0]] * (1.0 - fx) + src[[r1, c1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Positives and negatives via a full sort of the lattice.
pub fn points_oracle(lattice: &Array2<f64>, threshold: f64, size: (usize, usize)) -> (Vec<Point>, Vec<Point>) {
    let side = lattice.nrows();
    let (h, w) = size;
    let center = |i: usize| Point {
        x: ((i % side) as f64 + 0.5) / side as f64 * w as f64,
        y: ((i / side) as f64 + 0.5) / side as f64 * h as f64,
    };
    let flat: Vec<f64> = lattice.iter().copied().collect();
    let mut pos: Vec<usize> = (0..flat.len()).filter(|&i| flat[i] >= threshold).collect();
    if pos.is_empty() {
        // first maximum in row-major order
        let mut best = 0;
        for i in 1..flat.len() {
            if flat[i] > flat[best] {
                best = i;
            }
        }
        pos.push(best);
    }
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| flat[a].partial_cmp(&flat[b]).unwrap().then(a.cmp(&b)));
    let neg = &order[..pos.len()];
    (pos.iter().map(|&i| center(i)).collect(), neg.iter().map(|&i| center(i)).collect())
}

/// Components by repeated label propagation until stable, then the box with
/// the best fill-IoU (earliest component in row-major order on ties).
pub fn max_iou_box_oracle(mask: &BinaryMask) -> Option<BoxPrompt> {
    let (h, w) = mask.size();
    let mut label = Array2::<usize>::zeros((h, w));
    let mut next = 1;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                label[[r, c]] = next;
                next += 1;
            }
        }
    }
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                if label[[r, c]] == 0 {
                    continue;
                }
                let mut m = label[[r, c]];
                let neighbours = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (y, x) in neighbours {
                    if y < h && x < w && label[[y, x]] != 0 {
                        m = m.min(label[[y, x]]);
                    }
                }
                if m != label[[r, c]] {
                    label[[r, c]] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // the minimum label of a component is its first pixel in row-major order
    let mut ids: Vec<usize> = label.iter().copied().filter(|&l| l != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let total = mask.count();
    let mut best: Option<(BoxPrompt, f64)> = None;
    for id in ids {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for ((r, c), &l) in label.indexed_iter() {
            if l == id {
                x0 = x0.min(c);
                y0 = y0.min(r);
                x1 = x1.max(c + 1);
                y1 = y1.max(r + 1);
            }
        }
        let mut inter = 0;
        for r in y0..y1 {
            for c in x0..x1 {
                inter += mask.get(r, c) as usize;
            }
        }
        let area = (x1 - x0) * (y1 - y0);
        let iou = inter as f64 / (area + total - inter) as f64;
        if best.as_ref().is_none_or(|(_, b)| iou > *b) {
            best = Some((BoxPrompt { x0, y0, x1, y1 }, iou));
        }
    }
    best.map(|(b, _)| b)
}

/// Literal `X·H·w + X·(1 − w)` per pixel per channel.
pub fn reweight_oracle(x: &Array3<f64>, heat: &Array2<f64>, w: f64) -> Array3<f64> {
    let mut out = x.clone();
    for ((r, c, ch), v) in out.indexed_iter_mut() {
        *v = x[[r, c, ch]] * heat[[r, c]] * w + x[[r, c, ch]] * (1.0 - w);
    }
    out
}

/// Exhaustive L1 argmin against the entrywise mean (first index on ties).
/// Works on `n · mean`, which is integral, so ties compare exactly.
pub fn select_oracle(masks: &[BinaryMask]) -> usize {
    let (h, w) = masks[0].size();
    let n = masks.len() as i64;
    let mut votes = vec![0i64; h * w];
    for m in masks {
        for (i, &v) in m.grid().iter().enumerate() {
            votes[i] += v as i64;
        }
    }
    let dist = |m: &BinaryMask| -> i64 {
        m.grid()
            .iter()
            .zip(&votes)
            .map(|(&v, &c)| (v as i64 * n - c).abs())
            .sum()
    };
    let mut best = 0;
    for i in 1..masks.len() {
        if dist(&masks[i]) < dist(&masks[best]) {
            best = i;
        }
    }
    best
}

pub fn mae_oracle(pred: &Array2<f64>, gt: &BinaryMask) -> f64 {
    let mut s = 0.0;
    for ((r, c), &p) in pred.indexed_iter() {
        s += (p - if gt.get(r, c) { 1.0 } else { 0.0 }).abs();
    }
    s / pred.len() as f64
}

pub fn adaptive_f_oracle(pred: &Array2<f64>, gt: &BinaryMask) -> f64 {
    let mean = pred.sum() / pred.len() as f64;
    let thr = (2.0 * mean).min(1.0);
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for ((r, c), &p) in pred.indexed_iter() {
        let b = mean > 0.0 && p >= thr;
        match (b, gt.get(r, c)) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    if 0.3 * precision + recall == 0.0 {
        0.0
    } else {
        1.3 * precision * recall / (0.3 * precision + recall)
    }
}

/// Enhanced alignment, evaluated pixel by pixel at each of 256 thresholds.
pub fn e_measure_oracle(pred: &Array2<f64>, gt: &BinaryMask) -> f64 {
    let n = pred.len() as f64;
    let gt_f: Vec<f64> = gt.grid().iter().map(|&g| g as u8 as f64).collect();
    let gt_mean = gt_f.iter().sum::<f64>() / n;
    let mut total = 0.0;
    for k in 0..256 {
        let t = (k as f64 + 0.5) / 256.0;
        let fm: Vec<f64> = pred.iter().map(|&p| if p >= t { 1.0 } else { 0.0 }).collect();
        let fm_mean = fm.iter().sum::<f64>() / n;
        let score = if gt_mean == 0.0 {
            fm.iter().map(|f| 1.0 - f).sum::<f64>() / n
        } else if gt_mean == 1.0 {
            fm.iter().sum::<f64>() / n
        } else {
            let mut s = 0.0;
            for (f, g) in fm.iter().zip(&gt_f) {
                let a = f - fm_mean;
                let b = g - gt_mean;
                let align = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                s += (1.0 + align) * (1.0 + align) / 4.0;
            }
            s / n
        };
        total += score;
    }
    total / 256.0
}

fn ssim_oracle(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let x = p.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    if p.len() > 1 {
        for (a, b) in p.iter().zip(g) {
            sx += (a - x) * (a - x);
            sy += (b - y) * (b - y);
            sxy += (a - x) * (b - y);
        }
        sx /= n - 1.0;
        sy /= n - 1.0;
        sxy /= n - 1.0;
    }
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn object_oracle(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + f64::EPSILON)
}

/// Structure measure with the centroid split on the nearest pixel boundary,
/// averaged over both neighbours when the centroid is on a pixel centre.
pub fn s_measure_oracle(pred: &Array2<f64>, gt: &BinaryMask) -> f64 {
    let (h, w) = pred.dim();
    let n = (h * w) as f64;
    let count = gt.count();
    let mean_pred = pred.sum() / n;
    if count == 0 {
        return 1.0 - mean_pred;
    }
    if count == h * w {
        return mean_pred;
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for ((r, c), &p) in pred.indexed_iter() {
        if gt.get(r, c) {
            fg.push(p);
        } else {
            bg.push(1.0 - p);
        }
    }
    let u = count as f64 / n;
    let object = u * object_oracle(&fg) + (1.0 - u) * object_oracle(&bg);

    let (mut cy, mut cx) = (0.0, 0.0);
    for ((r, c), &g) in gt.grid().indexed_iter() {
        if g {
            cy += r as f64;
            cx += c as f64;
        }
    }
    cy /= count as f64;
    cx /= count as f64;
    let splits = |center: f64, len: usize| -> Vec<usize> {
        let f = center.floor();
        if (center - f).abs() < 1e-9 {
            vec![f as usize, (f as usize + 1).min(len)]
        } else {
            vec![(f as usize + 1).min(len)]
        }
    };
    let mut region = 0.0;
    let (ys, xs) = (splits(cy, h), splits(cx, w));
    for &sy in &ys {
        for &sx in &xs {
            let mut score = 0.0;
            for (r0, r1, c0, c1) in [(0, sy, 0, sx), (0, sy, sx, w), (sy, h, 0, sx), (sy, h, sx, w)] {
                let mut p = Vec::new();
                let mut g = Vec::new();
                for r in r0..r1 {
                    for c in c0..c1 {
                        p.push(pred[[r, c]]);
                        g.push(if gt.get(r, c) { 1.0 } else { 0.0 });
                    }
                }
                if !p.is_empty() {
                    score += p.len() as f64 / n * ssim_oracle(&p, &g);
                }
            }
            region += score;
        }
    }
    region /= (ys.len() * xs.len()) as f64;
    (0.5 * object + 0.5 * region).max(0.0)
}

pub fn flip_horizontal(pred: &Array2<f64>, gt: &BinaryMask) -> (Array2<f64>, BinaryMask) {
    let (h, w) = pred.dim();
    let p = Array2::from_shape_fn((h, w), |(r, c)| pred[[r, w - 1 - c]]);
    let g = BinaryMask::new(Array2::from_shape_fn((h, w), |(r, c)| gt.get(r, w - 1 - c)));
    (p, g)
}
