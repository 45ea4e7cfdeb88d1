//! Synthetic camouflage scenes with matching QA fixtures for the mock
//! backends.
//!
//! Each scene paints the background in the mock colour of a background
//! keyword and an elliptic blob in the mock colour of a foreground keyword,
//! blended toward the background. The fixture answers the keyword chains
//! mostly correctly, with occasional wrong or unusable answers.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{keyword_color, patch_descriptor, QaFixture};
use crate::config::FIXTURE_FILE_NAME;
use crate::error::Result;
use crate::image_ops::{resize_bilinear, ImageTensor};
use crate::visual_prompts::BinaryMask;

pub const FORE_KEYWORDS: [&str; 8] = ["frog", "moth", "gecko", "crab", "owl", "mantis", "flounder", "katydid"];
pub const BACK_KEYWORDS: [&str; 8] = ["leaf", "bark", "sand", "moss", "rock", "twig", "gravel", "lichen"];

/// Chains answered in every fixture, enough for a five-chain sweep.
pub const FIXTURE_CHAINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub count: usize,
    pub size: usize,
    /// Generator seed (layout, noise, answers).
    pub seed: u64,
    /// Seed of the mock encoder the scenes are painted for.
    pub encoder_seed: u64,
    /// Fraction of background colour mixed into the blob.
    pub camouflage: f64,
    /// Amplitude of the smooth background texture.
    pub texture: f64,
    /// Per-pixel noise amplitude.
    pub noise: f64,
    /// Maximum number of off-target spots in a scene.
    pub distractors: usize,
    /// Range of the background fraction mixed into a spot's colour.
    pub distractor_mix: [f64; 2],
    /// Range of spot radii as a fraction of the image side.
    pub distractor_radius: [f64; 2],
    /// Probability that a chain answers with an unrelated foreground word.
    pub wrong_answer_rate: f64,
    /// Probability that a chain answer cannot be parsed.
    pub unusable_answer_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            count: 20,
            size: 112,
            seed: 7,
            encoder_seed: 0,
            camouflage: 0.35,
            texture: 0.08,
            noise: 0.03,
            distractors: 3,
            distractor_mix: [0.25, 0.5],
            distractor_radius: [0.05, 0.08],
            wrong_answer_rate: 0.1,
            unusable_answer_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub image: ImageTensor,
    pub mask: BinaryMask,
    pub fore_keyword: String,
    pub back_keyword: String,
}

fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (a, b) = (patch_descriptor(a), patch_descriptor(b));
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Keyword pair whose mock colours differ enough to be told apart.
fn pick_keywords(rng: &mut ChaCha8Rng, encoder_seed: u64) -> (&'static str, &'static str) {
    loop {
        let fore = *FORE_KEYWORDS.choose(rng).expect("non-empty");
        let back = *BACK_KEYWORDS.choose(rng).expect("non-empty");
        if color_distance(keyword_color(encoder_seed, fore), keyword_color(encoder_seed, back)) > 0.35 {
            return (fore, back);
        }
    }
}

/// Smooth noise in `[-1, 1]`: a coarse random grid upsampled bilinearly.
fn smooth_noise(rng: &mut ChaCha8Rng, size: usize, cells: usize) -> Array2<f64> {
    let coarse = Array2::from_shape_simple_fn((cells, cells), || rng.random_range(-1.0..1.0));
    resize_bilinear(coarse.view(), size, size)
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, row: usize, col: usize) -> bool {
        let dx = col as f64 + 0.5 - self.cx;
        let dy = row as f64 + 0.5 - self.cy;
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        u * u + v * v <= 1.0
    }
}

pub fn generate_scene(index: usize, cfg: &SyntheticConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let n = cfg.size;
    let nf = n as f64;
    let (fore, back) = pick_keywords(&mut rng, cfg.encoder_seed);
    let fg = keyword_color(cfg.encoder_seed, fore);
    let bg = keyword_color(cfg.encoder_seed, back);
    let blob_color: [f64; 3] = std::array::from_fn(|c| fg[c] * (1.0 - cfg.camouflage) + bg[c] * cfg.camouflage);

    let blob = Ellipse {
        cx: rng.random_range(0.3..0.7) * nf,
        cy: rng.random_range(0.3..0.7) * nf,
        rx: rng.random_range(0.1..0.22) * nf,
        ry: rng.random_range(0.1..0.22) * nf,
        angle: rng.random_range(0.0..std::f64::consts::PI),
    };
    let spots: Vec<(Ellipse, [f64; 3])> = (0..rng.random_range(0..=cfg.distractors))
        .map(|_| {
            let [r0, r1] = cfg.distractor_radius;
            let [m0, m1] = cfg.distractor_mix;
            let r = rng.random_range(r0..r1) * nf;
            let mix = rng.random_range(m0..m1);
            let e = Ellipse {
                cx: rng.random_range(0.08..0.92) * nf,
                cy: rng.random_range(0.08..0.92) * nf,
                rx: r,
                ry: r,
                angle: 0.0,
            };
            (e, std::array::from_fn(|c| fg[c] * (1.0 - mix) + bg[c] * mix))
        })
        .collect();

    let texture = smooth_noise(&mut rng, n, 8);
    let mut pixels = Array3::<f64>::zeros((n, n, 3));
    let mut mask = BinaryMask::filled(n, n, false);
    for r in 0..n {
        for c in 0..n {
            let on_blob = blob.contains(r, c);
            let base = if on_blob {
                blob_color
            } else {
                spots
                    .iter()
                    .find(|(e, _)| e.contains(r, c))
                    .map_or(bg, |(_, col)| *col)
            };
            mask.set(r, c, on_blob);
            let shade = cfg.texture * texture[[r, c]];
            for ch in 0..3 {
                let jitter = cfg.noise * rng.random_range(-1.0..1.0);
                pixels[[r, c, ch]] = (base[ch] + shade + jitter).clamp(0.0, 1.0);
            }
        }
    }
    // quantize as an 8-bit file would
    let pixels = pixels.mapv(|v| (v * 255.0).round() / 255.0);
    Scene {
        id: format!("scene_{index:03}"),
        image: ImageTensor::new(pixels).expect("values in range"),
        mask,
        fore_keyword: fore.to_string(),
        back_keyword: back.to_string(),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

/// Chain answers for one scene, keyed by template id.
fn scene_answers(scene: &Scene, index: usize, cfg: &SyntheticConfig) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000 ^ index as u64);
    let mut out = vec![(
        "caption".to_string(),
        format!("a {} sitting on a {}", scene.fore_keyword, scene.back_keyword),
    )];
    for j in 1..=FIXTURE_CHAINS {
        let roll: f64 = rng.random();
        let fore = if roll < cfg.unusable_answer_rate {
            "I'm not sure.".to_string()
        } else if roll < cfg.unusable_answer_rate + cfg.wrong_answer_rate {
            let other = FORE_KEYWORDS
                .iter()
                .filter(|k| **k != scene.fore_keyword)
                .collect::<Vec<_>>();
            format!("{}.", capitalize(other.choose(&mut rng).expect("non-empty")))
        } else {
            match j % 3 {
                0 => format!("{}.", capitalize(&scene.fore_keyword)),
                1 => format!("A {}", scene.fore_keyword),
                _ => format!("It is a {}, probably.", scene.fore_keyword),
            }
        };
        let back = if j % 2 == 0 {
            format!("The {}.", scene.back_keyword)
        } else {
            scene.back_keyword.clone()
        };
        out.push((format!("fore.{j}"), fore));
        out.push((format!("back.{j}"), back));
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> (Vec<Scene>, QaFixture) {
    let mut fixture = QaFixture::new();
    let scenes: Vec<Scene> = (0..cfg.count).map(|i| generate_scene(i, cfg)).collect();
    for (i, s) in scenes.iter().enumerate() {
        for (template, answer) in scene_answers(s, i, cfg) {
            fixture.insert(&s.id, &template, &answer);
        }
    }
    (scenes, fixture)
}

/// Writes `images/`, `masks/` and the fixture under `root`.
pub fn write_dataset(root: &Path, cfg: &SyntheticConfig) -> Result<Vec<Scene>> {
    let (scenes, fixture) = generate(cfg);
    std::fs::create_dir_all(root.join("images"))?;
    std::fs::create_dir_all(root.join("masks"))?;
    for s in &scenes {
        s.image.to_rgb().save(root.join("images").join(format!("{}.png", s.id)))?;
        s.mask.save_png(&root.join("masks").join(format!("{}.png", s.id)))?;
    }
    fixture.save(&root.join(FIXTURE_FILE_NAME))?;
    Ok(scenes)
}
