//! Training-free segmentation from one generic task prompt.
//!
//! Keyword chains over a caption/QA model produce foreground and background
//! keywords per image; a dual-path encoder turns them into a consensus
//! heatmap; the heatmap yields point and box prompts for a promptable
//! segmenter; a progressive loop re-weights the image and picks the most
//! typical mask.

pub mod backends;
pub mod cctp;
pub mod config;
pub mod dataset;
pub mod error;
pub mod heatmap;
pub mod image_ops;
pub mod metrics;
pub mod pmg;
pub mod render;
pub mod run;
pub mod spatial_attention;
pub mod synthetic;
pub mod visual_prompts;

pub use error::{Error, Result};
