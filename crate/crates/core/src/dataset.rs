//! Image / ground-truth directory pairs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_ops::ImageTensor;
use crate::visual_prompts::BinaryMask;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Directory layouts probed by [`DatasetSpec::discover`], as
/// `(image dir, mask dir)`.
pub const LAYOUTS: [(&str, &str); 2] = [("images", "masks"), ("Imgs", "GT")];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub image_dir: PathBuf,
    pub mask_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub stem: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

impl Sample {
    pub fn load_image(&self) -> Result<ImageTensor> {
        ImageTensor::open(&self.image_path)
    }

    /// Ground truth binarized at mid-gray (>= 128).
    pub fn load_mask(&self) -> Result<BinaryMask> {
        BinaryMask::load_png(&self.mask_path)
    }
}

fn files_by_stem(dir: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_default().push(path);
        }
    }
    Ok(out)
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, image_dir: impl Into<PathBuf>, mask_dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            image_dir: image_dir.into(),
            mask_dir: mask_dir.into(),
        }
    }

    /// Finds the first known layout under `root`.
    pub fn discover(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Config(format!("dataset root {} does not exist", root.display())));
        }
        let name = root
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("dataset")
            .to_string();
        LAYOUTS
            .iter()
            .map(|(i, m)| (root.join(i), root.join(m)))
            .find(|(i, m)| i.is_dir() && m.is_dir())
            .map(|(i, m)| Self::new(name, i, m))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no images/+masks/ or Imgs/+GT/ directories under {}",
                    root.display()
                ))
            })
    }

    /// Image/mask pairs sorted by stem. Every image needs exactly one mask.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        for dir in [&self.image_dir, &self.mask_dir] {
            if !dir.is_dir() {
                return Err(Error::Config(format!("missing directory {}", dir.display())));
            }
        }
        let images = files_by_stem(&self.image_dir)?;
        let masks = files_by_stem(&self.mask_dir)?;
        let mut out = Vec::with_capacity(images.len());
        for (stem, mut paths) in images {
            if paths.len() > 1 {
                return Err(Error::Config(format!("several images share the stem `{stem}`")));
            }
            let mask_path = match masks.get(&stem).map(Vec::as_slice) {
                Some([one]) => one.clone(),
                Some([]) | None => {
                    return Err(Error::Config(format!("image `{stem}` has no ground-truth mask")))
                }
                Some(_) => return Err(Error::Config(format!("several masks share the stem `{stem}`"))),
            };
            out.push(Sample {
                stem,
                image_path: paths.remove(0),
                mask_path,
            });
        }
        if out.is_empty() {
            return Err(Error::Config(format!("no images in {}", self.image_dir.display())));
        }
        Ok(out)
    }
}
