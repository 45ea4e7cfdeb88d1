use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Capabilities, CaptionQaBackend, ImageRef, QaQuery};
use crate::error::{Error, Result};

/// Answers keyed by image id, then by template id (`caption`, `fore.1`, ...).
///
/// Stored as TOML:
///
/// ```toml
/// version = 1
///
/// [images.grasshopper_01]
/// caption = "a grasshopper on a green leaf"
/// "fore.1" = "Grasshopper."
/// "back.1" = "leaf"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaFixture {
    pub version: u32,
    pub images: BTreeMap<String, BTreeMap<String, String>>,
}

impl QaFixture {
    pub fn new() -> Self {
        Self {
            version: 1,
            images: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: &str, template_id: &str, answer: &str) {
        self.images
            .entry(image_id.to_string())
            .or_default()
            .insert(template_id.to_string(), answer.to_string());
    }

    pub fn answer(&self, image_id: &str, template_id: &str) -> Result<&str> {
        let entries = self
            .images
            .get(image_id)
            .ok_or_else(|| Error::Fixture(format!("unknown image id `{image_id}`")))?;
        entries
            .get(template_id)
            .map(String::as_str)
            .ok_or_else(|| Error::Fixture(format!("no `{template_id}` answer for `{image_id}`")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: Self = toml::from_str(text).map_err(|e| Error::Fixture(e.to_string()))?;
        if f.version != 1 {
            return Err(Error::Fixture(format!("unsupported fixture version {}", f.version)));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Fixture lookup backend. Ignores pixels and conversational context.
#[derive(Debug)]
pub struct MockCaptionQa {
    fixture: QaFixture,
    served: AtomicUsize,
}

impl MockCaptionQa {
    pub fn new(fixture: QaFixture) -> Self {
        Self {
            fixture,
            served: AtomicUsize::new(0),
        }
    }

    /// Number of queries answered so far (including failed lookups).
    pub fn queries_served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    pub fn fixture(&self) -> &QaFixture {
        &self.fixture
    }
}

impl CaptionQaBackend for MockCaptionQa {
    fn name(&self) -> &str {
        "mock-qa"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            concurrent_safe: true,
            deterministic: true,
        }
    }

    fn ask(&self, image: ImageRef<'_>, query: &QaQuery) -> Result<String> {
        self.served.fetch_add(1, Ordering::SeqCst);
        self.fixture
            .answer(image.id, &query.kind.template_id())
            .map(str::to_string)
    }
}
