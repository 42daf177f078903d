//! Corpora, window sampling, training-set extraction and the synthetic
//! corpus generator.

mod manifest;
mod sampling;
mod synth;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use crate::eval::Annotation;
pub use manifest::{load_corpus, parse_manifest, save_corpus, write_manifest};
pub use sampling::{
    build_training_set, extract_patches, feature_margin, sample_negatives, sample_positives, window_channels,
    PatchOrigin, WindowSample, MAX_PAD_FRAC,
};
pub use synth::{make_synthetic, render_background, SynthSpec, REFERENCE_SEED};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ImageSource {
    File(PathBuf),
    Memory(Arc<Image>),
}

impl PartialEq for ImageSource {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ImageSource::File(a), ImageSource::File(b)) => a == b,
            (ImageSource::Memory(a), ImageSource::Memory(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: String,
    pub source: ImageSource,
    pub width: usize,
    pub height: usize,
    pub annotations: Vec<Annotation>,
}

impl CorpusEntry {
    pub fn load_image(&self) -> Result<Arc<Image>> {
        match &self.source {
            ImageSource::Memory(img) => Ok(Arc::clone(img)),
            ImageSource::File(p) => {
                let img = Image::load(p)?;
                if (img.width(), img.height()) != (self.width, self.height) {
                    return Err(Error::invalid(format!("{} changed size since the corpus was loaded", p.display())));
                }
                Ok(Arc::new(img))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub id: String,
    pub split: Split,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn new(id: impl Into<String>, split: Split) -> Self {
        Corpus {
            id: id.into(),
            split,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_annotations(&self) -> usize {
        self.entries.iter().map(|e| e.annotations.len()).sum()
    }

    /// Keeps every `k`-th entry, starting with the first.
    pub fn subsample(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("subsample factor must be at least 1"));
        }
        self.entries = self.entries.into_iter().step_by(k).collect();
        Ok(self)
    }

    pub fn entry(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}
