//! Scenes: image size, detected objects, OCR tokens and question/answer pairs.

mod format;
mod synth;
mod vocab;

pub use format::{
    load_dataset, load_scene, save_scene, write_dataset, Dataset, DatasetEntry, LoadLimits,
    LoadReport, Manifest, ManifestEntry, Split, MANIFEST_FILE, SCENE_FORMAT_VERSION, SCENE_SUFFIX,
};
pub use synth::{
    label_feature, scene_name, synth_dataset, synth_generate, synth_generate_with, CountRange,
    Layout, SplitRatios, SynthSpec,
};
pub use vocab::{Vocabulary, BEGIN, END, PAD, UNK};

use crate::geometry::BoundingBox;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Object,
    Token,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Object => "object",
            EntityKind::Token => "token",
        }
    }
}

/// A detected object or OCR token.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: u32,
    pub kind: EntityKind,
    pub bbox: BoundingBox,
    /// Object class name, or the token's text.
    pub label: String,
    /// Appearance feature standing in for detector / OCR embeddings.
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaExample {
    pub question: Vec<String>,
    pub answers: Vec<String>,
}

impl QaExample {
    /// The most frequent normalized gold answer; ties go to the earliest.
    pub fn majority_answer(&self) -> String {
        let normalized: Vec<String> = self.answers.iter().map(|a| text::normalize(a)).collect();
        let mut best = (0usize, String::new());
        for (i, a) in normalized.iter().enumerate() {
            if normalized[..i].contains(a) {
                continue;
            }
            let count = normalized.iter().filter(|b| *b == a).count();
            if count > best.0 {
                best = (count, a.clone());
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_width: f64,
    pub image_height: f64,
    pub objects: Vec<Entity>,
    pub tokens: Vec<Entity>,
    pub examples: Vec<QaExample>,
}

impl Scene {
    /// Image diagonal length.
    pub fn diagonal(&self) -> f64 {
        self.image_width.hypot(self.image_height)
    }

    /// Box-coordinate feature `[x_tl/W, y_tl/H, x_br/W, y_br/H]`.
    pub fn box_feature(&self, b: &BoundingBox) -> [f64; 4] {
        [
            b.x_tl() / self.image_width,
            b.y_tl() / self.image_height,
            b.x_br() / self.image_width,
            b.y_br() / self.image_height,
        ]
    }

    /// Indices of tokens whose normalized label equals the normalized `word`.
    pub fn tokens_matching(&self, word: &str) -> Vec<usize> {
        let w = text::normalize(word);
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| text::normalize(&t.label) == w)
            .map(|(i, _)| i)
            .collect()
    }

    /// Every entity in `objects ++ tokens` order.
    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.objects.iter().chain(self.tokens.iter())
    }
}
