//! Versioned JSON scene files and dataset directories.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Entity, EntityKind, QaExample, Scene};
use crate::error::{Result, SsgnError};
use crate::geometry::BoundingBox;

pub const SCENE_FORMAT_VERSION: &str = "1";
pub const SCENE_SUFFIX: &str = ".scene.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: String,
    image: ImageDoc,
    objects: Vec<EntityDoc>,
    tokens: Vec<EntityDoc>,
    examples: Vec<ExampleDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageDoc {
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    id: u32,
    label: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    feature: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleDoc {
    question: Vec<String>,
    answers: Vec<String>,
}

/// Entity caps enforced on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadLimits {
    pub max_objects: usize,
    pub max_tokens: usize,
}

impl Default for LoadLimits {
    fn default() -> Self {
        LoadLimits {
            max_objects: 100,
            max_tokens: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Boxes that extended past the image and were clipped.
    pub clamped: usize,
}

pub fn load_scene(bytes: &[u8], limits: LoadLimits) -> Result<(Scene, LoadReport)> {
    let doc: SceneDoc =
        serde_json::from_slice(bytes).map_err(|e| SsgnError::format("scene", e.to_string()))?;
    if doc.version != SCENE_FORMAT_VERSION {
        return Err(SsgnError::format(
            "version",
            format!(
                "expected \"{SCENE_FORMAT_VERSION}\", found \"{}\"",
                doc.version
            ),
        ));
    }
    let (w, h) = (doc.image.w, doc.image.h);
    if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
        return Err(SsgnError::format(
            "image",
            format!("dimensions must be positive, got {w}x{h}"),
        ));
    }
    if doc.objects.len() > limits.max_objects {
        return Err(SsgnError::format(
            "objects",
            format!(
                "{} entries exceed the cap of {}",
                doc.objects.len(),
                limits.max_objects
            ),
        ));
    }
    if doc.tokens.len() > limits.max_tokens {
        return Err(SsgnError::format(
            "tokens",
            format!(
                "{} entries exceed the cap of {}",
                doc.tokens.len(),
                limits.max_tokens
            ),
        ));
    }

    let mut report = LoadReport::default();
    let mut ids = BTreeSet::new();
    let mut convert =
        |list: Vec<EntityDoc>, kind: EntityKind, field: &str| -> Result<Vec<Entity>> {
            let mut dim = None;
            list.into_iter()
                .enumerate()
                .map(|(i, e)| {
                    let at = |sub: &str| format!("{field}[{i}].{sub}");
                    if !ids.insert(e.id) {
                        return Err(SsgnError::format(
                            at("id"),
                            format!("duplicate id {}", e.id),
                        ));
                    }
                    if e.bbox.coords().iter().any(|c| !c.is_finite()) {
                        return Err(SsgnError::format(at("box"), "non-finite coordinate"));
                    }
                    let (bbox, changed) = e.bbox.clamp_to(w, h);
                    if changed {
                        report.clamped += 1;
                    }
                    if !bbox.is_proper() {
                        return Err(SsgnError::format(
                            at("box"),
                            "degenerate after clamping to the image",
                        ));
                    }
                    match dim {
                        None => dim = Some(e.feature.len()),
                        Some(d) if d != e.feature.len() => {
                            return Err(SsgnError::format(
                                at("feature"),
                                format!("length {} differs from {d}", e.feature.len()),
                            ))
                        }
                        _ => {}
                    }
                    if e.feature.iter().any(|x| !x.is_finite()) {
                        return Err(SsgnError::format(at("feature"), "non-finite value"));
                    }
                    Ok(Entity {
                        id: e.id,
                        kind,
                        bbox,
                        label: e.label,
                        feature: e.feature,
                    })
                })
                .collect()
        };
    let objects = convert(doc.objects, EntityKind::Object, "objects")?;
    let tokens = convert(doc.tokens, EntityKind::Token, "tokens")?;
    if report.clamped > 0 {
        log::warn!("clamped {} boxes to the image bounds", report.clamped);
    }

    let examples = doc
        .examples
        .into_iter()
        .enumerate()
        .map(|(i, ex)| {
            if ex.question.is_empty() {
                return Err(SsgnError::format(
                    format!("examples[{i}].question"),
                    "empty question",
                ));
            }
            if ex.answers.is_empty() || ex.answers.len() > 10 {
                return Err(SsgnError::format(
                    format!("examples[{i}].answers"),
                    format!("expected 1-10 answers, found {}", ex.answers.len()),
                ));
            }
            if ex.answers.iter().any(|a| a.trim().is_empty()) {
                return Err(SsgnError::format(
                    format!("examples[{i}].answers"),
                    "empty answer",
                ));
            }
            Ok(QaExample {
                question: ex.question,
                answers: ex.answers,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        Scene {
            image_width: w,
            image_height: h,
            objects,
            tokens,
            examples,
        },
        report,
    ))
}

/// Canonical pretty-printed JSON; fields always appear in schema order.
pub fn save_scene(scene: &Scene) -> Vec<u8> {
    let entity = |e: &Entity| EntityDoc {
        id: e.id,
        label: e.label.clone(),
        bbox: e.bbox,
        feature: e.feature.clone(),
    };
    let doc = SceneDoc {
        version: SCENE_FORMAT_VERSION.to_string(),
        image: ImageDoc {
            w: scene.image_width,
            h: scene.image_height,
        },
        objects: scene.objects.iter().map(entity).collect(),
        tokens: scene.tokens.iter().map(entity).collect(),
        examples: scene
            .examples
            .iter()
            .map(|ex| ExampleDoc {
                question: ex.question.clone(),
                answers: ex.answers.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("scene serialization cannot fail");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = SsgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(SsgnError::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub scenes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    /// File stem, used to name examples (`<name>#<index>`).
    pub name: String,
    pub split: Split,
    pub scene: Scene,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Write `<name>.scene.json` files plus the manifest. Returns the manifest.
pub fn write_dataset(dir: &Path, scenes: &[(String, Split, Scene)]) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| SsgnError::io(dir, e))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (name, split, scene) in scenes {
        let file = format!("{name}{SCENE_SUFFIX}");
        let path = dir.join(&file);
        fs::write(&path, save_scene(scene)).map_err(|e| SsgnError::io(&path, e))?;
        entries.push(ManifestEntry {
            file,
            split: *split,
        });
    }
    let manifest = Manifest {
        version: SCENE_FORMAT_VERSION.to_string(),
        scenes: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).expect("manifest serialization cannot fail");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| SsgnError::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path, limits: LoadLimits) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| SsgnError::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| SsgnError::format("manifest", e.to_string()))?;
    if manifest.version != SCENE_FORMAT_VERSION {
        return Err(SsgnError::format(
            "manifest.version",
            format!("unsupported \"{}\"", manifest.version),
        ));
    }
    let mut entries = Vec::with_capacity(manifest.scenes.len());
    for m in manifest.scenes {
        let path = dir.join(&m.file);
        let bytes = fs::read(&path).map_err(|e| SsgnError::io(&path, e))?;
        let (scene, _) = load_scene(&bytes, limits).map_err(|e| match e {
            SsgnError::Format { field, message } => SsgnError::Format {
                field: format!("{}: {field}", m.file),
                message,
            },
            other => other,
        })?;
        let name = m
            .file
            .strip_suffix(SCENE_SUFFIX)
            .unwrap_or(&m.file)
            .to_string();
        entries.push(DatasetEntry {
            name,
            split: m.split,
            scene,
        });
    }
    Ok(Dataset {
        root: dir.to_path_buf(),
        entries,
    })
}
