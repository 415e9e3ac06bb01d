//! Seeded synthetic scenes for the "what does the <object> say" copy task.
//!
//! Scene `i` of a run depends only on `(seed, i, spec)`, so scenes can be
//! generated in any order or in parallel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use std::path::PathBuf;

use super::{Dataset, DatasetEntry, Entity, EntityKind, QaExample, Scene, Split};
use crate::error::{Result, SsgnError};
use crate::exec::Exec;
use crate::geometry::{center_distance, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Signs scattered over a grid, one token printed on each, plus loose tokens.
    SignsGrid,
    /// A compact row of storefronts with one-line names, plus far-away tokens.
    StorefrontRows,
    /// Signs grid where some signs are detected twice with small jitter.
    DuplicateBoxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub scenes: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub objects: CountRange,
    pub tokens: CountRange,
    /// Scene `i` uses `layouts[i % layouts.len()]`.
    pub layouts: Vec<Layout>,
    /// Maximum per-coordinate displacement of duplicated boxes, in pixels.
    pub jitter: f64,
    /// Probability that each extra gold answer is replaced by a wrong one.
    pub annotator_noise: f64,
    pub answers_per_example: usize,
    pub splits: SplitRatios,
    pub feature_dim: usize,
    pub object_labels: Vec<String>,
    pub token_words: Vec<String>,
}

const OBJECT_LABELS: &[&str] = &[
    "sign", "poster", "banner", "board", "plate", "screen", "sticker", "shirt", "bottle", "cup",
    "book", "van",
];

const TOKEN_WORDS: &[&str] = &[
    "stop", "exit", "open", "sale", "cafe", "pizza", "bakery", "hotel", "taxi", "bus", "park",
    "bank", "metro", "star", "king", "oak", "blue", "red", "gold", "river", "sun", "moon", "north",
    "south", "deli", "books", "music", "salon", "market", "fresh", "grill", "tacos", "sushi",
    "pharmacy", "garage", "florist", "bistro", "cinema", "museum", "library", "2024", "42", "7",
    "100", "joe's", "mia", "luna", "nova", "zen", "echo", "delta", "alpha", "omega", "vista",
    "harbor", "maple", "cedar", "pine", "ridge", "valley",
];

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            scenes: 10,
            image_width: 640.0,
            image_height: 480.0,
            objects: CountRange { min: 2, max: 4 },
            tokens: CountRange { min: 4, max: 6 },
            layouts: vec![
                Layout::SignsGrid,
                Layout::StorefrontRows,
                Layout::DuplicateBoxes,
            ],
            jitter: 2.0,
            annotator_noise: 0.0,
            answers_per_example: 10,
            splits: SplitRatios {
                train: 0.8,
                val: 0.1,
                test: 0.1,
            },
            feature_dim: 16,
            object_labels: OBJECT_LABELS.iter().map(|s| s.to_string()).collect(),
            token_words: TOKEN_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SsgnError::Config(m));
        if self.image_width <= 0.0 || self.image_height <= 0.0 {
            return bad("image size must be positive".into());
        }
        if self.objects.min > self.objects.max || self.tokens.min > self.tokens.max {
            return bad("count ranges need min <= max".into());
        }
        if self.objects.min == 0 {
            return bad("every scene needs at least one object to ask about".into());
        }
        if self.layouts.is_empty() {
            return bad("at least one layout family is required".into());
        }
        if !(0.0..=1.0).contains(&self.annotator_noise) {
            return bad("annotator_noise must lie in [0, 1]".into());
        }
        if !(1..=10).contains(&self.answers_per_example) {
            return bad("answers_per_example must lie in 1..=10".into());
        }
        let s = self.splits;
        if s.train < 0.0
            || s.val < 0.0
            || s.test < 0.0
            || (s.train + s.val + s.test - 1.0).abs() > 1e-9
        {
            return bad("split ratios must be non-negative and sum to 1".into());
        }
        if self.jitter < 0.0 {
            return bad("jitter must be non-negative".into());
        }
        Ok(())
    }

    /// Split membership by scene index: train first, then val, then test.
    pub fn split_of(&self, index: usize) -> Split {
        let n = self.scenes as f64;
        let n_train = (n * self.splits.train).round() as usize;
        let n_val = (n * self.splits.val).round() as usize;
        if index < n_train {
            Split::Train
        } else if index < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64 + 1)))
}

/// Deterministic pseudo-random feature for a label, uniform in [-1, 1].
/// Equal `(kind, label)` pairs always share a feature.
pub fn label_feature(kind: EntityKind, label: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update([0u8]);
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// File stem of synthetic scene `i`.
pub fn scene_name(i: usize) -> String {
    format!("scene-{i:05}")
}

/// Generated scenes as an in-memory dataset, split by [`SynthSpec::split_of`].
pub fn synth_dataset(seed: u64, spec: &SynthSpec, exec: Exec) -> Result<Dataset> {
    let scenes = synth_generate_with(seed, spec, exec)?;
    Ok(Dataset {
        root: PathBuf::new(),
        entries: scenes
            .into_iter()
            .enumerate()
            .map(|(i, scene)| DatasetEntry {
                name: scene_name(i),
                split: spec.split_of(i),
                scene,
            })
            .collect(),
    })
}

pub fn synth_generate(seed: u64, spec: &SynthSpec) -> Result<Vec<Scene>> {
    synth_generate_with(seed, spec, Exec::default())
}

pub fn synth_generate_with(seed: u64, spec: &SynthSpec, exec: Exec) -> Result<Vec<Scene>> {
    spec.validate()?;
    exec.try_map_range(spec.scenes, |i| {
        let layout = spec.layouts[i % spec.layouts.len()];
        generate_scene(&mut scene_rng(seed, i), spec, layout)
            .map_err(|e| SsgnError::Config(format!("scene {i} ({layout:?}): {e}")))
    })
}

const MAX_ATTEMPTS: usize = 64;

fn generate_scene(rng: &mut ChaCha8Rng, spec: &SynthSpec, layout: Layout) -> Result<Scene> {
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        let draft = match layout {
            Layout::SignsGrid => signs_grid(rng, spec, false),
            Layout::DuplicateBoxes => signs_grid(rng, spec, true),
            Layout::StorefrontRows => storefront_rows(rng, spec),
        };
        match draft.and_then(|d| d.finish(rng, spec)) {
            Ok(scene) => return Ok(scene),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| SsgnError::Config("no attempts made".into())))
}

/// Layout output before questions are attached.
struct Draft {
    w: f64,
    h: f64,
    /// (label, box) of each object; `asked` marks which ones get a question.
    objects: Vec<(String, BoundingBox)>,
    asked: Vec<usize>,
    tokens: Vec<(String, BoundingBox)>,
    /// Token indices forming the answer for each asked object.
    answer_tokens: Vec<Vec<usize>>,
}

impl Draft {
    fn finish(self, rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Result<Scene> {
        // The answer must start with the token nearest the object.
        for (k, &oi) in self.asked.iter().enumerate() {
            let ob = &self.objects[oi].1;
            let mut dists: Vec<(f64, usize)> = self
                .tokens
                .iter()
                .enumerate()
                .map(|(j, (_, tb))| (center_distance(ob, tb), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nearest = dists[0].1;
            if !self.answer_tokens[k].contains(&nearest) {
                return Err(SsgnError::Config(
                    "answer token is not the nearest one".into(),
                ));
            }
            let runner_up = dists
                .iter()
                .find(|(_, j)| !self.answer_tokens[k].contains(j))
                .map(|d| d.0);
            if let Some(r) = runner_up {
                if r <= dists[0].0 + 1.0 {
                    return Err(SsgnError::Config("nearest token is ambiguous".into()));
                }
            }
        }

        let dim = spec.feature_dim;
        let n_obj = self.objects.len();
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, (label, b))| Entity {
                id: i as u32,
                kind: EntityKind::Object,
                bbox: *b,
                label: label.clone(),
                feature: label_feature(EntityKind::Object, label, dim),
            })
            .collect();
        let tokens: Vec<Entity> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(j, (label, b))| Entity {
                id: (n_obj + j) as u32,
                kind: EntityKind::Token,
                bbox: *b,
                label: label.clone(),
                feature: label_feature(EntityKind::Token, label, dim),
            })
            .collect();

        let mut examples = Vec::with_capacity(self.asked.len());
        for (k, &oi) in self.asked.iter().enumerate() {
            let label = &self.objects[oi].0;
            let question = question_for(rng, label);
            let answer = self.answer_tokens[k]
                .iter()
                .map(|&j| self.tokens[j].0.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let mut answers = vec![answer.clone()];
            for _ in 1..spec.answers_per_example {
                let wrong: Vec<&str> = self
                    .tokens
                    .iter()
                    .map(|t| t.0.as_str())
                    .filter(|t| *t != answer)
                    .collect();
                if !wrong.is_empty() && rng.gen_bool(spec.annotator_noise) {
                    answers.push(wrong[rng.gen_range(0..wrong.len())].to_string());
                } else {
                    answers.push(answer.clone());
                }
            }
            examples.push(QaExample { question, answers });
        }
        Ok(Scene {
            image_width: self.w,
            image_height: self.h,
            objects,
            tokens,
            examples,
        })
    }
}

fn question_for(rng: &mut ChaCha8Rng, label: &str) -> Vec<String> {
    let templates: [&[&str]; 3] = [
        &["what", "does", "the", "#", "say"],
        &["what", "is", "written", "on", "the", "#"],
        &["what", "text", "is", "on", "the", "#"],
    ];
    let t = templates[rng.gen_range(0..templates.len())];
    t.iter()
        .map(|w| {
            if *w == "#" {
                label.to_string()
            } else {
                w.to_string()
            }
        })
        .collect()
}

fn pick_distinct(
    rng: &mut ChaCha8Rng,
    pool: &[String],
    n: usize,
    what: &str,
) -> Result<Vec<String>> {
    if pool.len() < n {
        return Err(SsgnError::Config(format!(
            "{n} distinct {what} needed but only {} available",
            pool.len()
        )));
    }
    Ok(pool.choose_multiple(rng, n).cloned().collect())
}

/// Rendered width of a word at a given text height.
fn text_width(word: &str, height: f64) -> f64 {
    (word.chars().count() as f64 * 0.6 + 0.4) * height
}

const GRID_COLS: usize = 4;
const GRID_ROWS: usize = 3;

fn signs_grid(rng: &mut ChaCha8Rng, spec: &SynthSpec, duplicates: bool) -> Result<Draft> {
    let (w, h) = (spec.image_width, spec.image_height);
    let n_total = rng.gen_range(spec.objects.min..=spec.objects.max);
    let (n_base, n_dup) = if duplicates {
        if n_total < 2 {
            return Err(SsgnError::Config(
                "duplicate-boxes needs at least 2 objects".into(),
            ));
        }
        let base = n_total.div_ceil(2);
        (base, n_total - base)
    } else {
        (n_total, 0)
    };
    let cells = GRID_COLS * GRID_ROWS;
    if n_base > cells {
        return Err(SsgnError::Config(format!(
            "{n_base} signs do not fit in {cells} grid cells"
        )));
    }
    if spec.tokens.max < n_base {
        return Err(SsgnError::Config(format!(
            "{n_base} signs need at least as many tokens, but tokens.max = {}",
            spec.tokens.max
        )));
    }
    let n_tok = rng.gen_range(spec.tokens.min.max(n_base)..=spec.tokens.max);
    let n_loose = n_tok - n_base;
    if n_base + n_loose > cells {
        return Err(SsgnError::Config(format!(
            "{} entities do not fit in {cells} grid cells",
            n_base + n_loose
        )));
    }

    let labels = pick_distinct(rng, &spec.object_labels, n_base, "object labels")?;
    let words = pick_distinct(rng, &spec.token_words, n_tok, "token words")?;
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(rng);
    let (cw, ch) = (w / GRID_COLS as f64, h / GRID_ROWS as f64);
    let cell_origin = |c: usize| ((c % GRID_COLS) as f64 * cw, (c / GRID_COLS) as f64 * ch);

    let mut objects = Vec::with_capacity(n_total);
    let mut tokens = Vec::with_capacity(n_tok);
    for (k, label) in labels.iter().enumerate() {
        let (x0, y0) = cell_origin(order[k]);
        let sw = cw * rng.gen_range(0.55..0.85);
        let sh = ch * rng.gen_range(0.5..0.8);
        let sx = x0 + rng.gen_range(0.05..0.95) * (cw - sw);
        let sy = y0 + rng.gen_range(0.05..0.95) * (ch - sh);
        let sign = BoundingBox::new(sx, sy, sx + sw, sy + sh);
        objects.push((label.clone(), sign));

        let th = sh * rng.gen_range(0.25..0.4);
        let tw = text_width(&words[k], th).min(sw * 0.9);
        let (cx, cy) = sign.center();
        tokens.push((words[k].clone(), BoundingBox::from_center(cx, cy, tw, th)));
    }
    for k in 0..n_loose {
        let (x0, y0) = cell_origin(order[n_base + k]);
        let word = &words[n_base + k];
        let th = ch * rng.gen_range(0.12..0.25);
        let tw = text_width(word, th).min(cw * 0.9);
        let tx = x0 + rng.gen_range(0.05..0.95) * (cw - tw);
        let ty = y0 + rng.gen_range(0.05..0.95) * (ch - th);
        tokens.push((word.clone(), BoundingBox::new(tx, ty, tx + tw, ty + th)));
    }
    for k in 0..n_dup {
        let (label, b) = objects[k].clone();
        let mut j = || rng.gen_range(-spec.jitter..=spec.jitter);
        let c = b.coords();
        let dup = BoundingBox::new(c[0] + j(), c[1] + j(), c[2] + j(), c[3] + j())
            .clamp_to(w, h)
            .0;
        objects.push((label, dup));
    }

    Ok(Draft {
        w,
        h,
        objects,
        asked: (0..n_base).collect(),
        tokens,
        answer_tokens: (0..n_base).map(|k| vec![k]).collect(),
    })
}

/// Minimum center distance, as a fraction of the image diagonal, between a
/// far-away distractor token and every storefront name token.
pub const DISTRACTOR_DISTANCE: f64 = 0.6;

/// Storefront rows end before this fraction of the image width, which leaves
/// room for distractors far from every name token.
const ROW_LIMIT: f64 = 0.55;

fn storefront_rows(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Result<Draft> {
    let (w, h) = (spec.image_width, spec.image_height);
    let diag = w.hypot(h);
    let n_obj = rng.gen_range(spec.objects.min..=spec.objects.max);
    if spec.tokens.max < n_obj {
        return Err(SsgnError::Config(format!(
            "{n_obj} storefronts need at least as many tokens, but tokens.max = {}",
            spec.tokens.max
        )));
    }
    let n_tok = rng.gen_range(spec.tokens.min.max(n_obj)..=spec.tokens.max);
    let labels = pick_distinct(rng, &spec.object_labels, n_obj, "object labels")?;
    let words = pick_distinct(rng, &spec.token_words, n_tok, "token words")?;

    // Each storefront gets one or two name words while the budget allows,
    // keeping at least one token free for a distractor when possible.
    let mut per_store = vec![1usize; n_obj];
    let mut spare = n_tok - n_obj;
    for slot in per_store.iter_mut() {
        if spare > 1 && rng.gen_bool(0.5) {
            *slot = 2;
            spare -= 1;
        }
    }
    let n_line: usize = per_store.iter().sum();

    let th = h * 0.03;
    let pad = 0.6 * th;
    let y_top = h * 0.04;
    let mut x = w * 0.02;
    let mut objects = Vec::with_capacity(n_obj);
    let mut tokens = Vec::with_capacity(n_tok);
    let mut answer_tokens = Vec::with_capacity(n_obj);
    let mut next_word = 0;
    for (k, label) in labels.iter().enumerate() {
        let line: Vec<&String> = words[next_word..next_word + per_store[k]].iter().collect();
        next_word += per_store[k];
        let widths: Vec<f64> = line.iter().map(|wd| text_width(wd, th)).collect();
        let line_w: f64 = widths.iter().sum::<f64>() + 0.5 * th * (line.len() - 1) as f64;
        let store_w = line_w + 2.0 * pad;
        let store_h = h * rng.gen_range(0.12..0.2);
        if x + store_w > w * ROW_LIMIT {
            return Err(SsgnError::Config(format!(
                "{n_obj} storefronts do not fit in one row"
            )));
        }
        objects.push((
            label.clone(),
            BoundingBox::new(x, y_top, x + store_w, y_top + store_h),
        ));
        let mut tx = x + pad;
        let mut ids = Vec::new();
        for (wd, tw) in line.iter().zip(&widths) {
            ids.push(tokens.len());
            tokens.push((
                (*wd).clone(),
                BoundingBox::new(tx, y_top + pad, tx + tw, y_top + pad + th),
            ));
            tx += tw + 0.5 * th;
        }
        answer_tokens.push(ids);
        x += store_w + w * rng.gen_range(0.01..0.03);
    }

    for word in &words[n_line..] {
        let tw = text_width(word, th);
        let mut placed = None;
        for _ in 0..500 {
            let tx = rng.gen_range(0.0..(w - tw));
            let ty = rng.gen_range(0.0..(h - th));
            let cand = BoundingBox::new(tx, ty, tx + tw, ty + th);
            let far = tokens[..n_line]
                .iter()
                .all(|(_, b)| center_distance(b, &cand) >= DISTRACTOR_DISTANCE * diag);
            let clear = tokens[n_line..]
                .iter()
                .all(|(_, b)| b.intersection_area(&cand) == 0.0);
            if far && clear {
                placed = Some(cand);
                break;
            }
        }
        let b = placed
            .ok_or_else(|| SsgnError::Config("no room for a far-away distractor token".into()))?;
        tokens.push((word.clone(), b));
    }

    Ok(Draft {
        w,
        h,
        objects,
        asked: (0..n_obj).collect(),
        tokens,
        answer_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::diou;
    use crate::scene::save_scene;

    fn spec(layouts: Vec<Layout>) -> SynthSpec {
        SynthSpec {
            scenes: 12,
            layouts,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let s = spec(vec![
            Layout::SignsGrid,
            Layout::StorefrontRows,
            Layout::DuplicateBoxes,
        ]);
        let a = synth_generate_with(7, &s, Exec::Sequential).unwrap();
        let b = synth_generate_with(7, &s, Exec::Parallel).unwrap();
        let bytes = |v: &[Scene]| v.iter().map(save_scene).collect::<Vec<_>>();
        assert_eq!(bytes(&a), bytes(&b));
        let c = synth_generate(8, &s).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn answers_are_contiguous_token_labels() {
        let s = spec(vec![
            Layout::SignsGrid,
            Layout::StorefrontRows,
            Layout::DuplicateBoxes,
        ]);
        for scene in synth_generate(3, &s).unwrap() {
            assert!(!scene.examples.is_empty());
            let labels: Vec<&str> = scene.tokens.iter().map(|t| t.label.as_str()).collect();
            for ex in &scene.examples {
                let words: Vec<&str> = ex.answers[0].split(' ').collect();
                let found = labels.windows(words.len()).any(|w| w == words.as_slice());
                assert!(found, "{:?} not in {:?}", words, labels);
                assert_eq!(ex.answers.len(), 10);
            }
        }
    }

    #[test]
    fn one_pixel_duplicates_have_high_diou() {
        let s = SynthSpec {
            jitter: 1.0,
            objects: CountRange { min: 4, max: 6 },
            tokens: CountRange { min: 3, max: 6 },
            ..spec(vec![Layout::DuplicateBoxes])
        };
        let mut pairs = 0;
        for scene in synth_generate(11, &s).unwrap() {
            for (i, a) in scene.objects.iter().enumerate() {
                for b in &scene.objects[i + 1..] {
                    if a.label == b.label {
                        pairs += 1;
                        assert!(diou(&a.bbox, &b.bbox).unwrap() > 0.8);
                    }
                }
            }
        }
        assert!(pairs >= 12);
    }

    #[test]
    fn storefront_distractors_are_far() {
        let s = SynthSpec {
            tokens: CountRange { min: 6, max: 7 },
            objects: CountRange { min: 2, max: 3 },
            ..spec(vec![Layout::StorefrontRows])
        };
        for scene in synth_generate(5, &s).unwrap() {
            let diag = scene.diagonal();
            let line: Vec<_> = scene
                .tokens
                .iter()
                .filter(|t| {
                    scene
                        .objects
                        .iter()
                        .any(|o| o.bbox.intersection_area(&t.bbox) > 0.0)
                })
                .collect();
            let loose: Vec<_> = scene
                .tokens
                .iter()
                .filter(|t| {
                    scene
                        .objects
                        .iter()
                        .all(|o| o.bbox.intersection_area(&t.bbox) == 0.0)
                })
                .collect();
            assert!(!loose.is_empty());
            for a in &line {
                for b in &loose {
                    assert!(center_distance(&a.bbox, &b.bbox) >= 0.6 * diag);
                }
            }
        }
    }

    #[test]
    fn unsatisfiable_specs_error() {
        let s = SynthSpec {
            objects: CountRange { min: 14, max: 14 },
            tokens: CountRange { min: 14, max: 14 },
            ..spec(vec![Layout::SignsGrid])
        };
        assert!(synth_generate(1, &s).is_err());
        let s = SynthSpec {
            objects: CountRange { min: 9, max: 9 },
            tokens: CountRange { min: 18, max: 18 },
            ..spec(vec![Layout::StorefrontRows])
        };
        assert!(synth_generate(1, &s).is_err());
        let s = SynthSpec {
            annotator_noise: 1.5,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(1, &s), Err(SsgnError::Config(_))));
    }

    #[test]
    fn identical_labels_share_features() {
        let a = label_feature(EntityKind::Token, "stop", 8);
        assert_eq!(a, label_feature(EntityKind::Token, "stop", 8));
        assert_ne!(a, label_feature(EntityKind::Object, "stop", 8));
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn split_assignment_follows_ratios() {
        let s = SynthSpec {
            scenes: 100,
            splits: SplitRatios {
                train: 0.7,
                val: 0.2,
                test: 0.1,
            },
            ..SynthSpec::default()
        };
        let count = |sp| (0..100).filter(|&i| s.split_of(i) == sp).count();
        assert_eq!(
            (count(Split::Train), count(Split::Val), count(Split::Test)),
            (70, 20, 10)
        );
    }
}
