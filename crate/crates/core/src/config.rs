//! Flat run configuration file with `key=value` overrides.
//!
//! ```toml
//! seed = 7
//! data = "data/desk"
//! out = "runs/desk"
//! d = 32
//! hierarchy = "otsg_then_osg_tsg"
//! theta = 0.5
//! steps = 2000
//! milestones = [1400, 1800]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgnError};
use crate::geometry::IouKind;
use crate::graph::{PruneConfig, SparsityToggles};
use crate::model::{Hierarchy, ModelConfig};
use crate::scene::LoadLimits;
use crate::training::{Experiment, TrainConfig};

/// Every tunable of a run. Missing keys take the desk defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub d: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hierarchy: Hierarchy,
    pub otsg: bool,
    pub osg: bool,
    pub tsg: bool,
    pub max_answer_len: usize,
    pub max_question_len: usize,

    pub theta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub iou: IouKind,

    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub milestones: Vec<u64>,
    pub lambda: f64,
    pub eval_every: u64,

    pub max_objects: usize,
    pub max_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_parts(None, &Experiment::default(), LoadLimits::default())
    }
}

impl RunConfig {
    pub fn from_parts(seed: Option<u64>, e: &Experiment, limits: LoadLimits) -> Self {
        let (m, p, t) = (&e.model, &e.prune, &e.train);
        RunConfig {
            seed,
            data: None,
            out: None,
            d: m.d,
            heads: m.heads,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            hierarchy: m.hierarchy,
            otsg: m.toggles.otsg,
            osg: m.toggles.osg,
            tsg: m.toggles.tsg,
            max_answer_len: m.max_answer_len,
            max_question_len: m.max_question_len,
            theta: p.theta,
            epsilon: p.epsilon,
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            delta: p.delta,
            iou: p.iou,
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            milestones: t.milestones.clone(),
            lambda: t.lambda,
            eval_every: t.eval_every,
            max_objects: limits.max_objects,
            max_tokens: limits.max_tokens,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SsgnError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SsgnError::io(path, e))?;
        Self::parse(&text).map_err(|e| SsgnError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides. Values are read as TOML and fall back
    /// to plain strings, so `hierarchy=parallel` and `lr=1e-4` both work.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let text = toml::to_string(self).map_err(|e| SsgnError::Config(e.to_string()))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| SsgnError::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| SsgnError::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let merged = toml::to_string(&table).map_err(|e| SsgnError::Config(e.to_string()))?;
        Self::parse(&merged)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Seed from the file or overrides, else `SSGN_SEED`, else 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("SSGN_SEED") {
            Ok(v) => v.trim().parse().map_err(|_| {
                SsgnError::Config(format!("SSGN_SEED `{v}` is not an unsigned integer"))
            }),
            Err(_) => Ok(0),
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            hierarchy: self.hierarchy,
            toggles: SparsityToggles {
                otsg: self.otsg,
                osg: self.osg,
                tsg: self.tsg,
            },
            max_answer_len: self.max_answer_len,
            max_question_len: self.max_question_len,
        }
    }

    pub fn prune(&self) -> PruneConfig {
        PruneConfig {
            theta: self.theta,
            epsilon: self.epsilon,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            iou: self.iou,
        }
    }

    pub fn limits(&self) -> LoadLimits {
        LoadLimits {
            max_objects: self.max_objects,
            max_tokens: self.max_tokens,
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let e = Experiment {
            model: self.model(),
            prune: self.prune(),
            train: TrainConfig {
                seed: self.resolved_seed()?,
                steps: self.steps,
                batch_size: self.batch_size,
                lr: self.lr,
                milestones: self.milestones.clone(),
                lambda: self.lambda,
                eval_every: self.eval_every,
            },
        };
        e.model.validate()?;
        e.prune.validate()?;
        e.train.validate()?;
        Ok(e)
    }
}
