//! Losses, the training loop, evaluation passes and checkpoint metadata.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{align_answer, AnswerTarget, Choice, DecodedAnswer, PredictionRecord};
use crate::error::{Result, SsgnError};
use crate::exec::Exec;
use crate::graph::{PruneConfig, SceneGraph, SparsitySummary};
use crate::metrics::{self, anls_max, EvalReport};
use crate::model::{Inputs, ModelConfig, ModelDims, Ssgn};
use crate::neural::tape::{bce_mean, softplus};
use crate::neural::{adam_step, AdamState, Checkpoint, Gradients, ParamStore, Tape, Var};
use crate::scene::{Dataset, Scene, Split, Vocabulary};
use crate::text;

pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const METRICS_HEADER: &str = "step,lr,bce,pg,total,val_acc,val_anls";

/// Mean binary cross-entropy over all steps and classes.
pub fn bce_loss(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(SsgnError::Shape(format!(
            "{} logits against {} targets",
            logits.len(),
            targets.len()
        )));
    }
    Ok(bce_mean(logits, targets))
}

/// `reward * mean(-ln sigmoid(selected))`.
pub fn pg_loss(selected: &[f64], reward: f64) -> f64 {
    if selected.is_empty() || reward == 0.0 {
        return 0.0;
    }
    reward * selected.iter().map(|x| softplus(-x)).sum::<f64>() / selected.len() as f64
}

/// Best ANLS of the decoded text against the gold answers.
pub fn pg_reward(decoded: &str, golds: &[String]) -> f64 {
    anls_max(decoded, golds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub pg: f64,
    pub total: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub milestones: Vec<u64>,
    pub lambda: f64,
    /// Validation every this many steps; 0 only at the end.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps: 2000,
            batch_size: 16,
            lr: 1e-3,
            milestones: vec![1400, 1800],
            lambda: 1.0,
            eval_every: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SsgnError::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(SsgnError::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SsgnError::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SsgnError::Config(
                "milestones must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Experiment {
    pub model: ModelConfig,
    pub prune: PruneConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabs {
    pub question: Vocabulary,
    pub answer: Vocabulary,
}

impl Vocabs {
    /// Question words and gold answer words of the training split, in order
    /// of first appearance.
    pub fn build(dataset: &Dataset) -> Vocabs {
        let mut q = Vec::new();
        let mut a = Vec::new();
        for entry in dataset.split(Split::Train) {
            for ex in &entry.scene.examples {
                q.extend(ex.question.iter().map(|w| text::normalize(w)));
                for ans in &ex.answers {
                    a.extend(text::words(ans));
                }
            }
        }
        Vocabs {
            question: Vocabulary::new(q.into_iter().filter(|w| !w.is_empty())),
            answer: Vocabulary::new(a),
        }
    }

    pub fn question_indices(&self, words: &[String]) -> Vec<usize> {
        words
            .iter()
            .map(|w| self.question.index_or_unk(&text::normalize(w)))
            .collect()
    }
}

/// Stored as the checkpoint's metadata section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: Experiment,
    pub dims: ModelDims,
    pub vocabs: Vocabs,
    pub best_val_acc: Option<f64>,
}

/// A model restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Ssgn,
    pub params: ParamStore,
    pub meta: CheckpointMeta,
    pub checkpoint: Checkpoint,
}

pub fn load_trained(path: &Path) -> Result<Trained> {
    let checkpoint = Checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&checkpoint.metadata)
        .map_err(|e| SsgnError::format("metadata", e.to_string()))?;
    let (model, mut params) =
        Ssgn::new(meta.experiment.model, meta.dims, meta.experiment.train.seed)?;
    params.copy_from(&checkpoint.params)?;
    Ok(Trained {
        model,
        params,
        meta,
        checkpoint,
    })
}

#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub name: String,
    pub scene: Scene,
    pub graph: SceneGraph,
}

#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub scene: usize,
    pub question: Vec<usize>,
    pub target: AnswerTarget,
    pub answers: Vec<String>,
}

/// One split with graphs built and answers aligned.
#[derive(Debug, Clone, Default)]
pub struct PreparedSplit {
    pub scenes: Vec<PreparedScene>,
    pub examples: Vec<PreparedExample>,
}

impl PreparedSplit {
    pub fn sparsity(&self) -> SparsitySummary {
        SparsitySummary::from_graphs(self.scenes.iter().map(|s| &s.graph))
    }
}

pub fn prepare(
    dataset: &Dataset,
    split: Split,
    vocabs: &Vocabs,
    experiment: &Experiment,
    exec: Exec,
) -> Result<PreparedSplit> {
    let entries: Vec<_> = dataset.split(split).collect();
    let model = &experiment.model;
    let scenes = exec.try_map_range(entries.len(), |i| {
        let e = entries[i];
        Ok::<_, SsgnError>(PreparedScene {
            name: e.name.clone(),
            scene: e.scene.clone(),
            graph: SceneGraph::build(&e.scene, &experiment.prune, model.toggles)?,
        })
    })?;
    let mut examples = Vec::new();
    for (si, s) in scenes.iter().enumerate() {
        for (k, ex) in s.scene.examples.iter().enumerate() {
            let majority = ex.majority_answer();
            examples.push(PreparedExample {
                id: metrics::example_id(&s.name, k),
                scene: si,
                question: vocabs.question_indices(&ex.question),
                target: align_answer(&majority, &s.scene, &vocabs.answer, model.max_answer_len)?,
                answers: ex.answers.clone(),
            });
        }
    }
    Ok(PreparedSplit { scenes, examples })
}

/// How the policy-gradient term picks its decoded sequence.
#[derive(Debug, Clone, Copy)]
pub enum PgMode<'a> {
    /// Greedy decode with the current parameters.
    Greedy,
    /// A given selection and reward, e.g. to hold them fixed under
    /// finite differences.
    Fixed { choices: &'a [Choice], reward: f64 },
}

pub struct ExampleLoss {
    pub total: Var,
    pub breakdown: LossBreakdown,
    pub decoded: Option<DecodedAnswer>,
}

/// Taped `bce + lambda * pg` for one example. With `lambda == 0` no
/// decoding happens and the total is the BCE term itself.
pub fn example_loss(
    model: &Ssgn,
    tape: &mut Tape,
    split: &PreparedSplit,
    ex: &PreparedExample,
    vocabs: &Vocabs,
    lambda: f64,
    mode: PgMode,
) -> Result<ExampleLoss> {
    let s = &split.scenes[ex.scene];
    let reasoned = model.reason(
        tape,
        Inputs {
            scene: &s.scene,
            graph: &s.graph,
            question: &ex.question,
        },
    )?;
    let prefix = model.decoder.prefix(tape, &reasoned);
    let begin = vocabs.answer.begin();
    let scores = model
        .decoder
        .teacher_forced(tape, &prefix, &ex.target.choices, begin)?;
    let bce = tape.bce_with_logits(scores, &ex.target.labels);
    let bce_v = tape.value(bce).item();
    if lambda == 0.0 {
        return Ok(ExampleLoss {
            total: bce,
            breakdown: LossBreakdown {
                bce: bce_v,
                pg: 0.0,
                total: bce_v,
                lambda,
            },
            decoded: None,
        });
    }
    let vl = model.decoder.vocab_len();
    let (pg_scores, choices, reward, decoded) = match mode {
        PgMode::Greedy => {
            let (ans, last) = model
                .decoder
                .greedy(tape, &prefix, &vocabs.answer, &s.scene);
            let r = pg_reward(&ans.text, &ex.answers);
            (last, ans.choices(), r, Some(ans))
        }
        PgMode::Fixed { choices, reward } => {
            let sc = model
                .decoder
                .scores(tape, &prefix, &choices[..choices.len() - 1], begin);
            (sc, choices.to_vec(), reward, None)
        }
    };
    let cols: Vec<usize> = choices.iter().map(|c| c.column(vl)).collect();
    let picked = tape.pick(pg_scores, &cols);
    let neg = tape.scale(picked, -1.0);
    let sp = tape.softplus(neg);
    let mean = tape.mean(sp);
    let pg = tape.scale(mean, reward);
    let weighted = tape.scale(pg, lambda);
    let total = tape.add(bce, weighted);
    let pg_v = tape.value(pg).item();
    Ok(ExampleLoss {
        total,
        breakdown: LossBreakdown {
            bce: bce_v,
            pg: pg_v,
            total: tape.value(total).item(),
            lambda,
        },
        decoded,
    })
}

/// Greedy answer for one example.
pub fn predict(
    model: &Ssgn,
    params: &ParamStore,
    split: &PreparedSplit,
    ex: &PreparedExample,
    vocabs: &Vocabs,
) -> Result<DecodedAnswer> {
    let s = &split.scenes[ex.scene];
    let mut tape = Tape::new(params);
    let r = model.reason(
        &mut tape,
        Inputs {
            scene: &s.scene,
            graph: &s.graph,
            question: &ex.question,
        },
    )?;
    let prefix = model.decoder.prefix(&mut tape, &r);
    Ok(model
        .decoder
        .greedy(&mut tape, &prefix, &vocabs.answer, &s.scene)
        .0)
}

/// Predictions for every example of `split`, in order.
pub fn predict_split(
    model: &Ssgn,
    params: &ParamStore,
    split: &PreparedSplit,
    vocabs: &Vocabs,
    exec: Exec,
) -> Result<Vec<DecodedAnswer>> {
    exec.try_map_range(split.examples.len(), |i| {
        predict(model, params, split, &split.examples[i], vocabs)
    })
}

/// Predictions scored into a report, plus one dump record per example.
pub fn evaluate_split(
    model: &Ssgn,
    params: &ParamStore,
    split: &PreparedSplit,
    vocabs: &Vocabs,
    exec: Exec,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    let answers = predict_split(model, params, split, vocabs, exec)?;
    let mut records = Vec::with_capacity(answers.len());
    let mut dump = Vec::with_capacity(answers.len());
    for (ex, ans) in split.examples.iter().zip(&answers) {
        let qa = &split.scenes[ex.scene].scene.examples[example_index(&ex.id)];
        records.push(metrics::score(ex.id.clone(), &ans.text, qa)?);
        dump.push(PredictionRecord {
            id: ex.id.clone(),
            question: qa.question.join(" "),
            prediction: ans.text.clone(),
            sources: ans.steps.iter().map(|s| s.source).collect(),
            gold: ex.answers.clone(),
        });
    }
    let mut report = EvalReport::from_records(records);
    report.sparsity = Some(split.sparsity());
    Ok((report, dump))
}

fn example_index(id: &str) -> usize {
    id.rsplit('#')
        .next()
        .and_then(|s| s.parse().ok())
        .expect("example ids end in #<index>")
}

/// Example indices of the batch for update `step` (0-based): consecutive
/// slices of a fresh seeded permutation per epoch. Depends only on
/// `(seed, step)`, so a resumed run sees the same batches.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for k in 0..batch as u64 {
        let pos = step * batch as u64 + k;
        let epoch = pos / n as u64;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            perm.shuffle(&mut rng);
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[(pos % n as u64) as usize]);
    }
    out
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub val: Option<(f64, f64)>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let (acc, anls) = match self.val {
            Some((a, n)) => (a.to_string(), n.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.lr, self.loss.bce, self.loss.pg, self.loss.total, acc, anls
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub rows: Vec<MetricsRow>,
    pub best_val_acc: Option<f64>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
}

/// Inputs of one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainRun<'a> {
    pub dataset: &'a Dataset,
    pub experiment: &'a Experiment,
    pub out_dir: &'a Path,
    /// Continue from `out_dir/last.ckpt` when it exists.
    pub resume: bool,
    pub exec: Exec,
}

/// Trains, writing `metrics.csv`, `last.ckpt` and `best.ckpt` into
/// `out_dir`.
pub fn train(run: TrainRun) -> Result<TrainSummary> {
    let TrainRun {
        dataset,
        experiment,
        out_dir,
        resume,
        exec,
    } = run;
    experiment.model.validate()?;
    experiment.prune.validate()?;
    experiment.train.validate()?;
    let tc = &experiment.train;
    fs::create_dir_all(out_dir).map_err(|e| SsgnError::io(out_dir, e))?;

    let vocabs = Vocabs::build(dataset);
    let train_split = prepare(dataset, Split::Train, &vocabs, experiment, exec)?;
    let val_split = prepare(dataset, Split::Val, &vocabs, experiment, exec)?;
    let feature_dim = |objects: bool| {
        dataset
            .entries
            .iter()
            .flat_map(|e| {
                if objects {
                    &e.scene.objects
                } else {
                    &e.scene.tokens
                }
            })
            .map(|e| e.feature.len())
            .next()
            .unwrap_or(0)
    };
    let dims = ModelDims {
        question_vocab: vocabs.question.len(),
        answer_vocab: vocabs.answer.len(),
        object_feature: feature_dim(true),
        token_feature: feature_dim(false),
    };
    let (model, mut params) = Ssgn::new(experiment.model, dims, tc.seed)?;
    let mut adam = AdamState::new(&params, tc.lr, tc.milestones.clone());
    let mut meta = CheckpointMeta {
        experiment: experiment.clone(),
        dims,
        vocabs: vocabs.clone(),
        best_val_acc: None,
    };

    let last_path = out_dir.join(LAST_CHECKPOINT);
    let best_path = out_dir.join(BEST_CHECKPOINT);
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut start = 0;
    let mut rows_kept = Vec::new();
    if resume && last_path.exists() {
        let ck = Checkpoint::load(&last_path)?;
        let old: CheckpointMeta = serde_json::from_str(&ck.metadata)
            .map_err(|e| SsgnError::format("metadata", e.to_string()))?;
        let mut comparable = old.experiment.clone();
        comparable.train.steps = experiment.train.steps;
        if comparable != *experiment || old.vocabs != vocabs || old.dims != dims {
            return Err(SsgnError::Config(format!(
                "{} was written by a different configuration",
                last_path.display()
            )));
        }
        params.copy_from(&ck.params)?;
        adam = ck.adam;
        start = ck.step;
        meta.best_val_acc = old.best_val_acc;
        if let Ok(text) = fs::read_to_string(&metrics_path) {
            rows_kept = text
                .lines()
                .skip(1)
                .filter(|l| {
                    l.split(',')
                        .next()
                        .and_then(|s| s.parse::<u64>().ok())
                        .is_some_and(|s| s <= start)
                })
                .map(str::to_string)
                .collect();
        }
    }
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &rows_kept {
        csv.push_str(r);
        csv.push('\n');
    }
    fs::write(&metrics_path, &csv).map_err(|e| SsgnError::io(&metrics_path, e))?;
    let mut metrics_file = fs::OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| SsgnError::io(&metrics_path, e))?;

    let save =
        |params: &ParamStore, adam: &AdamState, step: u64, meta: &CheckpointMeta, path: &Path| {
            Checkpoint {
                step,
                params: params.clone(),
                adam: adam.clone(),
                metadata: serde_json::to_string(meta).expect("metadata serializes"),
            }
            .save(path)
        };

    if tc.steps == 0 || start >= tc.steps {
        save(&params, &adam, start, &meta, &last_path)?;
        return Ok(TrainSummary {
            rows: Vec::new(),
            best_val_acc: meta.best_val_acc,
            last_checkpoint: last_path,
            best_checkpoint: best_path.exists().then_some(best_path),
        });
    }
    if train_split.examples.is_empty() {
        return Err(SsgnError::Invalid("training split has no examples".into()));
    }

    let mut rows = Vec::new();
    for step in start..tc.steps {
        let batch = batch_indices(tc.seed, step, train_split.examples.len(), tc.batch_size);
        let results = exec.try_map_range(batch.len(), |b| {
            let ex = &train_split.examples[batch[b]];
            let mut tape = Tape::new(&params);
            let l = example_loss(
                &model,
                &mut tape,
                &train_split,
                ex,
                &vocabs,
                tc.lambda,
                PgMode::Greedy,
            )?;
            if !l.breakdown.total.is_finite() {
                return Err(SsgnError::NonFinite {
                    name: format!("loss of example {}", ex.id),
                });
            }
            Ok::<_, SsgnError>((tape.backward(l.total), l.breakdown))
        })?;
        let mut grads = Gradients::zeros_like(&params);
        let mut loss = LossBreakdown {
            lambda: tc.lambda,
            ..Default::default()
        };
        for (g, l) in &results {
            grads.add_assign(g);
            loss.bce += l.bce;
            loss.pg += l.pg;
            loss.total += l.total;
        }
        let inv = 1.0 / results.len() as f64;
        grads.scale(inv);
        loss.bce *= inv;
        loss.pg *= inv;
        loss.total *= inv;
        let lr = adam_step(&mut params, &grads, &mut adam)?;
        let done = step + 1;

        let eval_now = done == tc.steps || (tc.eval_every > 0 && done % tc.eval_every == 0);
        let mut val = None;
        if eval_now {
            if !val_split.examples.is_empty() {
                let (report, _) = evaluate_split(&model, &params, &val_split, &vocabs, exec)?;
                val = Some((report.accuracy, report.anls));
                if meta.best_val_acc.is_none_or(|b| report.accuracy > b) {
                    meta.best_val_acc = Some(report.accuracy);
                    save(&params, &adam, done, &meta, &best_path)?;
                }
            }
            save(&params, &adam, done, &meta, &last_path)?;
        }
        let row = MetricsRow {
            step: done,
            lr,
            loss,
            val,
        };
        writeln!(metrics_file, "{}", row.to_csv()).map_err(|e| SsgnError::io(&metrics_path, e))?;
        log::debug!("{}", row.to_csv());
        rows.push(row);
    }
    Ok(TrainSummary {
        rows,
        best_val_acc: meta.best_val_acc,
        last_checkpoint: last_path,
        best_checkpoint: best_path.exists().then_some(best_path),
    })
}

/// Predictions keyed by example id, for [`metrics::evaluate`].
pub fn prediction_map(split: &PreparedSplit, answers: &[DecodedAnswer]) -> HashMap<String, String> {
    split
        .examples
        .iter()
        .zip(answers)
        .map(|(e, a)| (e.id.clone(), a.text.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_cases() {
        assert!((bce_loss(&[0.0], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let sat = bce_loss(&[20.0], &[1.0]).unwrap();
        assert!(sat > 0.0 && sat < 1e-8);
        assert!(bce_loss(&[1e4], &[0.0]).unwrap().is_finite());
        assert!(bce_loss(&[0.0, 1.0], &[1.0]).is_err());

        // Naive formula on moderate logits.
        let x: [f64; 6] = [0.3, -1.2, 2.5, -0.7, 0.0, 1.1];
        let y: [f64; 6] = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let naive: f64 = x
            .iter()
            .zip(&y)
            .map(|(x, y): (&f64, &f64)| {
                let p = 1.0 / (1.0 + (-x).exp());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 6.0;
        assert!((bce_loss(&x, &y).unwrap() - naive).abs() < 1e-9);
    }

    #[test]
    fn pg_cases() {
        assert_eq!(pg_loss(&[0.3, 2.0], 0.0), 0.0);
        assert!((pg_loss(&[0.0], 1.0) - 2f64.ln()).abs() < 1e-15);
        let expect = 0.75 * ((1.0 + 1f64.exp()).ln() + (1.0 + (-1f64).exp()).ln()) / 2.0;
        assert!((pg_loss(&[1.0, -1.0], 0.75) - expect).abs() < 1e-15);
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let n = 7;
        let mut seen: Vec<usize> = (0..7).flat_map(|s| batch_indices(3, s, n, 3)).collect();
        assert_eq!(seen.len(), 21);
        for epoch in seen.chunks_mut(7) {
            epoch.sort();
            assert_eq!(epoch, &[0, 1, 2, 3, 4, 5, 6]);
        }
        assert_eq!(batch_indices(3, 4, n, 3), batch_indices(3, 4, n, 3));
        assert_ne!(batch_indices(3, 0, n, 7), batch_indices(4, 0, n, 7));
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            batch_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            milestones: vec![5, 5],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
