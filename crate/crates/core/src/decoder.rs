//! Iterative answer decoding: each step picks a fixed-vocabulary word or
//! copies one of the scene's tokens.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgnError};
use crate::model::{ModelConfig, Reasoned};
use crate::neural::{
    causal_mask, AttentionBlock, Embedding, LayerNorm, Linear, ParamStore, Tape, Var,
};
use crate::scene::{Scene, Vocabulary};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Vocab,
    Token,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Vocab => "vocab",
            Source::Token => "token",
        }
    }
}

/// One output: a vocabulary word or a scene token, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Vocab(usize),
    Token(usize),
}

impl Choice {
    pub fn source(self) -> Source {
        match self {
            Choice::Vocab(_) => Source::Vocab,
            Choice::Token(_) => Source::Token,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Choice::Vocab(i) | Choice::Token(i) => i,
        }
    }

    /// Position in the concatenated `[vocab ++ tokens]` score row.
    pub fn column(self, vocab_len: usize) -> usize {
        match self {
            Choice::Vocab(i) => i,
            Choice::Token(j) => vocab_len + j,
        }
    }
}

/// Argmax over `[y_o ++ y_t]`; ties go to the lower concatenated index.
pub fn select(y_o: &[f64], y_t: &[f64]) -> Choice {
    assert!(!y_o.is_empty() || !y_t.is_empty(), "select over no scores");
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in y_o.iter().chain(y_t).enumerate() {
        if *v > best_v || i == 0 {
            best = i;
            best_v = *v;
        }
    }
    if best < y_o.len() {
        Choice::Vocab(best)
    } else {
        Choice::Token(best - y_o.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedStep {
    pub source: Source,
    pub index: usize,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedAnswer {
    pub steps: Vec<DecodedStep>,
    pub text: String,
    /// Step that produced `<end>`, or the step limit when none did.
    pub stopped_at: usize,
}

impl DecodedAnswer {
    pub fn choices(&self) -> Vec<Choice> {
        self.steps
            .iter()
            .map(|s| match s.source {
                Source::Vocab => Choice::Vocab(s.index),
                Source::Token => Choice::Token(s.index),
            })
            .collect()
    }
}

/// Space-joined realization of `choices`, reserved vocabulary entries
/// dropped.
pub fn realize(choices: &[Choice], vocab: &Vocabulary, scene: &Scene) -> String {
    let mut words: Vec<&str> = Vec::new();
    for c in choices {
        match *c {
            Choice::Vocab(i) if vocab.is_reserved(i) => {}
            Choice::Vocab(i) => words.push(vocab.word(i)),
            Choice::Token(j) => words.push(&scene.tokens[j].label),
        }
    }
    words.join(" ")
}

/// Training target for one answer: the realization fed back at each step
/// and multi-hot labels over `[vocab ++ tokens]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerTarget {
    pub choices: Vec<Choice>,
    /// `steps x (vocab + tokens)`, row-major.
    pub labels: Vec<f64>,
    pub width: usize,
}

impl AnswerTarget {
    pub fn steps(&self) -> usize {
        self.choices.len()
    }
}

/// Aligns an answer string to decoder targets. Each word is positive for
/// every token whose label matches it and for its vocabulary entry; a word
/// with neither maps to `<unk>`. The sequence is cut to leave room for the
/// final `<end>` within `max_len` steps.
pub fn align_answer(
    answer: &str,
    scene: &Scene,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<AnswerTarget> {
    if max_len == 0 {
        return Err(SsgnError::Invalid("answer length limit is zero".into()));
    }
    let words: Vec<String> = text::words(answer).into_iter().take(max_len - 1).collect();
    let labels: Vec<String> = scene
        .tokens
        .iter()
        .map(|t| text::normalize(&t.label))
        .collect();
    let width = vocab.len() + scene.tokens.len();
    let mut choices = Vec::with_capacity(words.len() + 1);
    let mut rows = Vec::with_capacity((words.len() + 1) * width);
    for w in words {
        let mut row = vec![0.0; width];
        let matches: Vec<usize> = (0..labels.len()).filter(|j| labels[*j] == w).collect();
        for &j in &matches {
            row[vocab.len() + j] = 1.0;
        }
        let in_vocab = vocab.get(&w);
        if let Some(i) = in_vocab {
            row[i] = 1.0;
        }
        let choice = match (matches.first(), in_vocab) {
            (Some(&j), _) => Choice::Token(j),
            (None, Some(i)) => Choice::Vocab(i),
            (None, None) => {
                row[vocab.unk()] = 1.0;
                Choice::Vocab(vocab.unk())
            }
        };
        choices.push(choice);
        rows.extend(row);
    }
    let mut end = vec![0.0; width];
    end[vocab.end()] = 1.0;
    rows.extend(end);
    choices.push(Choice::Vocab(vocab.end()));
    Ok(AnswerTarget {
        choices,
        labels: rows,
        width,
    })
}

/// Decoder states that do not depend on the answer sequence.
#[derive(Debug, Clone)]
pub struct Prefix {
    layer_inputs: Vec<Var>,
    /// Final token rows, used by the copy scorer and as feedback.
    pub t_hat: Var,
    pub tokens: usize,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub w_q: Linear,
    pub w_v: Linear,
    pub w_t: Linear,
    pub w_in: Linear,
    pub answer_embedding: Embedding,
    pub position: Embedding,
    pub layers: Vec<AttentionBlock>,
    pub norm: LayerNorm,
    pub readout: Linear,
    pub copy_token: Linear,
    pub copy_state: Linear,
    pub max_len: usize,
}

impl Decoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        answer_vocab: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.d;
        Ok(Decoder {
            w_q: Linear::new(store, "dec.w_q", d, d, false, rng),
            w_v: Linear::new(store, "dec.w_v", d, d, false, rng),
            w_t: Linear::new(store, "dec.w_t", d, d, false, rng),
            w_in: Linear::new(store, "dec.w_in", d, d, false, rng),
            answer_embedding: Embedding::new(store, "dec.answer", answer_vocab, d, rng),
            position: Embedding::new(store, "dec.position", cfg.max_answer_len, d, rng),
            layers: (0..cfg.decoder_layers)
                .map(|i| AttentionBlock::new(store, &format!("dec.layer{i}"), d, cfg.heads, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(store, "dec.norm", d),
            readout: Linear::new(store, "dec.readout", d, answer_vocab, true, rng),
            copy_token: Linear::new(store, "dec.copy_token", d, d, true, rng),
            copy_state: Linear::new(store, "dec.copy_state", d, d, true, rng),
            max_len: cfg.max_answer_len,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.answer_embedding.rows
    }

    /// Runs `[W_Q Q; W_V V; W_T T]` through the stack. These rows attend
    /// only to each other, so they are computed once per example.
    pub fn prefix(&self, tape: &mut Tape, r: &Reasoned) -> Prefix {
        let q = self.w_q.forward(tape, r.q);
        let v = self.w_v.forward(tape, r.v);
        let t = self.w_t.forward(tape, r.t);
        let (k, n, m) = (tape.shape(q).0, tape.shape(v).0, tape.shape(t).0);
        let mut x = tape.concat_rows(&[q, v, t]);
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layer_inputs.push(x);
            x = layer.forward(tape, x);
        }
        let x = self.norm.forward(tape, x);
        Prefix {
            layer_inputs,
            t_hat: tape.slice_rows(x, k + n, m),
            tokens: m,
        }
    }

    /// Scores `[steps, vocab + tokens]` for the steps whose previous outputs
    /// are `previous` (`<begin>` precedes the first step).
    pub fn scores(
        &self,
        tape: &mut Tape,
        prefix: &Prefix,
        previous: &[Choice],
        begin: usize,
    ) -> Var {
        let n = previous.len() + 1;
        assert!(n <= self.max_len, "decoding past the answer length limit");
        let vl = self.vocab_len();
        let table = tape.param(self.answer_embedding.table);
        let table = tape.concat_rows(&[table, prefix.t_hat]);
        let idx: Vec<usize> = std::iter::once(begin)
            .chain(previous.iter().map(|c| c.column(vl)))
            .collect();
        let fb = tape.gather_rows(table, &idx);
        let pos: Vec<usize> = (0..n).collect();
        let pe = self.position.forward(tape, &pos);
        let x = tape.add(fb, pe);
        let mut o = self.w_in.forward(tape, x);
        for (layer, ctx) in self.layers.iter().zip(&prefix.layer_inputs) {
            let p = tape.shape(*ctx).0;
            o = layer.forward_with_context(tape, Some(*ctx), o, &causal_mask(n, p));
        }
        let o = self.norm.forward(tape, o);
        let y_o = self.readout.forward(tape, o);
        let tt = self.copy_token.forward(tape, prefix.t_hat);
        let oo = self.copy_state.forward(tape, o);
        let y_t = tape.matmul_t(oo, tt);
        tape.concat_cols(&[y_o, y_t])
    }

    /// `(y_o, y_t)` for the step after `previous`.
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        prefix: &Prefix,
        previous: &[Choice],
        begin: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if previous.len() >= self.max_len {
            return Err(SsgnError::Invalid(format!(
                "step {} is beyond the limit of {}",
                previous.len() + 1,
                self.max_len
            )));
        }
        let s = self.scores(tape, prefix, previous, begin);
        let row = tape.value(s).row_slice(previous.len());
        let vl = self.vocab_len();
        Ok((row[..vl].to_vec(), row[vl..].to_vec()))
    }

    /// Teacher-forced scores, one row per target step.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape,
        prefix: &Prefix,
        target: &[Choice],
        begin: usize,
    ) -> Result<Var> {
        if target.is_empty() {
            return Err(SsgnError::Invalid("empty target sequence".into()));
        }
        if target.len() > self.max_len {
            return Err(SsgnError::Invalid(format!(
                "target has {} steps, limit is {}",
                target.len(),
                self.max_len
            )));
        }
        Ok(self.scores(tape, prefix, &target[..target.len() - 1], begin))
    }

    /// Greedy decoding until `<end>` or the step limit. Also returns the
    /// taped scores of the last pass, whose rows are the logits of every
    /// decoded step.
    pub fn greedy(
        &self,
        tape: &mut Tape,
        prefix: &Prefix,
        vocab: &Vocabulary,
        scene: &Scene,
    ) -> (DecodedAnswer, Var) {
        let vl = self.vocab_len();
        let mut choices: Vec<Choice> = Vec::new();
        let mut steps = Vec::new();
        let mut stopped_at = self.max_len;
        let mut last;
        loop {
            last = self.scores(tape, prefix, &choices, vocab.begin());
            let row = tape.value(last).row_slice(choices.len());
            let c = select(&row[..vl], &row[vl..]);
            steps.push(DecodedStep {
                source: c.source(),
                index: c.index(),
                logit: row[c.column(vl)],
            });
            choices.push(c);
            if c == Choice::Vocab(vocab.end()) {
                stopped_at = choices.len() - 1;
                break;
            }
            if choices.len() == self.max_len {
                break;
            }
        }
        let text = realize(&choices, vocab, scene);
        (
            DecodedAnswer {
                steps,
                text,
                stopped_at,
            },
            last,
        )
    }
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub question: String,
    pub prediction: String,
    pub sources: Vec<Source>,
    pub gold: Vec<String>,
}
