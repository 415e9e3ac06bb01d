//! Edit distance, ANLS, VQA-style accuracy and evaluation reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgnError};
use crate::graph::SparsitySummary;
use crate::scene::{Dataset, QaExample, Split};
use crate::text::normalize;

/// Minimal number of single-character insertions, deletions and
/// substitutions, over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ANLS_THRESHOLD: f64 = 0.5;

/// `1 - lev / max_len` on normalized strings, zeroed below 0.5.
/// Two empty strings score 1.
pub fn anls(pred: &str, gold: &str) -> f64 {
    let (p, g) = (normalize(pred), normalize(gold));
    let len = p.chars().count().max(g.chars().count());
    if len == 0 {
        return 1.0;
    }
    let s = 1.0 - levenshtein(&p, &g) as f64 / len as f64;
    if s < ANLS_THRESHOLD {
        0.0
    } else {
        s
    }
}

/// Best ANLS against any gold answer.
pub fn anls_max(pred: &str, golds: &[String]) -> f64 {
    golds.iter().map(|g| anls(pred, g)).fold(0.0, f64::max)
}

/// With ten or more golds, the mean over leave-one-out subsets of
/// `min(matches / 3, 1)`; with fewer, the fraction of golds matched exactly.
pub fn vqa_accuracy(pred: &str, golds: &[String]) -> Result<f64> {
    if golds.is_empty() {
        return Err(SsgnError::Invalid("no gold answers".into()));
    }
    let p = normalize(pred);
    let total = golds.iter().filter(|g| normalize(g) == p).count();
    let n = golds.len();
    if n < 10 {
        return Ok(total as f64 / n as f64);
    }
    // Subsets that drop a matching answer see one fewer match.
    let with = total as f64 * (total.saturating_sub(1) as f64 / 3.0).min(1.0);
    let without = (n - total) as f64 * (total as f64 / 3.0).min(1.0);
    Ok((with + without) / n as f64)
}

/// 1 when the normalized prediction equals the majority gold answer.
pub fn exact_match(pred: &str, example: &QaExample) -> f64 {
    f64::from(u8::from(normalize(pred) == example.majority_answer()))
}

/// Identifier of an example: `<scene name>#<index>`.
pub fn example_id(scene: &str, index: usize) -> String {
    format!("{scene}#{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub question: String,
    pub prediction: String,
    pub gold: Vec<String>,
    pub acc: f64,
    pub anls: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<Split>,
    pub records: Vec<EvalRecord>,
    pub accuracy: f64,
    pub anls: f64,
    pub exact_match: f64,
    pub sparsity: Option<SparsitySummary>,
}

impl EvalReport {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        EvalReport {
            split: None,
            accuracy: mean(|r| r.acc),
            anls: mean(|r| r.anls),
            exact_match: mean(|r| r.exact),
            records,
            sparsity: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aggregate summary as an aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let split = self.split.map_or("-", |s| s.as_str());
        let _ = writeln!(out, "{:<12} {:>10}", "split", split);
        let _ = writeln!(out, "{:<12} {:>10}", "examples", self.records.len());
        let _ = writeln!(out, "{:<12} {:>10.4}", "acc", self.accuracy);
        let _ = writeln!(out, "{:<12} {:>10.4}", "anls", self.anls);
        let _ = writeln!(out, "{:<12} {:>10.4}", "exact", self.exact_match);
        if let Some(sp) = &self.sparsity {
            let _ = writeln!(out, "{:<12} {:>10.4}", "sr_otsg", sp.otsg);
            let _ = writeln!(out, "{:<12} {:>10.4}", "sr_osg", sp.osg);
            let _ = writeln!(out, "{:<12} {:>10.4}", "sr_tsg", sp.tsg);
        }
        out
    }
}

/// Scores `predictions` (keyed by [`example_id`]) against every example of
/// `split`, in dataset order.
pub fn evaluate(
    predictions: &HashMap<String, String>,
    dataset: &Dataset,
    split: Split,
) -> Result<EvalReport> {
    let mut records = Vec::new();
    for entry in dataset.split(split) {
        for (i, ex) in entry.scene.examples.iter().enumerate() {
            let id = example_id(&entry.name, i);
            let pred = predictions
                .get(&id)
                .ok_or_else(|| SsgnError::Invalid(format!("no prediction for example {id}")))?;
            records.push(score(id, pred, ex)?);
        }
    }
    let mut report = EvalReport::from_records(records);
    report.split = Some(split);
    Ok(report)
}

pub fn score(id: String, prediction: &str, example: &QaExample) -> Result<EvalRecord> {
    Ok(EvalRecord {
        question: example.question.join(" "),
        prediction: prediction.to_string(),
        gold: example.answers.clone(),
        acc: vqa_accuracy(prediction, &example.answers)?,
        anls: anls_max(prediction, &example.answers),
        exact: exact_match(prediction, example),
        id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golds(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("stp", "stop"), 1);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("café", "cafe"), 1);
    }

    #[test]
    fn anls_examples() {
        assert_eq!(anls("stop", "stop"), 1.0);
        assert_eq!(anls("stp", "stop"), 0.75);
        assert_eq!(anls("a", "abcdef"), 0.0);
        assert_eq!(anls("", ""), 1.0);
        assert_eq!(anls("  STOP ", "stop"), 1.0);
    }

    #[test]
    fn vqa_accuracy_examples() {
        let ten = |k: usize| -> Vec<String> {
            (0..10)
                .map(|i| {
                    if i < k {
                        "yes".to_string()
                    } else {
                        format!("no{i}")
                    }
                })
                .collect()
        };
        assert_eq!(vqa_accuracy("yes", &ten(10)).unwrap(), 1.0);
        assert_eq!(vqa_accuracy("yes", &ten(0)).unwrap(), 0.0);
        assert!((vqa_accuracy("yes", &ten(3)).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(vqa_accuracy("a", &golds(&["a", "b"])).unwrap(), 0.5);
        assert!(vqa_accuracy("a", &[]).is_err());
    }

    /// Direct enumeration of the nine-answer subsets.
    fn loo_oracle(pred: &str, golds: &[String]) -> f64 {
        let n = golds.len();
        (0..n)
            .map(|skip| {
                let m = (0..n)
                    .filter(|&i| i != skip && normalize(&golds[i]) == normalize(pred))
                    .count();
                (m as f64 / 3.0).min(1.0)
            })
            .sum::<f64>()
            / n as f64
    }

    proptest! {
        #[test]
        fn levenshtein_symmetric_and_triangle(a in "[a-c]{0,8}", b in "[a-c]{0,8}", c in "[a-c]{0,8}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn anls_range(a in "[a-d ]{0,10}", b in "[a-d ]{1,10}") {
            let s = anls(&a, &b);
            prop_assert!(s == 0.0 || (0.5..=1.0).contains(&s));
            if !normalize(&b).is_empty() {
                prop_assert_eq!(anls(&b, &b), 1.0);
            }
        }

        #[test]
        fn vqa_accuracy_matches_enumeration_and_is_permutation_invariant(
            picks in prop::collection::vec(0usize..3, 10),
            rot in 0usize..10,
        ) {
            let words = ["x", "y", "z"];
            let g: Vec<String> = picks.iter().map(|i| words[*i].to_string()).collect();
            let a = vqa_accuracy("x", &g).unwrap();
            prop_assert!((a - loo_oracle("x", &g)).abs() < 1e-12);
            let mut r = g.clone();
            r.rotate_left(rot);
            prop_assert_eq!(a, vqa_accuracy("x", &r).unwrap());
        }
    }

    #[test]
    fn report_aggregates() {
        let ex = QaExample {
            question: vec!["what".into()],
            answers: golds(&["stop"]),
        };
        let r1 = score("s#0".into(), "stop", &ex).unwrap();
        let one = EvalReport::from_records(vec![r1.clone()]);
        assert_eq!((one.accuracy, one.anls), (1.0, 1.0));
        let r2 = score("s#1".into(), "zzzzzz", &ex).unwrap();
        let two = EvalReport::from_records(vec![r1, r2]);
        assert_eq!(two.accuracy, 0.5);
        let oracle: f64 = two.records.iter().map(|r| r.anls).sum::<f64>() / 2.0;
        assert_eq!(two.anls, oracle);
        assert!(two.to_table().contains("acc"));
        let back: EvalReport = serde_json::from_str(&two.to_json()).unwrap();
        assert_eq!(back, two);
    }
}
