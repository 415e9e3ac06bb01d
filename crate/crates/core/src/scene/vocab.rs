use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const BEGIN: &str = "<begin>";
pub const END: &str = "<end>";
pub const UNK: &str = "<unk>";

const RESERVED: [&str; 4] = [PAD, BEGIN, END, UNK];

/// Ordered word list with reverse index. The four reserved entries always
/// occupy positions 0..4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Vocabulary::new(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// Reserved entries followed by `words` in order; duplicates are dropped.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in RESERVED {
            v.push(w.to_string());
        }
        for w in words {
            v.push(w.into());
        }
        v
    }

    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.words.len());
            self.words.push(w);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn index_or_unk(&self, word: &str) -> usize {
        self.get(word).unwrap_or(self.unk())
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn pad(&self) -> usize {
        0
    }
    pub fn begin(&self) -> usize {
        1
    }
    pub fn end(&self) -> usize {
        2
    }
    pub fn unk(&self) -> usize {
        3
    }

    pub fn is_reserved(&self, i: usize) -> bool {
        i < RESERVED.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_entries_and_bijection() {
        let v = Vocabulary::new(["stop", "go", "stop", "<end>"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.word(v.end()), END);
        assert_eq!(v.get("go"), Some(5));
        assert_eq!(v.index_or_unk("missing"), v.unk());
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(v.get(w), Some(i));
        }
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
