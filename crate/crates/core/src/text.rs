//! Answer string normalization shared by token matching and the metrics.

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '‘' | '’' | '“' | '”' | '…' | '¡' | '¿' | '«' | '»')
}

/// Lowercase, collapse runs of whitespace to one space and strip leading and
/// trailing punctuation.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(is_punct).trim().to_string()
}

/// Normalized whitespace-separated words of `s`.
pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(normalize)
        .filter(|w| !w.is_empty())
        .collect()
}
