//! Text normalisation shared by graph identity, subsets and metrics.

/// Lowercases, collapses runs of Unicode whitespace to one space and strips
/// trailing `.`, `!` and `?` (together with any whitespace between them).
pub fn normalize(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| matches!(c, '.' | '!' | '?') || c.is_whitespace())
        .to_string()
}

/// Whitespace tokens of the normalised text.
pub fn tokenize(raw: &str) -> Vec<String> {
    normalize(raw)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}
