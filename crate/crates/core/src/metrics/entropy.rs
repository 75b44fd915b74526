//! Word-level entropy under a smoothed training unigram distribution.

use std::collections::{BTreeMap, HashMap};

use super::GeneratedInference;
use crate::error::{Error, Result};
use crate::graph::VisualCommonsenseGraph;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnigramModel {
    counts: HashMap<String, u64>,
    total: u64,
}

impl UnigramModel {
    pub fn from_token_lists<'a, I, T>(lists: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = &'a str>,
    {
        let mut m = Self::default();
        for list in lists {
            for tok in list {
                *m.counts.entry(tok.to_string()).or_default() += 1;
                m.total += 1;
            }
        }
        m
    }

    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| crate::text::tokenize(t.as_ref())).collect();
        Self::from_token_lists(tokenized.iter().map(|t| t.iter().map(String::as_str)))
    }

    /// Counts every edge of the graph, so a description contributes once per
    /// inference it labels.
    pub fn from_graph(g: &VisualCommonsenseGraph) -> Self {
        let tokenized: Vec<Vec<&str>> = g
            .descriptions()
            .iter()
            .map(|d| d.normalized_text.split_whitespace().collect())
            .collect();
        Self::from_token_lists(g.edges().iter().map(|e| tokenized[e.description].iter().copied()))
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    /// Add-one smoothed probability `(count + 1) / (N + V + 1)`.
    pub fn prob(&self, token: &str) -> f64 {
        (self.count(token) + 1) as f64 / (self.total + self.counts.len() as u64 + 1) as f64
    }
}

/// Mean of `-log2 p(w)` over the inference's tokens.
pub fn word_entropy(inf: &GeneratedInference, m: &UnigramModel) -> Result<f64> {
    if m.total == 0 {
        return Err(Error::Invalid("unigram model is empty".into()));
    }
    let sum: f64 = inf.tokens.iter().map(|t| -m.prob(t).log2()).sum();
    Ok(sum / inf.tokens.len() as f64)
}

/// Centre of the bin holding `h`: bins are `[c - w/2, c + w/2)` around
/// multiples `c` of the width `w`.
pub fn bin_center(h: f64, bin_width: f64) -> f64 {
    ((h + bin_width / 2.0) / bin_width).floor() * bin_width
}

/// Share of values per bin, ascending by centre.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::Invalid(format!("bin width must be positive, got {bin_width}")));
    }
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &h in values {
        *bins.entry(((h + bin_width / 2.0) / bin_width).floor() as i64).or_default() += 1;
    }
    let n = values.len() as f64;
    Ok(bins
        .into_iter()
        .map(|(idx, c)| (idx as f64 * bin_width, c as f64 / n))
        .collect())
}

/// Distribution of per-inference word entropy.
pub fn entropy_histogram(corpus: &[GeneratedInference], m: &UnigramModel, bin_width: f64) -> Result<Vec<(f64, f64)>> {
    let values = corpus
        .iter()
        .map(|inf| word_entropy(inf, m))
        .collect::<Result<Vec<_>>>()?;
    histogram(&values, bin_width)
}
