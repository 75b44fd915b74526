//! Length, distinct n-grams, and the unique/novel percentages.

use std::collections::{HashMap, HashSet};

use super::GeneratedInference;
use crate::error::{Error, Result};

fn non_empty(corpus: &[GeneratedInference]) -> Result<()> {
    if corpus.is_empty() {
        Err(Error::Invalid("empty corpus".into()))
    } else {
        Ok(())
    }
}

pub fn mean_length(corpus: &[GeneratedInference]) -> Result<f64> {
    non_empty(corpus)?;
    let total: usize = corpus.iter().map(|g| g.tokens.len()).sum();
    Ok(total as f64 / corpus.len() as f64)
}

/// Distinct token n-grams pooled over the whole corpus.
pub fn dist_n(corpus: &[GeneratedInference], n: usize) -> usize {
    assert!(n > 0, "n-gram order must be positive");
    let mut seen: HashSet<&[String]> = HashSet::new();
    for g in corpus {
        seen.extend(g.tokens.windows(n));
    }
    seen.len()
}

/// Percentage of inferences whose normalised text occurs exactly once.
pub fn unique_pct(corpus: &[GeneratedInference]) -> Result<f64> {
    non_empty(corpus)?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in corpus {
        *counts.entry(g.normalized.as_str()).or_default() += 1;
    }
    let once = corpus.iter().filter(|g| counts[g.normalized.as_str()] == 1).count();
    Ok(100.0 * once as f64 / corpus.len() as f64)
}

/// Percentage of inferences whose normalised text is absent from `train`.
pub fn novel_pct(corpus: &[GeneratedInference], train: &HashSet<&str>) -> Result<f64> {
    non_empty(corpus)?;
    let novel = corpus
        .iter()
        .filter(|g| !train.contains(g.normalized.as_str()))
        .count();
    Ok(100.0 * novel as f64 / corpus.len() as f64)
}
