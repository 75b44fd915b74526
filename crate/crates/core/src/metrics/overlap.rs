//! Reference-overlap metrics: corpus BLEU and CIDEr.

use std::collections::HashMap;

use crate::error::{Error, Result};

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = HashMap::new();
    for g in tokens.windows(n) {
        *out.entry(g).or_default() += 1;
    }
    out
}

fn check_refs(hyps: usize, refs: &[&[Vec<String>]]) -> Result<()> {
    if hyps != refs.len() {
        return Err(Error::Invalid(format!("{hyps} hypotheses but {} reference sets", refs.len())));
    }
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(Error::Invalid(format!("hypothesis {i} has no references")));
    }
    Ok(())
}

/// Corpus BLEU with uniform weights over orders `1..=max_n`, clipped
/// counts, and a brevity penalty against the closest reference length
/// (ties resolve to the shorter reference).
pub fn bleu_n(hyps: &[&[String]], refs: &[&[Vec<String>]], max_n: usize) -> Result<f64> {
    check_refs(hyps.len(), refs)?;
    if max_n == 0 {
        return Err(Error::Invalid("BLEU order must be positive".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (hyp, rs) in hyps.iter().zip(refs) {
        hyp_len += hyp.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .unwrap();
        for n in 1..=max_n {
            let h = ngram_counts(hyp, n);
            let mut best: Counts = HashMap::new();
            for r in rs.iter() {
                for (g, c) in ngram_counts(r, n) {
                    let e = best.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &h {
                matched[n - 1] += (*c).min(best.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * log_p.exp())
}

const CIDER_MAX_N: usize = 4;

fn tfidf<'a>(tokens: &'a [String], n: usize, idf: &impl Fn(&[String]) -> f64) -> HashMap<&'a [String], f64> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(g, c)| (g, c as f64 * idf(g)))
        .collect()
}

/// Mean CIDEr over the corpus: TF-IDF n-gram vectors for `n = 1..=4` with
/// document frequencies counted over the reference sets passed in,
/// `idf = ln(N) - ln(max(1, df))`, cosine per order averaged over orders
/// and references, times 10.
pub fn cider(hyps: &[&[String]], refs: &[&[Vec<String>]]) -> Result<f64> {
    Ok(cider_per_item(hyps, refs)?.iter().sum::<f64>() / hyps.len() as f64)
}

pub fn cider_per_item(hyps: &[&[String]], refs: &[&[Vec<String>]]) -> Result<Vec<f64>> {
    check_refs(hyps.len(), refs)?;
    if hyps.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for rs in refs {
        let mut seen: std::collections::HashSet<&[String]> = Default::default();
        for r in rs.iter() {
            for n in 1..=CIDER_MAX_N {
                seen.extend(r.windows(n));
            }
        }
        for g in seen {
            *df.entry(g).or_default() += 1;
        }
    }
    let log_n = (refs.len() as f64).ln();
    let idf = |g: &[String]| log_n - (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
    let cos = |a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>| {
        let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = a.iter().map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0)).sum();
        dot / (na * nb)
    };

    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(hyp, rs)| {
            let hv: Vec<_> = (1..=CIDER_MAX_N).map(|n| tfidf(hyp, n, &idf)).collect();
            let per_ref: f64 = rs
                .iter()
                .map(|r| {
                    (1..=CIDER_MAX_N)
                        .map(|n| cos(&hv[n - 1], &tfidf(r, n, &idf)))
                        .sum::<f64>()
                        / CIDER_MAX_N as f64
                })
                .sum();
            10.0 * per_ref / rs.len() as f64
        })
        .collect())
}
