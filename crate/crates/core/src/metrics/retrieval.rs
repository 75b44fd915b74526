//! Text-to-image retrieval recall.

use crate::error::{Error, Result};
use crate::graph::EmbeddingMatrix;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// 0-based rank of the true image among all candidates, by descending cosine
/// with ties going to the lower row index.
pub fn retrieval_rank(text: &[f32], images: &EmbeddingMatrix, truth: usize) -> usize {
    let target = cosine(text, images.row(truth));
    (0..images.len())
        .filter(|&j| {
            let s = cosine(text, images.row(j));
            s > target || (s == target && j < truth)
        })
        .count()
}

/// Maps every text row to the image row sharing its id.
pub fn truth_by_id(texts: &EmbeddingMatrix, images: &EmbeddingMatrix) -> Result<Vec<usize>> {
    texts
        .row_ids()
        .iter()
        .map(|id| images.row_of(id).ok_or_else(|| Error::MissingEmbedding(id.clone())))
        .collect()
}

/// Percentage of texts whose true image ranks within the top `k`.
pub fn recall_at_k(texts: &EmbeddingMatrix, images: &EmbeddingMatrix, truth: &[usize], k: usize) -> Result<f64> {
    recall_at_ks(texts, images, truth, &[k]).map(|v| v[0])
}

/// Recall for several cut-offs from one ranking pass.
pub fn recall_at_ks(texts: &EmbeddingMatrix, images: &EmbeddingMatrix, truth: &[usize], ks: &[usize]) -> Result<Vec<f64>> {
    if texts.dim() != images.dim() {
        return Err(Error::DimMismatch {
            expected: images.dim(),
            actual: texts.dim(),
        });
    }
    if truth.len() != texts.len() {
        return Err(Error::Invalid(format!("{} truth entries for {} texts", truth.len(), texts.len())));
    }
    if texts.is_empty() {
        return Err(Error::Invalid("no texts to retrieve with".into()));
    }
    for &k in ks {
        if k == 0 || k > images.len() {
            return Err(Error::Invalid(format!("k = {k} outside 1..={}", images.len())));
        }
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= images.len()) {
        return Err(Error::Invalid(format!("truth index {bad} outside the image pool")));
    }
    let ranks: Vec<usize> = truth
        .iter()
        .enumerate()
        .map(|(i, &t)| retrieval_rank(texts.row(i), images, t))
        .collect();
    Ok(ks
        .iter()
        .map(|&k| 100.0 * ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64)
        .collect())
}
