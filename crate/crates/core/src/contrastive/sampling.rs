//! Nucleus (top-p) sampling.

use rand::Rng;

use super::model::ToyModelParams;
use super::vocab::{TokenId, BOS, EOS};
use crate::error::{Error, Result};

/// Smallest prefix of tokens, by descending probability with ties broken by
/// lower id, whose mass reaches `p`; returned renormalised.
pub fn nucleus_filter(probs: &[f64], p: f64) -> Result<Vec<(TokenId, f64)>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Invalid(format!("nucleus mass must be in (0, 1], got {p}")));
    }
    if probs.is_empty() || probs.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Invalid("probabilities must be finite and non-negative".into()));
    }
    let mut order: Vec<TokenId> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let total: f64 = probs.iter().sum();
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for id in order {
        kept.push((id, probs[id]));
        mass += probs[id] / total;
        if mass >= p {
            break;
        }
    }
    let z: f64 = kept.iter().map(|(_, q)| q).sum();
    Ok(kept.into_iter().map(|(id, q)| (id, q / z)).collect())
}

fn draw(nucleus: &[(TokenId, f64)], rng: &mut impl Rng) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(id, q) in nucleus {
        acc += q;
        if u < acc {
            return id;
        }
    }
    nucleus.last().unwrap().0
}

/// Samples until EOS or `max_len` tokens. `next` maps the prefix generated
/// so far to a probability vector.
pub fn nucleus_sample_with(
    mut next: impl FnMut(&[TokenId]) -> Result<Vec<f64>>,
    p: f64,
    rng: &mut impl Rng,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    let mut out = Vec::new();
    while out.len() < max_len {
        let probs = next(&out)?;
        let tok = draw(&nucleus_filter(&probs, p)?, rng);
        out.push(tok);
        if tok == EOS {
            break;
        }
    }
    Ok(out)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Generates from the toy decoder conditioned on `v_h`, starting after BOS.
pub fn generate(params: &ToyModelParams, v_h: &[f64], p: f64, rng: &mut impl Rng, max_len: usize) -> Result<Vec<TokenId>> {
    if v_h.len() != params.cv.cols() {
        return Err(Error::DimMismatch {
            expected: params.cv.cols(),
            actual: v_h.len(),
        });
    }
    let cond = params.cv.matvec(v_h);
    let mut h = vec![0.0; params.a.rows()];
    let mut last = BOS;
    nucleus_sample_with(
        |prefix| {
            if let Some(&t) = prefix.last() {
                last = t;
            }
            let rec = params.a.matvec(&h);
            let inp = params.b.matvec(params.emb.row(last));
            h = rec.iter().zip(&inp).zip(&cond).map(|((r, i), c)| (r + i + c).tanh()).collect();
            Ok(softmax(&params.u.matvec(&h)))
        },
        p,
        rng,
        max_len,
    )
}
