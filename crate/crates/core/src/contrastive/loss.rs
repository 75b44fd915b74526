//! Language-modelling and contrastive retrieval losses with their exact
//! gradients.
//!
//! For an item with similar-image set `H`, positive image `p` and positive
//! text `s`, one decoder pass conditioned on `V_p` feeds both terms:
//!
//! * `L_org = -sum_t log softmax(logits_t)[target_t]` over scored steps;
//! * `L_crl = -log(sigma(p, s) / sum_i sigma(i, s))` with
//!   `sigma(i, s) = exp(cos(V_i, T_s))`, evaluated as
//!   `logsumexp_i(cos_i) - cos_p`;
//! * `L = L_org + lambda * L_crl`, or `L_org` alone for items flagged as
//!   lacking a uniquely related description.

use serde::{Deserialize, Serialize};

use super::batch::ContrastiveBatchItem;
use super::model::{decode_text, encode_image, text_representation, Decoded, Gradients, ImageEncoding, ToyModelParams};
use super::tensor::{dot, norm};
use super::vocab::TokenId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_org: f64,
    pub l_crl: f64,
    pub lambda: f64,
    pub l_total: f64,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("cosine of a zero-norm vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `exp(cos(V_h, T_s))`, always within `[1/e, e]`.
pub fn agreement(image_repr: &[f64], text_repr: &[f64]) -> Result<f64> {
    Ok(cosine(image_repr, text_repr)?.exp())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Contrastive retrieval loss from the cosines of every member of `H` with
/// the positive text.
pub fn crl_from_cosines(cosines: &[f64], positive: usize) -> f64 {
    log_sum_exp(cosines) - cosines[positive]
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn lm_from_decoded(dec: &Decoded) -> f64 {
    (0..dec.steps())
        .filter(|&s| dec.is_scored(s))
        .map(|s| log_sum_exp(&dec.logits[s]) - dec.logits[s][dec.target(s)])
        .sum()
}

/// Teacher-forced negative log-likelihood of `tokens` given `V_h`.
pub fn lm_loss(tokens: &[TokenId], v_h: &[f64], params: &ToyModelParams) -> Result<f64> {
    Ok(lm_from_decoded(&decode_text(tokens, v_h, params)?))
}

/// Everything the backward pass needs from one forward pass.
struct Forward {
    images: Vec<ImageEncoding>,
    decoded: Decoded,
    text_repr: Option<Vec<f64>>,
    cosines: Vec<f64>,
    l_org: f64,
    l_crl: f64,
}

fn check_item(item: &ContrastiveBatchItem) -> Result<()> {
    if item.images.is_empty() || item.positive >= item.images.len() {
        return Err(Error::Invalid("item positive index outside H".into()));
    }
    if item.use_contrastive && item.images.len() < 2 {
        return Err(Error::Invalid("contrastive items need at least two images".into()));
    }
    Ok(())
}

fn forward(item: &ContrastiveBatchItem, params: &ToyModelParams, with_crl: bool) -> Result<Forward> {
    check_item(item)?;
    let images = item
        .images
        .iter()
        .map(|f| encode_image(f, params))
        .collect::<Result<Vec<_>>>()?;
    let decoded = decode_text(&item.tokens, &images[item.positive].repr, params)?;
    let l_org = lm_from_decoded(&decoded);
    let (text_repr, cosines, l_crl) = if with_crl && item.use_contrastive {
        let t = text_representation(&decoded, params)?;
        let cosines = images
            .iter()
            .map(|img| cosine(&img.repr, &t))
            .collect::<Result<Vec<_>>>()?;
        let l = crl_from_cosines(&cosines, item.positive);
        (Some(t), cosines, l)
    } else {
        (None, Vec::new(), 0.0)
    };
    Ok(Forward {
        images,
        decoded,
        text_repr,
        cosines,
        l_org,
        l_crl,
    })
}

/// `L_crl` for one item.
pub fn contrastive_loss(item: &ContrastiveBatchItem, params: &ToyModelParams) -> Result<f64> {
    if !item.use_contrastive {
        return Ok(0.0);
    }
    Ok(forward(item, params, true)?.l_crl)
}

/// Cosine of every member of `H` with the positive text representation.
pub fn item_cosines(item: &ContrastiveBatchItem, params: &ToyModelParams) -> Result<Vec<f64>> {
    let f = forward(&ContrastiveBatchItem { use_contrastive: true, ..item.clone() }, params, true)?;
    Ok(f.cosines)
}

pub fn total_loss(item: &ContrastiveBatchItem, params: &ToyModelParams, lambda: f64) -> Result<LossBreakdown> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let f = forward(item, params, true)?;
    Ok(LossBreakdown {
        l_org: f.l_org,
        l_crl: f.l_crl,
        lambda,
        l_total: f.l_org + lambda * f.l_crl,
    })
}

/// Gradient of `cos(a, b)` with respect to `a`.
fn cosine_grad(a: &[f64], b: &[f64], cos: f64) -> Vec<f64> {
    let (na, nb) = (norm(a), norm(b));
    a.iter()
        .zip(b)
        .map(|(ai, bi)| bi / (na * nb) - cos * ai / (na * na))
        .collect()
}

/// Loss and exact gradient of `L_org + lambda * L_crl` for every tensor.
pub fn backward(item: &ContrastiveBatchItem, params: &ToyModelParams, lambda: f64) -> Result<(LossBreakdown, Gradients)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let f = forward(item, params, true)?;
    let loss = LossBreakdown {
        l_org: f.l_org,
        l_crl: f.l_crl,
        lambda,
        l_total: f.l_org + lambda * f.l_crl,
    };
    let mut g = ToyModelParams::zeros(params.shape());
    let dec = &f.decoded;
    let steps = dec.steps();
    let d_h = params.a.rows();

    // Gradient reaching each hidden state h_{s+1} from outputs at step s.
    let mut dh_local = vec![vec![0.0; d_h]; steps];
    for s in (0..steps).filter(|&s| dec.is_scored(s)) {
        let mut dlogits = softmax(&dec.logits[s]);
        dlogits[dec.target(s)] -= 1.0;
        g.u.add_outer(&dlogits, &dec.hidden[s + 1]);
        dh_local[s] = params.u.matvec_t(&dlogits);
    }

    let mut d_image_repr = vec![vec![0.0; params.pv.rows()]; f.images.len()];
    if let Some(t) = &f.text_repr {
        let weights = softmax(&f.cosines);
        let mut dt = vec![0.0; t.len()];
        for (i, img) in f.images.iter().enumerate() {
            let coef = lambda * (weights[i] - if i == item.positive { 1.0 } else { 0.0 });
            for (d, v) in dt.iter_mut().zip(cosine_grad(t, &img.repr, f.cosines[i])) {
                *d += coef * v;
            }
            for (d, v) in d_image_repr[i].iter_mut().zip(cosine_grad(&img.repr, t, f.cosines[i])) {
                *d += coef * v;
            }
        }
        // T_s = Pt * mean(h over scored steps)
        let n = dec.scored_steps() as f64;
        let back = params.pt.matvec_t(&dt);
        for s in (0..steps).filter(|&s| dec.is_scored(s)) {
            let h = &dec.hidden[s + 1];
            for (row, &dti) in dt.iter().enumerate() {
                let r = g.pt.row_mut(row);
                for (x, hj) in r.iter_mut().zip(h) {
                    *x += dti * hj / n;
                }
            }
            for (d, b) in dh_local[s].iter_mut().zip(&back) {
                *d += b / n;
            }
        }
    }

    // Back-propagation through time.
    let mut carry = vec![0.0; d_h];
    let mut d_cond = vec![0.0; d_h];
    for s in (0..steps).rev() {
        let h = &dec.hidden[s + 1];
        let dz: Vec<f64> = dh_local[s]
            .iter()
            .zip(&carry)
            .zip(h)
            .map(|((l, c), hv)| (l + c) * (1.0 - hv * hv))
            .collect();
        let x = dec.tokens[s];
        g.a.add_outer(&dz, &dec.hidden[s]);
        g.b.add_outer(&dz, params.emb.row(x));
        let demb = params.b.matvec_t(&dz);
        for (e, d) in g.emb.row_mut(x).iter_mut().zip(&demb) {
            *e += d;
        }
        for (c, d) in d_cond.iter_mut().zip(&dz) {
            *c += d;
        }
        carry = params.a.matvec_t(&dz);
    }

    let positive = &f.images[item.positive];
    g.cv.add_outer(&d_cond, &positive.repr);
    for (d, v) in d_image_repr[item.positive].iter_mut().zip(params.cv.matvec_t(&d_cond)) {
        *d += v;
    }
    for (img, dv) in f.images.iter().zip(&d_image_repr) {
        g.pv.add_outer(dv, &img.mean_feature);
    }

    if !g.is_finite() {
        return Err(Error::NonFinite("gradient contains non-finite entries".into()));
    }
    Ok((loss, g))
}
