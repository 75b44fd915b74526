//! Central finite-difference verification of [`backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::batch::ContrastiveBatchItem;
use super::loss::{backward, total_loss};
use super::model::{ModelShape, ToyModelParams};
use super::vocab::{TokenId, BOS, EOS, PAD};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub tensor: &'static str,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub vocab: usize,
    pub tokens: usize,
    pub lambda: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// A random small problem: vocab in 5..=12, d_e = d_h = d_r = 4, d_img = 6,
/// three images in H and at most five tokens, sometimes ending in PAD.
pub fn random_case(seed: u64) -> (ToyModelParams, ContrastiveBatchItem, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(5..=12);
    let shape = ModelShape {
        vocab,
        d_e: 4,
        d_h: 4,
        d_r: 4,
        d_img: 6,
    };
    let mut params = ToyModelParams::init(shape, &mut rng);
    // Larger weights than the training init so every nonlinearity is exercised.
    params.scale(2.0);

    let images: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| {
            let rows = rng.gen_range(1..=2);
            (0..rows)
                .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let words = rng.gen_range(1..=3);
    let mut tokens: Vec<TokenId> = vec![BOS];
    tokens.extend((0..words).map(|_| rng.gen_range(3..vocab)));
    tokens.push(EOS);
    if tokens.len() < 5 && rng.gen_bool(0.5) {
        tokens.push(PAD);
    }
    let item = ContrastiveBatchItem {
        image_ids: (0..3).map(|i| format!("img{i}")).collect(),
        images,
        positive: rng.gen_range(0..3),
        tokens,
        text: String::new(),
        use_contrastive: true,
    };
    let lambda = rng.gen_range(0.1..1.0);
    (params, item, lambda)
}

/// Compares every analytic gradient entry with a central difference of
/// step [`FD_STEP`].
pub fn check_gradients(params: &ToyModelParams, item: &ContrastiveBatchItem, lambda: f64) -> Result<Vec<TensorCheck>> {
    check_gradients_with_step(params, item, lambda, FD_STEP)
}

pub fn check_gradients_with_step(
    params: &ToyModelParams,
    item: &ContrastiveBatchItem,
    lambda: f64,
    step: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, grads) = backward(item, params, lambda)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(7);
    for (t, name) in ToyModelParams::NAMES.iter().enumerate() {
        let len = params.tensors()[t].data().len();
        let mut worst = 0.0f64;
        for k in 0..len {
            let orig = params.tensors()[t].data()[k];
            probe.tensors_mut()[t].data_mut()[k] = orig + step;
            let up = total_loss(item, &probe, lambda)?.l_total;
            probe.tensors_mut()[t].data_mut()[k] = orig - step;
            let down = total_loss(item, &probe, lambda)?.l_total;
            probe.tensors_mut()[t].data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * step);
            worst = worst.max(rel_error(grads.tensors()[t].data()[k], fd));
        }
        out.push(TensorCheck {
            tensor: name,
            entries: len,
            max_rel_error: worst,
        });
    }
    Ok(out)
}

pub fn gradcheck_seed(seed: u64) -> Result<GradcheckReport> {
    let (params, item, lambda) = random_case(seed);
    let tensors = check_gradients(&params, &item, lambda)?;
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        vocab: params.emb.rows(),
        tokens: item.tokens.len(),
        lambda,
        tensors,
        max_rel_error,
    })
}
