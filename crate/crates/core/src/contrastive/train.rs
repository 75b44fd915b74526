//! Deterministic minibatch training of the toy model.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{ContrastiveBatchItem, ItemSource};
use super::loss::{backward, item_cosines};
use super::model::{ModelShape, ToyModelParams};
use super::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub d_e: usize,
    pub d_h: usize,
    pub d_r: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lr: 1e-3,
            weight_decay: 0.01,
            epochs: 10,
            batch: 8,
            seed: 0,
            d_e: 8,
            d_h: 16,
            d_r: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub mean_l_org: f64,
    /// Mean over items that carry the contrastive term.
    pub mean_l_crl: f64,
    pub retrieval_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ToyModelParams,
    pub trace: Vec<EpochTrace>,
}

/// Fraction of items whose positive image has the highest cosine with the
/// positive text; ties go to the earlier member of `H`.
pub fn evaluate_retrieval(params: &ToyModelParams, items: &[ContrastiveBatchItem]) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for item in items {
        let cos = item_cosines(item, params)?;
        let best = cos
            .iter()
            .enumerate()
            .fold(0, |best, (i, &c)| if c > cos[best] { i } else { best });
        hits += usize::from(best == item.positive);
    }
    Ok(hits as f64 / items.len() as f64)
}

/// Trains from a seeded initialisation. Items are resampled and shuffled
/// every epoch; gradients are averaged over each minibatch in item order.
/// `eval_items` feed the per-epoch retrieval accuracy.
pub fn train_toy(source: &dyn ItemSource, eval_items: &[ContrastiveBatchItem], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be non-negative, got {}", cfg.lambda)));
    }
    let shape = ModelShape {
        vocab: source.vocab().len(),
        d_e: cfg.d_e,
        d_h: cfg.d_h,
        d_r: cfg.d_r,
        d_img: source.feature_dim(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ToyModelParams::init(shape, &mut rng);
    let mut state = AdamWState::new(&params);
    let opt = AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut items = source.sample_items(&mut rng)?;
        items.shuffle(&mut rng);
        let (mut sum_org, mut sum_crl, mut n_crl) = (0.0, 0.0, 0usize);
        for chunk in items.chunks(cfg.batch) {
            let mut grad = ToyModelParams::zeros(shape);
            for item in chunk {
                let (loss, g) = backward(item, &params, cfg.lambda).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, text {:?}: {m}", item.text)),
                    other => other,
                })?;
                if !loss.l_total.is_finite() {
                    return Err(Error::NonFinite(format!("epoch {epoch}: loss {} on text {:?}", loss.l_total, item.text)));
                }
                sum_org += loss.l_org;
                if item.use_contrastive {
                    sum_crl += loss.l_crl;
                    n_crl += 1;
                }
                grad.add_scaled(&g, 1.0);
            }
            grad.scale(1.0 / chunk.len() as f64);
            adamw_step(&mut params, &grad, &mut state, &opt)?;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters diverged in epoch {epoch}")));
        }
        trace.push(EpochTrace {
            epoch,
            mean_l_org: if items.is_empty() { 0.0 } else { sum_org / items.len() as f64 },
            mean_l_crl: if n_crl == 0 { 0.0 } else { sum_crl / n_crl as f64 },
            retrieval_acc: evaluate_retrieval(&params, eval_items)?,
        });
    }
    Ok(TrainOutcome { params, trace })
}

pub fn write_trace_csv(trace: &[EpochTrace], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,mean_l_org,mean_l_crl,retrieval_acc")?;
    for t in trace {
        writeln!(out, "{},{},{},{}", t.epoch, t.mean_l_org, t.mean_l_crl, t.retrieval_acc)?;
    }
    Ok(())
}
