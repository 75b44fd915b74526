//! A minimal image-conditioned recurrent captioner.
//!
//! Images are one or more feature rows; their representation is the mean of
//! the projected rows, `V = Pv * mean(rows)`. The decoder runs
//! `h_t = tanh(A h_{t-1} + B Emb[x_t] + Cv V)` from `h_0 = 0` with teacher
//! forcing, emits `logits_t = U h_t`, and summarises a text as the mean of
//! `Pt h_t` over positions whose target is not PAD.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::tensor::Matrix;
use super::vocab::{TokenId, BOS, PAD};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DIVETOY1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub vocab: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub d_r: usize,
    pub d_img: usize,
}

/// Every trainable tensor. Gradients share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelParams {
    /// `V x d_e` token embeddings.
    pub emb: Matrix,
    /// `d_h x d_h` recurrence.
    pub a: Matrix,
    /// `d_h x d_e` input map.
    pub b: Matrix,
    /// `d_h x d_r` image conditioning.
    pub cv: Matrix,
    /// `V x d_h` output logits.
    pub u: Matrix,
    /// `d_r x d_h` text projection.
    pub pt: Matrix,
    /// `d_r x d_img` image projection.
    pub pv: Matrix,
}

pub type Gradients = ToyModelParams;

impl ToyModelParams {
    pub const NAMES: [&'static str; 7] = ["emb", "a", "b", "cv", "u", "pt", "pv"];

    pub fn zeros(s: ModelShape) -> Self {
        Self {
            emb: Matrix::zeros(s.vocab, s.d_e),
            a: Matrix::zeros(s.d_h, s.d_h),
            b: Matrix::zeros(s.d_h, s.d_e),
            cv: Matrix::zeros(s.d_h, s.d_r),
            u: Matrix::zeros(s.vocab, s.d_h),
            pt: Matrix::zeros(s.d_r, s.d_h),
            pv: Matrix::zeros(s.d_r, s.d_img),
        }
    }

    /// Uniform entries scaled by `1/sqrt(fan_in)`.
    pub fn init(s: ModelShape, rng: &mut impl Rng) -> Self {
        let u = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        Self {
            emb: Matrix::random(s.vocab, s.d_e, 1.0, rng),
            a: Matrix::random(s.d_h, s.d_h, u(s.d_h), rng),
            b: Matrix::random(s.d_h, s.d_e, u(s.d_e), rng),
            cv: Matrix::random(s.d_h, s.d_r, u(s.d_r), rng),
            u: Matrix::random(s.vocab, s.d_h, u(s.d_h), rng),
            pt: Matrix::random(s.d_r, s.d_h, u(s.d_h), rng),
            pv: Matrix::random(s.d_r, s.d_img, u(s.d_img), rng),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            vocab: self.emb.rows(),
            d_e: self.emb.cols(),
            d_h: self.a.rows(),
            d_r: self.pt.rows(),
            d_img: self.pv.cols(),
        }
    }

    pub fn tensors(&self) -> [&Matrix; 7] {
        [&self.emb, &self.a, &self.b, &self.cv, &self.u, &self.pt, &self.pv]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 7] {
        [
            &mut self.emb,
            &mut self.a,
            &mut self.b,
            &mut self.cv,
            &mut self.u,
            &mut self.pt,
            &mut self.pv,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .all(|(a, b)| a.shape() == b.shape())
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(s));
    }

    /// Checkpoint bytes: magic, tensor count, `(rows, cols)` per tensor as
    /// little-endian `u32`, then every tensor's `f64` payload in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        }
        for t in &tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("checkpoint: {m}"));
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("magic mismatch"));
        }
        let read_u32 = |at: usize| -> Result<usize> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(|| bad("truncated header"))
        };
        if read_u32(8)? != 7 {
            return Err(bad("expected 7 tensors"));
        }
        let mut shapes = Vec::with_capacity(7);
        for i in 0..7 {
            shapes.push((read_u32(12 + 8 * i)?, read_u32(16 + 8 * i)?));
        }
        let mut at = 12 + 8 * 7;
        let mut mats = Vec::with_capacity(7);
        for (r, c) in shapes {
            let len = r * c * 8;
            let chunk = bytes.get(at..at + len).ok_or_else(|| bad("truncated payload"))?;
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            mats.push(Matrix::from_vec(r, c, data));
            at += len;
        }
        if at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().unwrap();
        let p = Self {
            emb: next(),
            a: next(),
            b: next(),
            cv: next(),
            u: next(),
            pt: next(),
            pv: next(),
        };
        let s = p.shape();
        let expected = Self::zeros(s);
        if !p.same_shape(&expected) {
            return Err(bad("inconsistent tensor shapes"));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("checkpoint contains non-finite parameters".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// An image's mean feature row and its projected representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoding {
    pub mean_feature: Vec<f64>,
    pub repr: Vec<f64>,
}

pub fn encode_image(features: &[Vec<f64>], params: &ToyModelParams) -> Result<ImageEncoding> {
    let d_img = params.pv.cols();
    if features.is_empty() {
        return Err(Error::Invalid("image has no feature rows".into()));
    }
    let mut mean = vec![0.0; d_img];
    for row in features {
        if row.len() != d_img {
            return Err(Error::DimMismatch {
                expected: d_img,
                actual: row.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = features.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(ImageEncoding {
        repr: params.pv.matvec(&mean),
        mean_feature: mean,
    })
}

/// Teacher-forced decoder pass. `hidden[0]` is the zero initial state and
/// `hidden[t]` (t >= 1) consumed `tokens[t - 1]` and predicts `tokens[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<TokenId>,
    pub conditioning: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

impl Decoded {
    pub fn steps(&self) -> usize {
        self.logits.len()
    }

    pub fn target(&self, step: usize) -> TokenId {
        self.tokens[step + 1]
    }

    /// Steps whose target is a real token.
    pub fn is_scored(&self, step: usize) -> bool {
        self.target(step) != PAD
    }

    pub fn scored_steps(&self) -> usize {
        (0..self.steps()).filter(|&s| self.is_scored(s)).count()
    }
}

pub fn decode_text(tokens: &[TokenId], v_h: &[f64], params: &ToyModelParams) -> Result<Decoded> {
    let vocab = params.emb.rows();
    if tokens.len() < 2 || tokens[0] != BOS {
        return Err(Error::Invalid("token sequence must start with BOS and hold a target".into()));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(Error::Invalid(format!("unknown token id {bad}")));
    }
    if v_h.len() != params.cv.cols() {
        return Err(Error::DimMismatch {
            expected: params.cv.cols(),
            actual: v_h.len(),
        });
    }
    let conditioning = params.cv.matvec(v_h);
    let d_h = params.a.rows();
    let mut hidden = vec![vec![0.0; d_h]];
    let mut logits = Vec::with_capacity(tokens.len() - 1);
    for &x in &tokens[..tokens.len() - 1] {
        let prev = hidden.last().unwrap();
        let rec = params.a.matvec(prev);
        let inp = params.b.matvec(params.emb.row(x));
        let h: Vec<f64> = rec
            .iter()
            .zip(&inp)
            .zip(&conditioning)
            .map(|((r, i), c)| (r + i + c).tanh())
            .collect();
        logits.push(params.u.matvec(&h));
        hidden.push(h);
    }
    Ok(Decoded {
        tokens: tokens.to_vec(),
        conditioning,
        hidden,
        logits,
    })
}

/// Mean of `Pt h_t` over scored steps.
pub fn text_representation(dec: &Decoded, params: &ToyModelParams) -> Result<Vec<f64>> {
    let n = dec.scored_steps();
    if n == 0 {
        return Err(Error::Invalid("text has no scored positions".into()));
    }
    let mut mean = vec![0.0; params.pt.cols()];
    for s in (0..dec.steps()).filter(|&s| dec.is_scored(s)) {
        for (m, h) in mean.iter_mut().zip(&dec.hidden[s + 1]) {
            *m += h;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Ok(params.pt.matvec(&mean))
}
