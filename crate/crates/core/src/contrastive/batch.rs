//! Construction of similar-image sets `H` and positive pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{ToyVocab, TokenId};
use crate::error::{Error, Result};
use crate::graph::{EmbeddingMatrix, VisualCommonsenseGraph};

pub const DEFAULT_H_SIZE: usize = 2;

/// One training example. `images` holds the feature rows of every member of
/// `H` in image-id order; `tokens` encodes the positive text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveBatchItem {
    pub images: Vec<Vec<Vec<f64>>>,
    pub image_ids: Vec<String>,
    pub positive: usize,
    pub tokens: Vec<TokenId>,
    pub text: String,
    /// False when no description in `H` is tied to exactly one member; the
    /// item then only contributes its language-modelling loss.
    pub use_contrastive: bool,
}

/// Anything that can produce a fresh list of items per epoch.
pub trait ItemSource {
    fn vocab(&self) -> &ToyVocab;
    fn feature_dim(&self) -> usize;
    fn sample_items(&self, rng: &mut ChaCha8Rng) -> Result<Vec<ContrastiveBatchItem>>;
}

/// Image/description incidence in a form shared by graphs and toy datasets.
/// Image indices are in image-id order and description ids in text order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Incidence {
    pub image_ids: Vec<String>,
    pub features: Vec<Vec<Vec<f64>>>,
    pub texts: Vec<String>,
    /// Sorted description ids per image.
    pub descriptions_of: Vec<Vec<usize>>,
    /// Sorted image indices per description.
    pub images_of: Vec<Vec<usize>>,
    /// Anchor (image, description) pairs in iteration order.
    pub anchors: Vec<(usize, usize)>,
}

impl Incidence {
    fn related(&self, image: usize, description: usize) -> bool {
        self.descriptions_of[image].binary_search(&description).is_ok()
    }

    pub fn sample(&self, vocab: &ToyVocab, h_size: usize, rng: &mut impl Rng) -> Result<Vec<ContrastiveBatchItem>> {
        if h_size < 2 {
            return Err(Error::Invalid("|H| must be at least 2".into()));
        }
        let mut out = Vec::with_capacity(self.anchors.len());
        for &(anchor, desc) in &self.anchors {
            let others: Vec<usize> = self.images_of[desc].iter().copied().filter(|&i| i != anchor).collect();
            if others.is_empty() {
                out.push(self.item(vocab, vec![anchor], 0, desc, false)?);
                continue;
            }
            let take = (h_size - 1).min(others.len());
            let mut h: Vec<usize> = others.choose_multiple(rng, take).copied().collect();
            h.push(anchor);
            h.sort_unstable();

            let mut candidates = Vec::new();
            for (pos, &img) in h.iter().enumerate() {
                for &d in &self.descriptions_of[img] {
                    if h.iter().all(|&o| o == img || !self.related(o, d)) {
                        candidates.push((pos, d));
                    }
                }
            }
            let item = match candidates.as_slice() {
                [] => {
                    let pos = h.iter().position(|&i| i == anchor).unwrap();
                    self.item(vocab, h, pos, desc, false)?
                }
                c => {
                    let (pos, d) = c[rng.gen_range(0..c.len())];
                    self.item(vocab, h, pos, d, true)?
                }
            };
            out.push(item);
        }
        Ok(out)
    }

    fn item(&self, vocab: &ToyVocab, h: Vec<usize>, positive: usize, desc: usize, contrastive: bool) -> Result<ContrastiveBatchItem> {
        let text = self.texts[desc].clone();
        Ok(ContrastiveBatchItem {
            images: h.iter().map(|&i| self.features[i].clone()).collect(),
            image_ids: h.iter().map(|&i| self.image_ids[i].clone()).collect(),
            positive,
            tokens: vocab.encode(&text)?,
            text,
            use_contrastive: contrastive,
        })
    }

    pub fn from_graph(g: &VisualCommonsenseGraph, emb: &EmbeddingMatrix) -> Result<Self> {
        let mut features = Vec::with_capacity(g.num_images());
        for img in g.images() {
            if img.embedding_row >= emb.len() {
                return Err(Error::MissingEmbedding(img.image_id.clone()));
            }
            let row = emb.row(img.embedding_row).iter().map(|&x| x as f64).collect();
            features.push(vec![row]);
        }
        let anchors = g.edges().iter().map(|e| (e.image, e.description)).collect();
        Ok(Self {
            image_ids: g.images().iter().map(|i| i.image_id.clone()).collect(),
            features,
            texts: g.descriptions().iter().map(|d| d.normalized_text.clone()).collect(),
            descriptions_of: (0..g.num_images()).map(|i| g.descriptions_of_image(i).into_iter().collect()).collect(),
            images_of: (0..g.num_descriptions()).map(|d| g.images_of(d).to_vec()).collect(),
            anchors,
        })
    }
}

/// One item per edge of the graph, in canonical edge order. Feature rows are the images' embedding rows.
pub fn sample_contrastive_batch(
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
    vocab: &ToyVocab,
    h_size: usize,
    seed: u64,
) -> Result<Vec<ContrastiveBatchItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Incidence::from_graph(g, emb)?.sample(vocab, h_size, &mut rng)
}

/// A graph with its embeddings as a training source.
pub struct GraphItemSource {
    incidence: Incidence,
    vocab: ToyVocab,
    h_size: usize,
}

impl GraphItemSource {
    pub fn new(g: &VisualCommonsenseGraph, emb: &EmbeddingMatrix, h_size: usize) -> Result<Self> {
        let texts: Vec<&str> = g.descriptions().iter().map(|d| d.normalized_text.as_str()).collect();
        Ok(Self {
            incidence: Incidence::from_graph(g, emb)?,
            vocab: ToyVocab::from_texts(&texts),
            h_size,
        })
    }
}

impl ItemSource for GraphItemSource {
    fn vocab(&self) -> &ToyVocab {
        &self.vocab
    }

    fn feature_dim(&self) -> usize {
        self.incidence.features.first().map_or(0, |f| f[0].len())
    }

    fn sample_items(&self, rng: &mut ChaCha8Rng) -> Result<Vec<ContrastiveBatchItem>> {
        self.incidence.sample(&self.vocab, self.h_size, rng)
    }
}
