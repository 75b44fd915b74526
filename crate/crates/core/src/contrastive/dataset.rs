//! Toy image/description datasets and the synthetic cluster generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{ContrastiveBatchItem, Incidence, ItemSource, DEFAULT_H_SIZE};
use super::vocab::ToyVocab;
use crate::error::{Error, Result};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRecord {
    pub image_id: String,
    pub features: Vec<Vec<f64>>,
    pub descriptions: Vec<String>,
    pub shared_description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    records: Vec<ToyRecord>,
    vocab: ToyVocab,
    h_size: usize,
    incidence: Incidence,
}

pub const NOUNS: [&str; 8] = ["cup", "dog", "car", "tree", "boat", "lamp", "chair", "bird"];
pub const ADJECTIVES: [&str; 6] = ["red", "blue", "green", "small", "large", "old"];
const TRAIN_ATTRIBUTES: usize = 4;

impl ToyDataset {
    /// Records are sorted by image id; duplicate ids and ragged feature rows
    /// are rejected.
    pub fn new(mut records: Vec<ToyRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        if let Some(w) = records.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::Invalid(format!("duplicate image_id {:?}", w[0].image_id)));
        }
        let dim = records.first().and_then(|r| r.features.first()).map_or(0, Vec::len);
        for r in &records {
            if r.features.is_empty() {
                return Err(Error::Invalid(format!("image {:?} has no features", r.image_id)));
            }
            if let Some(row) = r.features.iter().find(|f| f.len() != dim) {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if r.features.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("features of image {:?}", r.image_id)));
            }
        }

        let texts_of = |r: &ToyRecord| -> BTreeSet<String> {
            r.descriptions
                .iter()
                .chain(std::iter::once(&r.shared_description))
                .map(|t| normalize(t))
                .filter(|t| !t.is_empty())
                .collect()
        };
        let all: BTreeSet<String> = records.iter().flat_map(texts_of).collect();
        let ids: BTreeMap<&str, usize> = all.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let descriptions_of: Vec<Vec<usize>> = records
            .iter()
            .map(|r| texts_of(r).iter().map(|t| ids[t.as_str()]).collect())
            .collect();
        let mut images_of = vec![Vec::new(); all.len()];
        for (img, ds) in descriptions_of.iter().enumerate() {
            for &d in ds {
                images_of[d].push(img);
            }
        }
        let anchors = descriptions_of
            .iter()
            .enumerate()
            .flat_map(|(i, ds)| ds.iter().map(move |&d| (i, d)))
            .collect();
        let texts: Vec<String> = all.into_iter().collect();
        let incidence = Incidence {
            image_ids: records.iter().map(|r| r.image_id.clone()).collect(),
            features: records.iter().map(|r| r.features.clone()).collect(),
            texts,
            descriptions_of,
            images_of,
            anchors,
        };
        Ok(Self {
            vocab: ToyVocab::from_texts(&incidence.texts),
            records,
            h_size: DEFAULT_H_SIZE,
            incidence,
        })
    }

    pub fn with_h_size(mut self, h_size: usize) -> Self {
        self.h_size = h_size;
        self
    }

    pub fn records(&self) -> &[ToyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Line {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Line {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(f))
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Evaluation items: every image is the positive once, against images of
    /// its own group that do not carry its first description.
    pub fn retrieval_items(&self, vocab: &ToyVocab, h_size: usize, seed: u64) -> Result<Vec<ContrastiveBatchItem>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inc = &self.incidence;
        let mut out = Vec::new();
        for (img, r) in self.records.iter().enumerate() {
            let Some(text) = r.descriptions.first().map(|t| normalize(t)) else {
                continue;
            };
            let shared = normalize(&r.shared_description);
            let negatives: Vec<usize> = (0..self.records.len())
                .filter(|&o| o != img)
                .filter(|&o| normalize(&self.records[o].shared_description) == shared)
                .filter(|&o| self.records[o].descriptions.iter().all(|t| normalize(t) != text))
                .collect();
            if negatives.is_empty() {
                continue;
            }
            let take = (h_size - 1).min(negatives.len());
            let mut h: Vec<usize> = rand::seq::index::sample(&mut rng, negatives.len(), take)
                .into_iter()
                .map(|k| negatives[k])
                .collect();
            h.push(img);
            h.sort_unstable();
            out.push(ContrastiveBatchItem {
                images: h.iter().map(|&i| inc.features[i].clone()).collect(),
                image_ids: h.iter().map(|&i| inc.image_ids[i].clone()).collect(),
                positive: h.iter().position(|&i| i == img).unwrap(),
                tokens: vocab.encode(&text)?,
                text,
                use_contrastive: true,
            });
        }
        Ok(out)
    }
}

impl ItemSource for ToyDataset {
    fn vocab(&self) -> &ToyVocab {
        &self.vocab
    }

    fn feature_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.features[0].len())
    }

    fn sample_items(&self, rng: &mut ChaCha8Rng) -> Result<Vec<ContrastiveBatchItem>> {
        self.incidence.sample(&self.vocab, self.h_size, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Images per (cluster, attribute) combination.
    pub copies: usize,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            copies: 1,
            noise: 0.1,
        }
    }
}

/// Feature width of the synthetic data: one-hot cluster then one-hot
/// attribute.
pub const SYNTHETIC_DIM: usize = NOUNS.len() + ADJECTIVES.len();

/// Eight clusters, one per noun, sharing "look at the {noun}". Each image
/// carries "the {adjective} {noun}" and two noisy feature rows encoding its
/// cluster and its attribute. Cluster `c` trains on attributes
/// `c..c+4 (mod 6)` and holds out the remaining two, so every held-out
/// combination is unseen while every word is seen.
pub fn synthetic_clusters(cfg: SyntheticConfig) -> Result<(ToyDataset, ToyDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for (c, noun) in NOUNS.iter().enumerate() {
        for k in 0..ADJECTIVES.len() {
            let a = (c + k) % ADJECTIVES.len();
            for copy in 0..cfg.copies {
                let mut row = |hot: usize| -> Vec<f64> {
                    (0..SYNTHETIC_DIM)
                        .map(|j| if j == hot { 1.0 } else { 0.0 } + cfg.noise * (rng.gen::<f64>() * 2.0 - 1.0))
                        .collect()
                };
                let features = vec![row(c), row(NOUNS.len() + a)];
                let rec = ToyRecord {
                    image_id: format!("c{c}_a{a}_{copy}"),
                    features,
                    descriptions: vec![format!("the {} {}", ADJECTIVES[a], noun)],
                    shared_description: format!("look at the {noun}"),
                };
                if k < TRAIN_ATTRIBUTES {
                    train.push(rec);
                } else {
                    held_out.push(rec);
                }
            }
        }
    }
    Ok((ToyDataset::new(train)?, ToyDataset::new(held_out)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shapes_and_split() {
        let (train, held) = synthetic_clusters(SyntheticConfig::default()).unwrap();
        assert_eq!(train.len(), 32);
        assert_eq!(held.len(), 16);
        assert_eq!(train.feature_dim(), SYNTHETIC_DIM);
        let seen: BTreeSet<&str> = train.records().iter().map(|r| r.descriptions[0].as_str()).collect();
        assert!(held.records().iter().all(|r| !seen.contains(r.descriptions[0].as_str())));
        // Every held-out word is in the training vocabulary.
        for r in held.records() {
            train.vocab().encode(&r.descriptions[0]).unwrap();
        }
    }

    #[test]
    fn training_items_follow_construction() {
        let (train, _) = synthetic_clusters(SyntheticConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items = train.sample_items(&mut rng).unwrap();
        assert_eq!(items.len(), 64);
        let contrastive: Vec<_> = items.iter().filter(|i| i.use_contrastive).collect();
        assert_eq!(contrastive.len(), 32);
        for it in contrastive {
            assert_eq!(it.images.len(), 2);
            assert!(it.text.starts_with("the "));
        }
    }

    #[test]
    fn retrieval_items_pair_within_cluster() {
        let (train, held) = synthetic_clusters(SyntheticConfig::default()).unwrap();
        let items = held.retrieval_items(train.vocab(), 2, 0).unwrap();
        assert_eq!(items.len(), 16);
        for it in &items {
            let c0 = it.image_ids[0].split('_').next().unwrap();
            let c1 = it.image_ids[1].split('_').next().unwrap();
            assert_eq!(c0, c1);
        }
    }

    #[test]
    fn jsonl_round_trip_and_validation() {
        let (train, _) = synthetic_clusters(SyntheticConfig::default()).unwrap();
        let mut buf = Vec::new();
        train.write_jsonl(&mut buf).unwrap();
        let back = ToyDataset::from_reader(&buf[..]).unwrap();
        assert_eq!(back, train);

        let r = ToyRecord {
            image_id: "x".into(),
            features: vec![vec![1.0, 2.0]],
            descriptions: vec![],
            shared_description: "s".into(),
        };
        let mut bad = r.clone();
        bad.features.push(vec![1.0]);
        assert!(ToyDataset::new(vec![r.clone(), r.clone()]).is_err());
        assert!(ToyDataset::new(vec![bad]).is_err());
        assert!(ToyDataset::from_reader(&b"{oops\n"[..]).is_err());
    }
}
