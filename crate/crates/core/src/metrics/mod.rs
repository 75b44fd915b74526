//! Descriptiveness and diversity metrics for generated inference corpora.
//!
//! Tokens are the whitespace split of normalised text, and every n-gram
//! statistic is pooled over the whole corpus. METEOR and SPICE are not
//! provided.

mod diversity;
mod entropy;
mod overlap;
mod retrieval;
mod tree;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Relation, VisualCommonsenseGraph};
use crate::text::normalize;

pub use diversity::{dist_n, mean_length, novel_pct, unique_pct};
pub use entropy::{bin_center, entropy_histogram, histogram, word_entropy, UnigramModel};
pub use overlap::{bleu_n, cider, cider_per_item};
pub use retrieval::{recall_at_k, recall_at_ks, retrieval_rank, truth_by_id};
pub use tree::{parse_bracketed, right_branching_fallback, yngve_depths, yngve_sentence, ParseTree};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInference {
    pub image_id: String,
    pub relation: Relation,
    pub text: String,
    pub normalized: String,
    pub tokens: Vec<String>,
    pub parse: Option<ParseTree>,
}

impl GeneratedInference {
    /// Fails on text with no tokens, or a parse whose leaves do not spell the text.
    pub fn new(image_id: impl Into<String>, relation: Relation, text: impl Into<String>, parse: Option<ParseTree>) -> Result<Self> {
        let text = text.into();
        let normalized = normalize(&text);
        let tokens: Vec<String> = normalized.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::Invalid(format!("inference {text:?} has no tokens")));
        }
        if let Some(tree) = &parse {
            let leaves = normalize(&tree.leaves().join(" "));
            if leaves != normalized {
                return Err(Error::Invalid(format!("parse leaves {leaves:?} do not match text {normalized:?}")));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            relation,
            text,
            normalized,
            tokens,
            parse,
        })
    }
}

/// Builds a corpus of bare texts (image ids `0..n`, relation `intent`).
pub fn corpus_from_texts<S: AsRef<str>>(texts: &[S]) -> Vec<GeneratedInference> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| GeneratedInference::new(i.to_string(), Relation::Intent, t.as_ref(), None).expect("non-empty text"))
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct CorpusRecord {
    image_id: String,
    relation: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parse: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ReferenceRecord {
    image_id: String,
    relation: String,
    references: Vec<String>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, mut f: impl FnMut(usize, T) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: i + 1,
            message: format!("malformed record: {e}"),
        })?;
        f(i + 1, rec).map_err(|e| match e {
            Error::Line { .. } => e,
            other => Error::Line {
                line: i + 1,
                message: other.to_string(),
            },
        })?;
    }
    Ok(())
}

/// Reads generated-corpus JSONL: `{"image_id", "relation", "text", "parse"?}`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<GeneratedInference>> {
    let mut out = Vec::new();
    read_jsonl(path.as_ref(), |_, rec: CorpusRecord| {
        let relation: Relation = rec.relation.parse()?;
        let parse = rec.parse.as_deref().map(parse_bracketed).transpose()?;
        out.push(GeneratedInference::new(rec.image_id, relation, rec.text, parse)?);
        Ok(())
    })?;
    Ok(out)
}

/// Tokenised reference sentences keyed by `(image_id, relation)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct References {
    sets: HashMap<(String, Relation), Vec<Vec<String>>>,
}

impl References {
    pub fn insert(&mut self, image_id: &str, relation: Relation, text: &str) {
        let tokens: Vec<String> = normalize(text).split_whitespace().map(str::to_string).collect();
        self.sets.entry((image_id.to_string(), relation)).or_default().push(tokens);
    }

    /// Every description of an image under a relation becomes a reference.
    pub fn from_graph(g: &VisualCommonsenseGraph) -> Self {
        let mut refs = Self::default();
        for e in g.edges() {
            refs.insert(&g.image(e.image).image_id, e.relation, &g.description(e.description).raw_text);
        }
        refs
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut refs = Self::default();
        read_jsonl(path.as_ref(), |_, rec: ReferenceRecord| {
            let relation: Relation = rec.relation.parse()?;
            for r in &rec.references {
                refs.insert(&rec.image_id, relation, r);
            }
            Ok(())
        })?;
        Ok(refs)
    }

    pub fn get(&self, image_id: &str, relation: Relation) -> Option<&[Vec<String>]> {
        self.sets.get(&(image_id.to_string(), relation)).map(Vec::as_slice)
    }

    /// Reference sets aligned with the corpus.
    pub fn align(&self, corpus: &[GeneratedInference]) -> Result<Vec<&[Vec<String>]>> {
        corpus
            .iter()
            .map(|g| {
                self.get(&g.image_id, g.relation)
                    .filter(|r| !r.is_empty())
                    .ok_or_else(|| Error::Invalid(format!("no references for image {:?} ({})", g.image_id, g.relation)))
            })
            .collect()
    }
}

fn hyps(corpus: &[GeneratedInference]) -> Vec<&[String]> {
    corpus.iter().map(|g| g.tokens.as_slice()).collect()
}

/// Corpus BLEU of the generated tokens against aligned references.
pub fn corpus_bleu(corpus: &[GeneratedInference], refs: &References, max_n: usize) -> Result<f64> {
    bleu_n(&hyps(corpus), &refs.align(corpus)?, max_n)
}

pub fn corpus_cider(corpus: &[GeneratedInference], refs: &References) -> Result<f64> {
    cider(&hyps(corpus), &refs.align(corpus)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YngveMode {
    /// Every inference carried a parse.
    Parsed,
    /// No parses; right-branching fallback trees throughout.
    Fallback,
    Mixed,
}

/// Mean Yngve score over the corpus and which trees produced it.
pub fn yngve_mean(corpus: &[GeneratedInference]) -> Result<(f64, YngveMode)> {
    if corpus.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    let mut parsed = 0;
    let mut sum = 0.0;
    for g in corpus {
        sum += match &g.parse {
            Some(t) => {
                parsed += 1;
                yngve_sentence(t)
            }
            None => yngve_sentence(&right_branching_fallback(&g.tokens)),
        };
    }
    let mode = match parsed {
        0 => YngveMode::Fallback,
        p if p == corpus.len() => YngveMode::Parsed,
        _ => YngveMode::Mixed,
    };
    Ok((sum / corpus.len() as f64, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub length_mean: f64,
    pub yngve_mean: f64,
    pub yngve_mode: YngveMode,
    pub dist2: usize,
    pub dist3: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_mean: Option<f64>,
    pub unique_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub novel_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cider: Option<f64>,
}

/// Optional inputs; metrics whose inputs are missing are left out of the report.
#[derive(Debug, Default, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub unigram: Option<&'a UnigramModel>,
    pub train_texts: Option<&'a HashSet<&'a str>>,
    pub references: Option<&'a References>,
    pub recall_at: Option<&'a BTreeMap<String, f64>>,
}

pub fn evaluate(corpus: &[GeneratedInference], inputs: EvalInputs<'_>) -> Result<MetricsReport> {
    let (yngve, mode) = yngve_mean(corpus)?;
    let entropy_mean = inputs
        .unigram
        .map(|m| -> Result<f64> {
            let mut sum = 0.0;
            for g in corpus {
                sum += word_entropy(g, m)?;
            }
            Ok(sum / corpus.len() as f64)
        })
        .transpose()?;
    Ok(MetricsReport {
        count: corpus.len(),
        length_mean: mean_length(corpus)?,
        yngve_mean: yngve,
        yngve_mode: mode,
        dist2: dist_n(corpus, 2),
        dist3: dist_n(corpus, 3),
        entropy_mean,
        unique_pct: unique_pct(corpus)?,
        novel_pct: inputs.train_texts.map(|t| novel_pct(corpus, t)).transpose()?,
        recall_at: inputs.recall_at.cloned(),
        bleu2: inputs.references.map(|r| corpus_bleu(corpus, r, 2)).transpose()?,
        cider: inputs.references.map(|r| corpus_cider(corpus, r)).transpose()?,
    })
}
