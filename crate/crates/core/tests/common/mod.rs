//! Random fixtures and brute-force reference implementations shared by the
//! integration tests. The references use plain loops over raw records and
//! never call into the library's own helpers.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vcg_core::graph::{ingest_reader, EmbeddingMatrix, Relation, VisualCommonsenseGraph};

/// An edge as `(image_id, relation, normalised text)`.
pub type RawEdge = (String, &'static str, String);

#[derive(Debug, Clone)]
pub struct RawGraph {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f32>>,
    pub edges: Vec<RawEdge>,
}

impl RawGraph {
    pub fn embeddings(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(self.ids.clone(), &self.rows).unwrap()
    }

    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for (id, rel, text) in &self.edges {
            let rec = serde_json::json!({
                "image_id": id, "event": "", "place": "", "relation": rel, "description": text,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    pub fn build(&self) -> (VisualCommonsenseGraph, EmbeddingMatrix) {
        let emb = self.embeddings();
        let g = ingest_reader(self.jsonl().as_bytes(), &emb).unwrap();
        (g, emb)
    }

    pub fn edge_set(&self) -> BTreeSet<RawEdge> {
        self.edges.iter().cloned().collect()
    }
}

pub fn graph_edge_set(g: &VisualCommonsenseGraph) -> BTreeSet<RawEdge> {
    g.edges()
        .iter()
        .map(|e| {
            (
                g.image(e.image).image_id.clone(),
                e.relation.as_str(),
                g.description(e.description).normalized_text.clone(),
            )
        })
        .collect()
}

fn random_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let row: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        if row.iter().any(|&x| x.abs() > 1e-3) {
            return row;
        }
    }
}

/// Up to 20 images with dim-4 embeddings (some rows duplicated) and up to 10
/// descriptions, each attached to a random subset of images under random
/// relations.
pub fn random_graph(rng: &mut ChaCha8Rng) -> RawGraph {
    let n_img = rng.gen_range(1..=20);
    let n_desc = rng.gen_range(1..=10);
    let ids: Vec<String> = (0..n_img).map(|i| format!("img{i:02}")).collect();
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(n_img);
    for i in 0..n_img {
        if i > 0 && rng.gen_bool(0.1) {
            let j = rng.gen_range(0..i);
            rows.push(rows[j].clone());
        } else {
            rows.push(random_row(rng, 4));
        }
    }
    let mut edges = BTreeSet::new();
    for d in 0..n_desc {
        let text = format!("desc {d}");
        let density = rng.gen_range(0.05..0.9);
        for id in &ids {
            if rng.gen_bool(density) {
                let rel = Relation::ALL[rng.gen_range(0..3)].as_str();
                edges.insert((id.clone(), rel, text.clone()));
                if rng.gen_bool(0.15) {
                    let other = Relation::ALL[rng.gen_range(0..3)].as_str();
                    edges.insert((id.clone(), other, text.clone()));
                }
            }
        }
    }
    if edges.is_empty() {
        edges.insert((ids[0].clone(), "intent", "desc 0".to_string()));
    }
    let mut edges: Vec<RawEdge> = edges.into_iter().collect();
    edges.shuffle(rng);
    RawGraph { ids, rows, edges }
}

fn cos32(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..a.len() {
        let (x, y) = (a[k] as f64, b[k] as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Clone)]
pub struct OracleDecision {
    pub text: String,
    pub s: f64,
    pub p_f: f64,
    pub removed: Vec<String>,
}

/// Recomputes the filter with double loops over image pairs.
pub fn oracle_filter(raw: &RawGraph, t: f64) -> (BTreeSet<RawEdge>, Vec<OracleDecision>) {
    let texts: BTreeSet<&String> = raw.edges.iter().map(|e| &e.2).collect();
    let row_of = |id: &str| raw.ids.iter().position(|x| x == id).unwrap();
    let mut decisions = Vec::new();
    let mut gone: BTreeSet<(String, String)> = BTreeSet::new();
    for text in texts {
        let imgs: Vec<&String> = raw
            .edges
            .iter()
            .filter(|e| &e.2 == text)
            .map(|e| &e.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = imgs.len();
        let rows: Vec<&Vec<f32>> = imgs.iter().map(|id| &raw.rows[row_of(id)]).collect();
        let mut total = 0.0;
        for a in &rows {
            for b in &rows {
                total += cos32(a, b);
            }
        }
        let s = total / (n * n) as f64;
        let radicand = t * s / n as f64;
        let p_f = if radicand <= 0.0 {
            1.0
        } else {
            (1.0 - radicand.sqrt()).clamp(0.0, 1.0)
        };
        let k = (p_f * n as f64).floor() as usize;
        let mut avg: Vec<(f64, &String)> = Vec::new();
        for i in 0..n {
            let a = if n == 1 {
                1.0
            } else {
                let mut sims: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| cos32(rows[i], rows[j])).collect();
                sims.sort_by(|x, y| x.partial_cmp(y).unwrap());
                sims.iter().sum::<f64>() / (n - 1) as f64
            };
            avg.push((a, imgs[i]));
        }
        avg.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(y.1)));
        let removed: Vec<String> = avg[..k].iter().map(|(_, id)| (*id).clone()).collect();
        for id in &removed {
            gone.insert((id.clone(), text.clone()));
        }
        decisions.push(OracleDecision {
            text: text.clone(),
            s,
            p_f,
            removed,
        });
    }
    let kept = raw
        .edges
        .iter()
        .filter(|e| !gone.contains(&(e.0.clone(), e.2.clone())))
        .cloned()
        .collect();
    (kept, decisions)
}

/// `|a - b| <= tol * max(|a|, |b|, 1e-12)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

/// A corpus over the words `w0..w{vocab-1}`, with some sentences repeated.
pub fn random_sentences(rng: &mut ChaCha8Rng, count: usize, vocab: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(count);
    for _ in 0..count {
        if !out.is_empty() && rng.gen_bool(0.2) {
            let j = rng.gen_range(0..out.len());
            out.push(out[j].clone());
            continue;
        }
        let len = rng.gen_range(1..=8);
        let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
        out.push(words.join(" "));
    }
    out
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn oracle_dist_n(sentences: &[Vec<String>], n: usize) -> usize {
    let mut all: Vec<Vec<String>> = Vec::new();
    for s in sentences {
        if s.len() >= n {
            for i in 0..=s.len() - n {
                all.push(s[i..i + n].to_vec());
            }
        }
    }
    all.sort();
    all.dedup();
    all.len()
}

pub fn oracle_unique_pct(texts: &[String]) -> f64 {
    let mut once = 0;
    for a in texts {
        if texts.iter().filter(|b| *b == a).count() == 1 {
            once += 1;
        }
    }
    100.0 * once as f64 / texts.len() as f64
}

pub fn oracle_novel_pct(texts: &[String], train: &[String]) -> f64 {
    let novel = texts.iter().filter(|t| !train.contains(t)).count();
    100.0 * novel as f64 / texts.len() as f64
}

pub fn oracle_word_entropy(sentence: &[String], train: &[Vec<String>]) -> f64 {
    let all: Vec<&String> = train.iter().flatten().collect();
    let mut distinct = all.clone();
    distinct.sort();
    distinct.dedup();
    let denom = (all.len() + distinct.len() + 1) as f64;
    let mut sum = 0.0;
    for w in sentence {
        let c = all.iter().filter(|x| **x == w).count();
        sum -= ((c + 1) as f64 / denom).log2();
    }
    sum / sentence.len() as f64
}

/// Percentage of texts whose true image sorts within the first `k` by
/// descending cosine, ties to the lower index.
pub fn oracle_recall(texts: &[Vec<f32>], images: &[Vec<f32>], truth: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for (t, &want) in texts.iter().zip(truth) {
        let mut order: Vec<(f64, usize)> = images.iter().enumerate().map(|(j, im)| (cos32(t, im), j)).collect();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let pos = order.iter().position(|&(_, j)| j == want).unwrap();
        if pos < k {
            hits += 1;
        }
    }
    100.0 * hits as f64 / texts.len() as f64
}

fn ngrams(s: &[String], n: usize) -> Vec<Vec<String>> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn count_of(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Corpus BLEU-2 with clipped counts and the closest reference length
/// (shorter on ties).
pub fn oracle_bleu2(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> f64 {
    let mut matched = [0usize; 2];
    let mut total = [0usize; 2];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rs) in hyps.iter().zip(refs) {
        c += h.len();
        let mut best = rs[0].len();
        for x in rs {
            let (d, bd) = (x.len().abs_diff(h.len()), best.abs_diff(h.len()));
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best;
        for n in 1..=2 {
            let hg = ngrams(h, n);
            let mut distinct = hg.clone();
            distinct.sort();
            distinct.dedup();
            for g in &distinct {
                let max_ref = rs.iter().map(|x| count_of(&ngrams(x, n), g)).max().unwrap();
                matched[n - 1] += count_of(&hg, g).min(max_ref);
            }
            total[n - 1] += hg.len();
        }
    }
    if matched[0] == 0 || matched[1] == 0 || total[1] == 0 {
        return 0.0;
    }
    let p1 = matched[0] as f64 / total[0] as f64;
    let p2 = matched[1] as f64 / total[1] as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (p1 * p2).sqrt()
}

/// CIDEr with document frequencies over reference sets, raw-count tf and a
/// per-order cosine, averaged over orders 1..=4 and references, times 10.
pub fn oracle_cider(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> f64 {
    let n_sets = refs.len() as f64;
    let df = |g: &[String]| -> usize {
        refs.iter()
            .filter(|rs| rs.iter().any(|x| count_of(&ngrams(x, g.len()), g) > 0))
            .count()
    };
    let vector = |s: &[String], n: usize| -> Vec<(Vec<String>, f64)> {
        let all = ngrams(s, n);
        let mut distinct = all.clone();
        distinct.sort();
        distinct.dedup();
        distinct
            .into_iter()
            .map(|g| {
                let w = count_of(&all, &g) as f64 * (n_sets.ln() - (df(&g).max(1) as f64).ln());
                (g, w)
            })
            .collect()
    };
    let cosine = |a: &[(Vec<String>, f64)], b: &[(Vec<String>, f64)]| -> f64 {
        let na: f64 = a.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let mut dot = 0.0;
        for (g, v) in a {
            for (h, w) in b {
                if g == h {
                    dot += v * w;
                }
            }
        }
        dot / (na * nb)
    };
    let mut total = 0.0;
    for (h, rs) in hyps.iter().zip(refs) {
        let mut item = 0.0;
        for x in rs {
            let mut per_n = 0.0;
            for n in 1..=4 {
                per_n += cosine(&vector(h, n), &vector(x, n));
            }
            item += per_n / 4.0;
        }
        total += 10.0 * item / rs.len() as f64;
    }
    total / hyps.len() as f64
}
