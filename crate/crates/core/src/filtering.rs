//! Generic-inference filtering.
//!
//! A description related to many images that are spread out in embedding
//! space is generic. Each description `C` gets a semantic concentration
//! `S(C)`, the mean cosine similarity over all ordered pairs (self-pairs
//! included) of its related images, and a filtering probability
//! `P_f(C) = 1 - sqrt(t * S(C) / |G(C)|)` clamped to `[0, 1]`. The
//! `floor(P_f * |G(C)|)` images with the lowest average similarity to the
//! other related images lose every edge to `C`.
//!
//! Both quantities are computed from the sum of unit vectors: with
//! `m = sum_x u_x`, `S = |m|^2 / n^2` and the average similarity of `x` to
//! the others is `(u_x . m - u_x . u_x) / (n - 1)`. Small descriptions use
//! direct pairwise sums for the ranking instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EmbeddingMatrix, Relation, VisualCommonsenseGraph};

pub const DEFAULT_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationScore {
    pub description: usize,
    pub s_value: f64,
    pub freq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub description: String,
    pub s: f64,
    pub p_f: f64,
    pub remove_count: usize,
    pub removed_images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub image_id: String,
    pub relation: Relation,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub threshold: f64,
    pub edges_before: usize,
    pub edges_after: usize,
    pub decisions: Vec<FilterDecision>,
    #[serde(skip)]
    pub removed_edges: Vec<RemovedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub edges_before: usize,
    pub edges_after: usize,
    pub descriptions_before: usize,
    pub descriptions_after: usize,
}

/// Per-description geometry shared by every threshold.
#[derive(Debug, Clone)]
struct Analysis {
    score: ConcentrationScore,
    /// Image indices ascending by average similarity, ties by image id.
    ranking: Vec<(usize, f64)>,
}

fn unit_vectors(
    desc: usize,
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
) -> Result<Vec<Vec<f64>>> {
    g.images_of(desc)
        .iter()
        .map(|&img| {
            let id = &g.image(img).image_id;
            emb.row_of(id)
                .map(|row| emb.unit_row(row))
                .ok_or_else(|| Error::MissingEmbedding(id.clone()))
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sum_vector(units: &[Vec<f64>]) -> Vec<f64> {
    let mut sum = vec![0.0; units.first().map_or(0, Vec::len)];
    for u in units {
        for (s, v) in sum.iter_mut().zip(u) {
            *s += v;
        }
    }
    sum
}

fn concentration_from_units(units: &[Vec<f64>]) -> f64 {
    let n = units.len();
    if n == 1 {
        return 1.0;
    }
    let m = sum_vector(units);
    (dot(&m, &m) / (n * n) as f64).clamp(-1.0, 1.0)
}

/// Up to this many related images, average similarities are summed pairwise
/// in sorted order, so images with mathematically equal averages tie exactly
/// and fall back to image-id order.
pub const EXACT_RANKING_MAX: usize = 256;

fn pairwise_average(i: usize, units: &[Vec<f64>]) -> f64 {
    let mut sims: Vec<f64> = units
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| dot(&units[i], v))
        .collect();
    sims.sort_by(f64::total_cmp);
    sims.iter().sum::<f64>() / sims.len() as f64
}

fn ranking_from_units(images: &[usize], units: &[Vec<f64>]) -> Vec<(usize, f64)> {
    let n = units.len();
    let mut ranked: Vec<(usize, f64)> = if n == 1 {
        vec![(images[0], 1.0)]
    } else if n <= EXACT_RANKING_MAX {
        images
            .iter()
            .enumerate()
            .map(|(i, &img)| (img, pairwise_average(i, units)))
            .collect()
    } else {
        let m = sum_vector(units);
        images
            .iter()
            .zip(units)
            .map(|(&img, u)| (img, (dot(u, &m) - dot(u, u)) / (n - 1) as f64))
            .collect()
    };
    // Image indices follow image-id order, so comparing indices breaks ties by id.
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked
}

fn analyse(desc: usize, g: &VisualCommonsenseGraph, emb: &EmbeddingMatrix) -> Result<Analysis> {
    let units = unit_vectors(desc, g, emb)?;
    let images = g.images_of(desc);
    Ok(Analysis {
        score: ConcentrationScore {
            description: desc,
            s_value: concentration_from_units(&units),
            freq: images.len(),
        },
        ranking: ranking_from_units(images, &units),
    })
}

fn analyse_all(g: &VisualCommonsenseGraph, emb: &EmbeddingMatrix) -> Result<Vec<Analysis>> {
    (0..g.num_descriptions())
        .into_par_iter()
        .map(|d| analyse(d, g, emb))
        .collect()
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("threshold must be positive, got {t}")))
    }
}

/// Mean cosine similarity over all ordered pairs of the description's images.
pub fn semantic_concentration(
    desc: usize,
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
) -> Result<ConcentrationScore> {
    let units = unit_vectors(desc, g, emb)?;
    Ok(ConcentrationScore {
        description: desc,
        s_value: concentration_from_units(&units),
        freq: units.len(),
    })
}

/// `1 - sqrt(t * s / freq)` clamped to `[0, 1]`; a non-positive radicand maps to 1.
pub fn filtering_probability(score: &ConcentrationScore, t: f64) -> f64 {
    let radicand = t * score.s_value / score.freq as f64;
    if radicand <= 0.0 {
        return 1.0;
    }
    (1.0 - radicand.sqrt()).clamp(0.0, 1.0)
}

pub fn remove_count(p_f: f64, freq: usize) -> usize {
    ((p_f * freq as f64).floor() as usize).min(freq)
}

/// Related images ascending by mean cosine similarity to the other related
/// images (1.0 for a lone image), ties by image id.
pub fn rank_images_by_avg_similarity(
    desc: usize,
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
) -> Result<Vec<(String, f64)>> {
    let units = unit_vectors(desc, g, emb)?;
    Ok(ranking_from_units(g.images_of(desc), &units)
        .into_iter()
        .map(|(img, avg)| (g.image(img).image_id.clone(), avg))
        .collect())
}

fn decide(a: &Analysis, t: f64) -> (f64, usize) {
    let p_f = filtering_probability(&a.score, t);
    (p_f, remove_count(p_f, a.score.freq))
}

/// Removes generic inferences at threshold `t`. Image records are kept even
/// when they lose every edge.
pub fn apply_filter(
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
    t: f64,
) -> Result<(VisualCommonsenseGraph, FilterReport)> {
    check_threshold(t)?;
    let analyses = analyse_all(g, emb)?;

    // removed[d] holds the image indices losing their edges to description d.
    let mut removed: Vec<Vec<usize>> = Vec::with_capacity(analyses.len());
    let mut decisions = Vec::with_capacity(analyses.len());
    for a in &analyses {
        let (p_f, k) = decide(a, t);
        let mut gone: Vec<usize> = a.ranking[..k].iter().map(|&(img, _)| img).collect();
        decisions.push(FilterDecision {
            description: g.description(a.score.description).normalized_text.clone(),
            s: a.score.s_value,
            p_f,
            remove_count: k,
            removed_images: gone.iter().map(|&i| g.image(i).image_id.clone()).collect(),
        });
        gone.sort_unstable();
        removed.push(gone);
    }

    let is_removed = |e: &crate::graph::InferenceEdge| removed[e.description].binary_search(&e.image).is_ok();
    let removed_edges: Vec<RemovedEdge> = g
        .edges()
        .iter()
        .filter(|e| is_removed(e))
        .map(|e| RemovedEdge {
            image_id: g.image(e.image).image_id.clone(),
            relation: e.relation,
            description: g.description(e.description).normalized_text.clone(),
        })
        .collect();
    let filtered = g.restrict(|_| true, |e| !is_removed(e));

    let report = FilterReport {
        threshold: t,
        edges_before: g.num_edges(),
        edges_after: filtered.num_edges(),
        decisions,
        removed_edges,
    };
    debug_assert_eq!(report.edges_after + report.removed_edges.len(), report.edges_before);
    Ok((filtered, report))
}

/// Edge and description counts after filtering at each threshold. The
/// similarity geometry is computed once and shared across thresholds.
pub fn threshold_sweep(
    g: &VisualCommonsenseGraph,
    emb: &EmbeddingMatrix,
    thresholds: &[f64],
) -> Result<Vec<SweepSummary>> {
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let analyses = analyse_all(g, emb)?;

    // Edges between description d and each image, in ranking order.
    let edge_counts: Vec<Vec<usize>> = analyses
        .iter()
        .map(|a| {
            let d = a.score.description;
            a.ranking
                .iter()
                .map(|&(img, _)| {
                    g.edges_of_image(img)
                        .iter()
                        .filter(|&&e| g.edges()[e].description == d)
                        .count()
                })
                .collect()
        })
        .collect();

    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut removed_edges = 0;
            let mut dropped = 0;
            for (a, counts) in analyses.iter().zip(&edge_counts) {
                let (_, k) = decide(a, t);
                removed_edges += counts[..k].iter().sum::<usize>();
                if k == a.score.freq {
                    dropped += 1;
                }
            }
            SweepSummary {
                threshold: t,
                edges_before: g.num_edges(),
                edges_after: g.num_edges() - removed_edges,
                descriptions_before: g.num_descriptions(),
                descriptions_after: g.num_descriptions() - dropped,
            }
        })
        .collect())
}
