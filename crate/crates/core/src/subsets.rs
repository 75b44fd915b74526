//! Unique and novel evaluation subsets of a validation graph.
//!
//! Both subsets first select edges by description, then drop images left
//! with fewer than `min_descriptions_per_image` distinct descriptions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InferenceEdge, VisualCommonsenseGraph};

pub const DEFAULT_MIN_DESCRIPTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetKind {
    Unique,
    Novel,
}

impl fmt::Display for SubsetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetKind::Unique => "unique",
            SubsetKind::Novel => "novel",
        })
    }
}

impl FromStr for SubsetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unique" => Ok(SubsetKind::Unique),
            "novel" => Ok(SubsetKind::Novel),
            other => Err(Error::Invalid(format!("unknown subset kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub kind: SubsetKind,
    pub min_descriptions_per_image: usize,
}

impl SubsetSpec {
    pub fn new(kind: SubsetKind, min_descriptions_per_image: usize) -> Result<Self> {
        if min_descriptions_per_image == 0 {
            return Err(Error::Invalid("min_descriptions_per_image must be at least 1".into()));
        }
        Ok(Self {
            kind,
            min_descriptions_per_image,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub kind: SubsetKind,
    pub images_kept: usize,
    pub edges_kept: usize,
    /// Images that kept at least one edge after the description filter but
    /// fell below the per-image minimum.
    pub images_dropped_by_threshold: usize,
}

fn select(
    val: &VisualCommonsenseGraph,
    spec: SubsetSpec,
    keep_edge: impl Fn(&InferenceEdge) -> bool,
) -> (VisualCommonsenseGraph, SubsetReport) {
    let mut distinct: Vec<HashSet<usize>> = vec![HashSet::new(); val.num_images()];
    for e in val.edges().iter().filter(|e| keep_edge(e)) {
        distinct[e.image].insert(e.description);
    }
    let keep_image: Vec<bool> = distinct
        .iter()
        .map(|d| d.len() >= spec.min_descriptions_per_image)
        .collect();
    let images_dropped_by_threshold = distinct
        .iter()
        .zip(&keep_image)
        .filter(|(d, &keep)| !d.is_empty() && !keep)
        .count();

    let out = val.restrict(|i| keep_image[i], &keep_edge);
    let report = SubsetReport {
        kind: spec.kind,
        images_kept: out.num_images(),
        edges_kept: out.num_edges(),
        images_dropped_by_threshold,
    };
    (out, report)
}

/// Edges whose description occurs on exactly one edge of `val`.
pub fn build_unique_subset(
    val: &VisualCommonsenseGraph,
    spec: SubsetSpec,
) -> (VisualCommonsenseGraph, SubsetReport) {
    let mut freq = vec![0usize; val.num_descriptions()];
    for e in val.edges() {
        freq[e.description] += 1;
    }
    select(val, spec, |e| freq[e.description] == 1)
}

/// Edges whose normalised description text never occurs in `train`.
pub fn build_novel_subset(
    val: &VisualCommonsenseGraph,
    train: &VisualCommonsenseGraph,
    spec: SubsetSpec,
) -> (VisualCommonsenseGraph, SubsetReport) {
    build_novel_subset_from_texts(val, &train.normalized_texts(), spec)
}

/// As [`build_novel_subset`], given the training split's normalised texts.
pub fn build_novel_subset_from_texts(
    val: &VisualCommonsenseGraph,
    seen: &HashSet<&str>,
    spec: SubsetSpec,
) -> (VisualCommonsenseGraph, SubsetReport) {
    let novel: Vec<bool> = val
        .descriptions()
        .iter()
        .map(|d| !seen.contains(d.normalized_text.as_str()))
        .collect();
    select(val, spec, |e| novel[e.description])
}
