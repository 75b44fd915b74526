use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Relation, VisualCommonsenseGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionCount {
    pub description: String,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub images: usize,
    pub edges: usize,
    pub edges_by_relation: BTreeMap<String, usize>,
    pub descriptions: usize,
    pub top_descriptions: Vec<DescriptionCount>,
}

/// Counts plus the `top_k` descriptions with the most related images
/// (ties by description id).
pub fn graph_stats(g: &VisualCommonsenseGraph, top_k: usize) -> StatsReport {
    let mut edges_by_relation: BTreeMap<String, usize> =
        Relation::ALL.iter().map(|r| (r.to_string(), 0)).collect();
    for e in g.edges() {
        *edges_by_relation.get_mut(e.relation.as_str()).unwrap() += 1;
    }
    let mut order: Vec<usize> = (0..g.num_descriptions()).collect();
    order.sort_by_key(|&d| (std::cmp::Reverse(g.images_of(d).len()), d));
    let top_descriptions = order
        .into_iter()
        .take(top_k)
        .map(|d| DescriptionCount {
            description: g.description(d).normalized_text.clone(),
            images: g.images_of(d).len(),
        })
        .collect();
    StatsReport {
        images: g.num_images(),
        edges: g.num_edges(),
        edges_by_relation,
        descriptions: g.num_descriptions(),
        top_descriptions,
    }
}
