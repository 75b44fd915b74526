//! Visual commonsense graphs: images linked to commonsense descriptions by
//! `before`/`after`/`intent` edges.
//!
//! Description identity is keyed on normalised text (see [`crate::text`]).
//! Description ids are the dense rank of that text in lexicographic order,
//! and images are stored sorted by id, so a graph's in-memory layout does not
//! depend on the order records were read in.

mod embedding;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize;

pub use embedding::{EmbeddingMatrix, EMBEDDING_MAGIC};
pub use stats::{graph_stats, DescriptionCount, StatsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Before,
    After,
    Intent,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Before, Relation::After, Relation::Intent];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Before => "before",
            Relation::After => "after",
            Relation::Intent => "intent",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "before" => Ok(Relation::Before),
            "after" => Ok(Relation::After),
            "intent" => Ok(Relation::Intent),
            other => Err(Error::UnknownRelation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub event: String,
    pub place: String,
    pub embedding_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommonsenseDescription {
    pub id: usize,
    /// First raw spelling seen for this description.
    pub raw_text: String,
    pub normalized_text: String,
}

/// An edge between an image (by index into [`VisualCommonsenseGraph::images`])
/// and a description id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InferenceEdge {
    pub image: usize,
    pub relation: Relation,
    pub description: usize,
}

/// One line of the graph JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub image_id: String,
    pub event: String,
    pub place: String,
    pub relation: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VisualCommonsenseGraph {
    images: Vec<ImageRecord>,
    image_lookup: HashMap<String, usize>,
    descriptions: Vec<CommonsenseDescription>,
    description_lookup: HashMap<String, usize>,
    edges: Vec<InferenceEdge>,
    by_description: Vec<Vec<usize>>,
    by_image: Vec<Vec<usize>>,
}

impl VisualCommonsenseGraph {
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn descriptions(&self) -> &[CommonsenseDescription] {
        &self.descriptions
    }

    /// Edges in canonical `(image_id, relation, description_id)` order.
    pub fn edges(&self) -> &[InferenceEdge] {
        &self.edges
    }

    pub fn image(&self, idx: usize) -> &ImageRecord {
        &self.images[idx]
    }

    pub fn description(&self, id: usize) -> &CommonsenseDescription {
        &self.descriptions[id]
    }

    pub fn image_index(&self, image_id: &str) -> Option<usize> {
        self.image_lookup.get(image_id).copied()
    }

    /// Looks a description up by any raw spelling.
    pub fn description_id(&self, text: &str) -> Option<usize> {
        self.description_lookup.get(&normalize(text)).copied()
    }

    /// Distinct images related to a description, ascending by image id.
    pub fn images_of(&self, description: usize) -> &[usize] {
        &self.by_description[description]
    }

    /// Indices into [`Self::edges`] of every edge touching an image.
    pub fn edges_of_image(&self, image: usize) -> &[usize] {
        &self.by_image[image]
    }

    /// Distinct descriptions attached to an image, ascending.
    pub fn descriptions_of_image(&self, image: usize) -> BTreeSet<usize> {
        self.by_image[image]
            .iter()
            .map(|&e| self.edges[e].description)
            .collect()
    }

    pub fn normalized_texts(&self) -> HashSet<&str> {
        self.descriptions
            .iter()
            .map(|d| d.normalized_text.as_str())
            .collect()
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_descriptions(&self) -> usize {
        self.descriptions.len()
    }

    /// Builds a new graph keeping the images and edges selected by the
    /// predicates. Descriptions left without edges disappear and ids are
    /// re-densified.
    pub fn restrict(
        &self,
        keep_image: impl Fn(usize) -> bool,
        keep_edge: impl Fn(&InferenceEdge) -> bool,
    ) -> VisualCommonsenseGraph {
        let mut builder = GraphBuilder::new();
        for (idx, img) in self.images.iter().enumerate() {
            if keep_image(idx) {
                builder.add_image(img.clone());
            }
        }
        for edge in &self.edges {
            if keep_image(edge.image) && keep_edge(edge) {
                let img = &self.images[edge.image];
                let desc = &self.descriptions[edge.description];
                builder
                    .add_edge(&img.image_id, edge.relation, &desc.raw_text)
                    .expect("edges of a valid graph re-insert cleanly");
            }
        }
        builder.build()
    }

    /// Checks the index invariants by rebuilding them from the raw edges.
    pub fn check_invariants(&self) -> Result<()> {
        let mut by_desc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.descriptions.len()];
        let mut by_image: Vec<Vec<usize>> = vec![Vec::new(); self.images.len()];
        for (i, e) in self.edges.iter().enumerate() {
            by_desc[e.description].insert(e.image);
            by_image[e.image].push(i);
        }
        for (j, set) in by_desc.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Invalid(format!("description {j} has no images")));
            }
            if set.iter().copied().collect::<Vec<_>>() != self.by_description[j] {
                return Err(Error::Invalid(format!("description index {j} stale")));
            }
        }
        if by_image != self.by_image {
            return Err(Error::Invalid("image index stale".into()));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("edges not in canonical order".into()));
        }
        Ok(())
    }

    /// Records in canonical order.
    pub fn records(&self) -> impl Iterator<Item = GraphRecord> + '_ {
        self.edges.iter().map(|e| {
            let img = &self.images[e.image];
            GraphRecord {
                image_id: img.image_id.clone(),
                event: img.event.clone(),
                place: img.place.clone(),
                relation: e.relation.as_str().to_string(),
                description: self.descriptions[e.description].raw_text.clone(),
            }
        })
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_jsonl(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Accumulates images and edges, then freezes them into an indexed graph.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    images: BTreeMap<String, ImageRecord>,
    raw_texts: BTreeMap<String, String>,
    edges: BTreeSet<(String, Relation, String)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an image; the first record for an id wins. Returns whether it was new.
    pub fn add_image(&mut self, record: ImageRecord) -> bool {
        if self.images.contains_key(&record.image_id) {
            return false;
        }
        self.images.insert(record.image_id.clone(), record);
        true
    }

    /// Adds an edge to an already-added image. Duplicates collapse.
    pub fn add_edge(&mut self, image_id: &str, relation: Relation, description: &str) -> Result<()> {
        if !self.images.contains_key(image_id) {
            return Err(Error::Invalid(format!("edge references unknown image {image_id:?}")));
        }
        let norm = normalize(description);
        if norm.is_empty() {
            return Err(Error::Invalid(format!(
                "description {description:?} is empty after normalisation"
            )));
        }
        self.raw_texts
            .entry(norm.clone())
            .or_insert_with(|| description.to_string());
        self.edges.insert((image_id.to_string(), relation, norm));
        Ok(())
    }

    pub fn build(self) -> VisualCommonsenseGraph {
        let images: Vec<ImageRecord> = self.images.into_values().collect();
        let image_lookup: HashMap<String, usize> = images
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.clone(), i))
            .collect();

        let used: BTreeSet<&String> = self.edges.iter().map(|(_, _, d)| d).collect();
        let descriptions: Vec<CommonsenseDescription> = used
            .into_iter()
            .enumerate()
            .map(|(id, norm)| CommonsenseDescription {
                id,
                raw_text: self.raw_texts[norm].clone(),
                normalized_text: norm.clone(),
            })
            .collect();
        let description_lookup: HashMap<String, usize> = descriptions
            .iter()
            .map(|d| (d.normalized_text.clone(), d.id))
            .collect();

        // BTreeSet order over (image_id, relation, text) is already canonical
        // because both index spaces are assigned in sorted order.
        let edges: Vec<InferenceEdge> = self
            .edges
            .iter()
            .map(|(img, rel, d)| InferenceEdge {
                image: image_lookup[img],
                relation: *rel,
                description: description_lookup[d],
            })
            .collect();

        let mut by_description: Vec<Vec<usize>> = vec![Vec::new(); descriptions.len()];
        let mut by_image: Vec<Vec<usize>> = vec![Vec::new(); images.len()];
        for (i, e) in edges.iter().enumerate() {
            by_image[e.image].push(i);
            // Edges arrive grouped by image ascending, so each list stays sorted.
            let list = &mut by_description[e.description];
            if list.last() != Some(&e.image) {
                list.push(e.image);
            }
        }

        VisualCommonsenseGraph {
            images,
            image_lookup,
            descriptions,
            description_lookup,
            edges,
            by_description,
            by_image,
        }
    }
}

fn for_each_record(reader: impl BufRead, mut f: impl FnMut(GraphRecord, Relation) -> Result<()>) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let at = |message: String| Error::Line {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| at(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| at(format!("malformed record: {e}")))?;
        if rec.image_id.is_empty() {
            return Err(at("empty image_id".into()));
        }
        let relation: Relation = rec.relation.parse().map_err(|e: Error| at(e.to_string()))?;
        f(rec, relation).map_err(|e| at(e.to_string()))?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads graph JSONL from a reader; `embeddings` must cover every image.
pub fn ingest_reader(reader: impl BufRead, embeddings: &EmbeddingMatrix) -> Result<VisualCommonsenseGraph> {
    let mut builder = GraphBuilder::new();
    for_each_record(reader, |rec, relation| {
        let row = embeddings
            .row_of(&rec.image_id)
            .ok_or_else(|| Error::MissingEmbedding(rec.image_id.clone()))?;
        builder.add_image(ImageRecord {
            image_id: rec.image_id.clone(),
            event: rec.event,
            place: rec.place,
            embedding_row: row,
        });
        builder.add_edge(&rec.image_id, relation, &rec.description)
    })?;
    Ok(builder.build())
}

pub fn ingest_jsonl(path: impl AsRef<Path>, embeddings: &EmbeddingMatrix) -> Result<VisualCommonsenseGraph> {
    ingest_reader(open(path.as_ref())?, embeddings)
}

/// Normalised description text of every distinct edge, in canonical edge
/// order, without needing embeddings. Enough for novelty checks and unigram
/// statistics over a training split.
pub fn read_edge_texts(reader: impl BufRead) -> Result<Vec<String>> {
    let mut edges = BTreeSet::new();
    for_each_record(reader, |rec, relation| {
        let text = normalize(&rec.description);
        if text.is_empty() {
            return Err(Error::Invalid("empty description".into()));
        }
        edges.insert((rec.image_id, relation, text));
        Ok(())
    })?;
    Ok(edges.into_iter().map(|(_, _, t)| t).collect())
}

pub fn read_edge_texts_jsonl(path: impl AsRef<Path>) -> Result<Vec<String>> {
    read_edge_texts(open(path.as_ref())?)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::load(path)
}
