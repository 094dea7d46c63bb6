use std::collections::BTreeSet;
use std::sync::Arc;

use crate::dataset::{Clip, Dataset};
use crate::error::{Error, Result};
use crate::math::{RowMap, Tensor2};
use crate::scene_graph::{extract_scene_graph, to_relation_tensors, ExtractionConfig, RelationTensors};

/// Message-passing operators of one relation type, restricted to the nodes
/// that receive at least one message.
#[derive(Clone, Debug)]
pub struct RelationBlock {
    pub relation: usize,
    /// Receiving nodes, ascending.
    pub targets: Vec<usize>,
    /// `|targets| × N`: row t is the mean of the in-neighbors of `targets[t]`.
    pub gather_mean: Arc<RowMap>,
    /// `N × |targets|`: places each aggregated row back at its node.
    pub scatter: Arc<RowMap>,
}

/// A scene graph prepared for the network. Built once per frame and reused
/// across epochs.
#[derive(Clone, Debug)]
pub struct EncodedGraph {
    pub one_hot: Tensor2,
    /// Only relations with at least one edge, by ascending relation index.
    pub relations: Vec<RelationBlock>,
    /// Mean over distinct in-neighbors under any relation (pooling scores).
    pub union_mean: Arc<RowMap>,
    /// `(src, dst, relation)` triples.
    pub edges: Vec<(usize, usize, usize)>,
}

impl EncodedGraph {
    pub fn new(t: &RelationTensors) -> Result<Self> {
        let n = t.node_count();
        let mut relations = Vec::new();
        let mut edges = Vec::new();
        let mut union: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (r, list) in t.adjacency.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let mut incoming: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
            for &(src, dst) in list {
                if src >= n || dst >= n {
                    return Err(Error::Schema(format!("edge {src}->{dst} outside a {n}-node graph")));
                }
                incoming[dst].insert(src);
                union[dst].insert(src);
                edges.push((src, dst, r));
            }
            let targets: Vec<usize> = (0..n).filter(|&v| !incoming[v].is_empty()).collect();
            let mut entries = Vec::new();
            for (row, &v) in targets.iter().enumerate() {
                let w = 1.0 / incoming[v].len() as f64;
                entries.extend(incoming[v].iter().map(|&u| (row, u, w)));
            }
            relations.push(RelationBlock {
                relation: r,
                gather_mean: Arc::new(RowMap::new(targets.len(), n, entries)?),
                scatter: Arc::new(RowMap::scatter(&targets, n)?),
                targets,
            });
        }
        let mut entries = Vec::new();
        for (v, srcs) in union.iter().enumerate() {
            let w = 1.0 / srcs.len().max(1) as f64;
            entries.extend(srcs.iter().map(|&u| (v, u, w)));
        }
        Ok(Self {
            one_hot: t.one_hot.clone(),
            relations,
            union_mean: Arc::new(RowMap::new(n, n, entries)?),
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.one_hot.rows()
    }

    pub fn class_count(&self) -> usize {
        self.one_hot.cols()
    }
}

#[derive(Clone, Debug)]
pub struct EncodedClip {
    pub id: String,
    pub label: u8,
    pub frames: Vec<EncodedGraph>,
}

impl EncodedClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn encode_clip(clip: &Clip, config: &ExtractionConfig) -> Result<EncodedClip> {
    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let g = extract_scene_graph(f, config)?;
            EncodedGraph::new(&to_relation_tensors(&g, &config.vocabulary)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedClip {
        id: clip.id.clone(),
        label: clip.label,
        frames,
    })
}

pub fn encode_dataset(dataset: &Dataset, config: &ExtractionConfig) -> Result<Vec<EncodedClip>> {
    config.validate()?;
    dataset.clips.iter().map(|c| encode_clip(c, config)).collect()
}

