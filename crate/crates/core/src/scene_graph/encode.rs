use super::{RelationType, SceneGraph, Vocabulary};
use crate::error::{Error, Result};
use crate::math::Tensor2;

/// Numeric form of a scene graph: one-hot node features and one directed
/// edge list per relation type.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTensors {
    pub one_hot: Tensor2,
    /// `adjacency[r]` holds `(src, dst)` pairs of relation index `r`.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl RelationTensors {
    pub fn node_count(&self) -> usize {
        self.one_hot.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

pub fn to_relation_tensors(g: &SceneGraph, vocab: &Vocabulary) -> Result<RelationTensors> {
    let mut one_hot = Tensor2::zeros(g.node_count(), vocab.len());
    for (i, node) in g.nodes.iter().enumerate() {
        let c = vocab
            .index_of(&node.class)
            .ok_or_else(|| Error::Schema(format!("class {:?} missing from vocabulary", node.class)))?;
        one_hot.set(i, c, 1.0);
    }
    let mut adjacency = vec![Vec::new(); RelationType::COUNT];
    for e in &g.edges {
        if e.src >= g.node_count() || e.dst >= g.node_count() {
            return Err(Error::Schema(format!("edge {}->{} references a missing node", e.src, e.dst)));
        }
        adjacency[e.relation.index()].push((e.src, e.dst));
    }
    Ok(RelationTensors { one_hot, adjacency })
}
