use std::sync::Arc;

use super::config::Readout;
use super::graph::EncodedGraph;
use super::params::{HeadIds, LstmIds, PoolIds, SpatialLayerIds};
use crate::error::{Error, Result};
use crate::math::{RowMap, Tape, Tensor2, Var};

/// One relational graph convolution, before the nonlinearity:
/// `Φ_0 h_v + Σ_r mean_{u ∈ N_r(v)} Φ_r h_u`.
pub fn mrgcn_layer(tape: &mut Tape<'_>, x: Var, graph: &EncodedGraph, ids: &SpatialLayerIds, vars: &[Var]) -> Result<Var> {
    let mut terms = Vec::with_capacity(graph.relations.len() + 1);
    terms.push(tape.linear(x, vars[ids.self_loop.index()], None)?);
    for block in &graph.relations {
        let w = ids.relations.get(block.relation).ok_or_else(|| {
            Error::Config(format!(
                "graph uses relation {} but the layer has {} relation transforms",
                block.relation,
                ids.relations.len()
            ))
        })?;
        let gathered = tape.row_map(x, &block.gather_mean)?;
        let msg = tape.linear(gathered, vars[w.index()], None)?;
        terms.push(tape.row_map(msg, &block.scatter)?);
    }
    tape.sum(&terms)
}

/// Edge-blind counterpart of [`mrgcn_layer`]: only the self-loop transform.
pub fn mlp_layer(tape: &mut Tape<'_>, x: Var, ids: &SpatialLayerIds, vars: &[Var]) -> Result<Var> {
    tape.linear(x, vars[ids.self_loop.index()], None)
}

pub fn concat_layers(tape: &mut Tape<'_>, layers: &[Var]) -> Result<Var> {
    tape.concat_cols(layers)
}

/// Number of nodes kept by top-k pooling.
pub fn pooled_count(ratio: f64, nodes: usize) -> usize {
    ((ratio * nodes as f64).ceil() as usize).clamp(1, nodes.max(1))
}

/// Indices of the `k` largest scores, ascending. Equal scores prefer the
/// lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Edges whose endpoints both survive pooling, renumbered into the pooled
/// node order.
pub fn induced_edges(edges: &[(usize, usize, usize)], kept: &[usize]) -> Vec<(usize, usize, usize)> {
    let pos = |v: usize| kept.binary_search(&v).ok();
    edges
        .iter()
        .filter_map(|&(s, d, r)| Some((pos(s)?, pos(d)?, r)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PoolOutput {
    /// Kept rows gated by their scores.
    pub x: Var,
    /// Scores of all nodes, `N × 1`.
    pub alpha: Var,
    pub kept: Vec<usize>,
}

/// Attention pooling. With a neighbor weight the score is a graph
/// convolution over the union of all edges, otherwise a plain projection.
pub fn attention_pool(
    tape: &mut Tape<'_>,
    x: Var,
    graph: &EncodedGraph,
    ids: &PoolIds,
    ratio: f64,
    vars: &[Var],
) -> Result<PoolOutput> {
    let own = tape.linear(x, vars[ids.self_weight.index()], Some(vars[ids.bias.index()]))?;
    let pre = match ids.neighbor_weight {
        Some(w) => {
            let proj = tape.linear(x, vars[w.index()], None)?;
            let agg = tape.row_map(proj, &graph.union_mean)?;
            tape.add(own, agg)?
        }
        None => own,
    };
    let alpha = tape.tanh(pre);
    let n = tape.value(alpha).rows();
    let kept = top_k(tape.value(alpha).data(), pooled_count(ratio, n));
    let pick = Arc::new(RowMap::gather(&kept, n)?);
    let rows = tape.row_map(x, &pick)?;
    let gate = tape.row_map(alpha, &pick)?;
    let x = tape.mul_rows(rows, gate)?;
    Ok(PoolOutput { x, alpha, kept })
}

pub fn readout(tape: &mut Tape<'_>, x: Var, kind: Readout) -> Result<Var> {
    let n = tape.value(x).rows();
    if n == 0 {
        return Err(Error::Contract("readout over an empty graph".into()));
    }
    match kind {
        Readout::Add => tape.row_map(x, &Arc::new(RowMap::reduce(n, 1.0))),
        Readout::Mean => tape.row_map(x, &Arc::new(RowMap::reduce(n, 1.0 / n as f64))),
        Readout::Max => tape.max_rows(x),
    }
}

/// Hidden output and cell state of an LSTM.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// One LSTM cell update. `None` is the zero state of a fresh sequence.
pub fn lstm_step(tape: &mut Tape<'_>, x: Var, state: Option<LstmState>, ids: &LstmIds, vars: &[Var]) -> Result<LstmState> {
    let w_hh = vars[ids.w_hidden.index()];
    let hidden = tape.value(w_hh).rows();
    let mut gates = tape.linear(x, vars[ids.w_input.index()], Some(vars[ids.bias.index()]))?;
    if let Some(s) = state {
        if tape.value(s.h).cols() != hidden || tape.value(s.c).cols() != hidden {
            return Err(Error::Shape(format!(
                "lstm state width {} vs hidden size {hidden}",
                tape.value(s.h).cols()
            )));
        }
        let rec = tape.linear(s.h, w_hh, None)?;
        gates = tape.add(gates, rec)?;
    }
    let slice = |tape: &mut Tape<'_>, k: usize| tape.slice_cols(gates, k * hidden, hidden);
    let (i, f, g, o) = (slice(tape, 0)?, slice(tape, 1)?, slice(tape, 2)?, slice(tape, 3)?);
    let i = tape.sigmoid(i);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let mut c = tape.mul(i, g)?;
    if let Some(s) = state {
        let f = tape.sigmoid(f);
        let kept = tape.mul(f, s.c)?;
        c = tape.add(kept, c)?;
    }
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Head logits followed by row log-softmax.
pub fn predict_frame(tape: &mut Tape<'_>, z: Var, ids: &HeadIds, vars: &[Var]) -> Result<Var> {
    let logits = tape.linear(z, vars[ids.weight.index()], Some(vars[ids.bias.index()]))?;
    Ok(tape.log_softmax_rows(logits))
}

/// Index of the larger log-probability; ties go to class 0.
pub fn decide(log_probs: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &v) in log_probs.iter().enumerate().skip(1) {
        if v > log_probs[best] {
            best = k;
        }
    }
    best as u8
}

/// `Tensor2` helper for callers that evaluate the head outside a tape.
pub fn log_probs_row(t: &Tensor2) -> [f64; 2] {
    [t.get(0, 0), t.get(0, 1)]
}
