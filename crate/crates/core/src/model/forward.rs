use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::{History, Spatial, Temporal};
use super::graph::{EncodedClip, EncodedGraph};
use super::layers::{attention_pool, concat_layers, decide, lstm_step, mlp_layer, mrgcn_layer, predict_frame, readout, LstmState};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::math::{Gradients, Tape, Tensor2, Var};

/// Whether dropout is active. Training draws masks from the given generator.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl Mode<'_> {
    fn dropout(&mut self, tape: &mut Tape<'_>, x: Var, rate: f64) -> Var {
        match self {
            Mode::Eval => x,
            Mode::Train(rng) => tape.dropout(x, rate, &mut **rng),
        }
    }
}

/// Per-frame log-probabilities `[ln p0, ln p1]` and decisions for one clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub log_probs: Vec<[f64; 2]>,
    pub decisions: Vec<u8>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Probability of the collision class per frame.
    pub fn positive_scores(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp[1].exp()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ClipOutput {
    pub trace: PredictionTrace,
    /// Weighted negative log-likelihood of the clip label, per frame.
    pub frame_losses: Vec<f64>,
    /// Mean of `frame_losses`.
    pub loss: f64,
}

/// Tape nodes produced for one clip.
pub struct ClipGraph {
    pub embeddings: Vec<Var>,
    pub log_probs: Vec<Var>,
    pub loss: Var,
}

fn check_clip(params: &ModelParams, clip: &EncodedClip) -> Result<()> {
    if clip.is_empty() {
        return Err(Error::Contract(format!("clip {} has no frames", clip.id)));
    }
    if clip.label > 1 {
        return Err(Error::Schema(format!("clip {} has label {}", clip.id, clip.label)));
    }
    if let Some(f) = clip.frames.iter().find(|f| f.class_count() != params.vocab_size) {
        return Err(Error::Schema(format!(
            "clip {} encodes {} classes, the model expects {}",
            clip.id,
            f.class_count(),
            params.vocab_size
        )));
    }
    Ok(())
}

/// Spatial part of the network for one frame: graph layers, concat,
/// pooling and readout. Returns the `1 × width` graph embedding.
pub fn frame_embedding(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    vars: &[Var],
    graph: &EncodedGraph,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let cfg = &params.config;
    let x0 = tape.constant(graph.one_hot.clone());
    let mut layers = Vec::with_capacity(cfg.mrgcn_layers + 1);
    layers.push(x0);
    let mut h = x0;
    for ids in &params.layout.spatial {
        let pre = match cfg.spatial {
            Spatial::Mrgcn => mrgcn_layer(tape, h, graph, ids, vars)?,
            Spatial::Mlp => mlp_layer(tape, h, ids, vars)?,
        };
        let act = tape.relu(pre);
        h = mode.dropout(tape, act, cfg.dropout);
        layers.push(h);
    }
    let x = concat_layers(tape, &layers)?;
    let pooled = match &params.layout.pool {
        Some(ids) => attention_pool(tape, x, graph, ids, cfg.pooling_ratio, vars)?.x,
        None => x,
    };
    readout(tape, pooled, cfg.readout)
}

/// Temporal part: maps graph embeddings to the per-frame inputs of the head.
fn temporal(tape: &mut Tape<'_>, params: &ModelParams, vars: &[Var], embeddings: &[Var], mode: &mut Mode<'_>) -> Result<Vec<Var>> {
    let cfg = &params.config;
    let Some(ids) = &params.layout.lstm else {
        return Ok(embeddings.to_vec());
    };
    let mut out = Vec::with_capacity(embeddings.len());
    match cfg.history {
        History::Full => {
            let mut state = None;
            for &e in embeddings {
                let s = lstm_step(tape, e, state, ids, vars)?;
                state = Some(s);
                out.push(mode.dropout(tape, s.h, cfg.dropout));
            }
        }
        History::Window(k) => {
            for n in 0..embeddings.len() {
                let mut state: Option<LstmState> = None;
                for &e in &embeddings[(n + 1).saturating_sub(k)..=n] {
                    state = Some(lstm_step(tape, e, state, ids, vars)?);
                }
                let h = state.expect("window is non-empty").h;
                out.push(mode.dropout(tape, h, cfg.dropout));
            }
        }
    }
    Ok(out)
}

/// Records the whole clip on `tape`. Parameter values are read through
/// `vars` (one leaf per parameter in store order), so the same builder
/// serves training, evaluation and gradient checking.
pub fn build_clip(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    vars: &[Var],
    clip: &EncodedClip,
    class_weights: [f64; 2],
    mode: &mut Mode<'_>,
) -> Result<ClipGraph> {
    check_clip(params, clip)?;
    let embeddings = clip
        .frames
        .iter()
        .map(|g| frame_embedding(tape, params, vars, g, mode))
        .collect::<Result<Vec<_>>>()?;
    let z = temporal(tape, params, vars, &embeddings, mode)?;
    let t = clip.len() as f64;
    let y = clip.label as usize;
    let mut log_probs = Vec::with_capacity(z.len());
    let mut terms = Vec::with_capacity(z.len());
    for &zn in &z {
        let lp = predict_frame(tape, zn, &params.layout.head, vars)?;
        let mut coeff = Tensor2::zeros(1, 2);
        coeff.set(0, y, -class_weights[y] / t);
        terms.push(tape.weighted_sum(lp, coeff)?);
        log_probs.push(lp);
    }
    let loss = tape.sum(&terms)?;
    Ok(ClipGraph {
        embeddings,
        log_probs,
        loss,
    })
}

fn collect_output(tape: &Tape<'_>, g: &ClipGraph, label: u8, class_weights: [f64; 2]) -> ClipOutput {
    let mut trace = PredictionTrace {
        log_probs: Vec::with_capacity(g.log_probs.len()),
        decisions: Vec::with_capacity(g.log_probs.len()),
    };
    let mut frame_losses = Vec::with_capacity(g.log_probs.len());
    for &lp in &g.log_probs {
        let v = tape.value(lp);
        let row = [v.get(0, 0), v.get(0, 1)];
        trace.decisions.push(decide(&row));
        frame_losses.push(-class_weights[label as usize] * row[label as usize]);
        trace.log_probs.push(row);
    }
    let loss = tape.value(g.loss).get(0, 0);
    ClipOutput {
        trace,
        frame_losses,
        loss,
    }
}

/// Forward pass without gradients.
pub fn clip_forward(params: &ModelParams, clip: &EncodedClip, class_weights: [f64; 2], mut mode: Mode<'_>) -> Result<ClipOutput> {
    let mut tape = Tape::inference();
    let vars = params.register(&mut tape);
    let g = build_clip(&mut tape, params, &vars, clip, class_weights, &mut mode)?;
    Ok(collect_output(&tape, &g, clip.label, class_weights))
}

/// Evaluation-mode predictions.
pub fn predict_clip(params: &ModelParams, clip: &EncodedClip) -> Result<PredictionTrace> {
    Ok(clip_forward(params, clip, [1.0, 1.0], Mode::Eval)?.trace)
}

/// Forward and backward pass; returns the clip loss and its gradients.
pub fn clip_gradients(
    params: &ModelParams,
    clip: &EncodedClip,
    class_weights: [f64; 2],
    mut mode: Mode<'_>,
) -> Result<(ClipOutput, Gradients)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let g = build_clip(&mut tape, params, &vars, clip, class_weights, &mut mode)?;
    let out = collect_output(&tape, &g, clip.label, class_weights);
    let grads = tape.backward(g.loss)?;
    Ok((out, grads))
}

/// Frame-by-frame evaluation for deployment-style streams. Produces the
/// same values as [`predict_clip`] on the frames seen so far.
pub struct StreamingPredictor<'p> {
    params: &'p ModelParams,
    state: Option<(Tensor2, Tensor2)>,
    window: VecDeque<Tensor2>,
}

impl<'p> StreamingPredictor<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Self {
            params,
            state: None,
            window: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.state = None;
        self.window.clear();
    }

    pub fn push(&mut self, graph: &EncodedGraph) -> Result<[f64; 2]> {
        if graph.class_count() != self.params.vocab_size {
            return Err(Error::Schema(format!(
                "frame encodes {} classes, the model expects {}",
                graph.class_count(),
                self.params.vocab_size
            )));
        }
        let params = self.params;
        let mut tape = Tape::inference();
        let vars = params.register(&mut tape);
        let mut mode = Mode::Eval;
        let e = frame_embedding(&mut tape, params, &vars, graph, &mut mode)?;
        let z = match (&params.layout.lstm, params.config.temporal) {
            (Some(ids), Temporal::Lstm) => match params.config.history {
                History::Full => {
                    let prev = self.state.as_ref().map(|(h, c)| LstmState {
                        h: tape.constant(h.clone()),
                        c: tape.constant(c.clone()),
                    });
                    let s = lstm_step(&mut tape, e, prev, ids, &vars)?;
                    self.state = Some((tape.value(s.h).clone(), tape.value(s.c).clone()));
                    s.h
                }
                History::Window(k) => {
                    self.window.push_back(tape.value(e).clone());
                    if self.window.len() > k {
                        self.window.pop_front();
                    }
                    let mut state = None;
                    for past in &self.window {
                        let x = tape.constant(past.clone());
                        state = Some(lstm_step(&mut tape, x, state, ids, &vars)?);
                    }
                    state.expect("window is non-empty").h
                }
            },
            _ => e,
        };
        let lp = predict_frame(&mut tape, z, &params.layout.head, &vars)?;
        let v = tape.value(lp);
        Ok([v.get(0, 0), v.get(0, 1)])
    }
}
