use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Pooling, Spatial, Temporal};
use crate::error::{Error, Result};
use crate::math::{ParamId, ParamStore, Tape, Tensor2, Var};
use crate::scene_graph::RelationType;

/// Ids of one spatial layer. `relations` is indexed by relation index and is
/// empty for the edge-blind MLP variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialLayerIds {
    pub self_loop: ParamId,
    pub relations: Vec<ParamId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolIds {
    pub self_weight: ParamId,
    /// Neighbor weight of the scoring convolution; absent for plain top-k.
    pub neighbor_weight: Option<ParamId>,
    pub bias: ParamId,
}

/// Gate order within the fused matrices is input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmIds {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub spatial: Vec<SpatialLayerIds>,
    pub pool: Option<PoolIds>,
    pub lstm: Option<LstmIds>,
    pub head: HeadIds,
}

/// All trainable tensors of the network plus the configuration that fixes
/// their shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub layout: Layout,
    pub config: ModelConfig,
    pub vocab_size: usize,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor2::from_vec(rows, cols, data).expect("shape")
}

impl ModelParams {
    /// Builds the parameter set with a deterministic initialization:
    /// Glorot-uniform matrices, zero biases and a forget-gate bias of one.
    pub fn init(config: &ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = Self::shapes(config, vocab_size);
        let mut store = ParamStore::new();
        for (name, rows, cols) in &shapes {
            let value = if name.ends_with("bias") {
                let mut b = Tensor2::zeros(*rows, *cols);
                if name == "lstm.bias" {
                    let h = config.lstm_hidden;
                    for c in h..2 * h {
                        b.set(0, c, 1.0);
                    }
                }
                b
            } else {
                glorot(&mut rng, *rows, *cols)
            };
            store.insert(name.clone(), value);
        }
        let layout = Self::layout(config, &store)?;
        Ok(Self {
            store,
            layout,
            config: config.clone(),
            vocab_size,
        })
    }

    /// Rebuilds a parameter set from named tensors, checking every name and
    /// shape against the configuration.
    pub fn from_named(config: &ModelConfig, vocab_size: usize, tensors: Vec<(String, Tensor2)>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::shapes(config, vocab_size);
        if shapes.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        let mut store = ParamStore::new();
        for ((name, rows, cols), (got_name, t)) in shapes.iter().zip(tensors) {
            if *name != got_name || t.shape() != (*rows, *cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {got_name} {}x{} does not match expected {name} {rows}x{cols}",
                    t.rows(),
                    t.cols()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("tensor {name} holds non-finite values")));
            }
            store.insert(got_name, t);
        }
        let layout = Self::layout(config, &store)?;
        Ok(Self {
            store,
            layout,
            config: config.clone(),
            vocab_size,
        })
    }

    /// Canonical `(name, rows, cols)` list for a configuration.
    pub fn shapes(config: &ModelConfig, vocab_size: usize) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let d = config.mrgcn_dim;
        for l in 0..config.mrgcn_layers {
            let fan_in = if l == 0 { vocab_size } else { d };
            out.push((format!("spatial.{l}.self"), fan_in, d));
            if config.spatial == Spatial::Mrgcn {
                for r in RelationType::all() {
                    out.push((format!("spatial.{l}.rel.{}", r.name()), fan_in, d));
                }
            }
        }
        let width = config.concat_width(vocab_size);
        match config.pooling {
            Pooling::None => {}
            Pooling::Topk => {
                out.push(("pool.self".into(), width, 1));
                out.push(("pool.bias".into(), 1, 1));
            }
            Pooling::Sag => {
                out.push(("pool.self".into(), width, 1));
                out.push(("pool.neighbor".into(), width, 1));
                out.push(("pool.bias".into(), 1, 1));
            }
        }
        let head_in = match config.temporal {
            Temporal::None => width,
            Temporal::Lstm => {
                let h = config.lstm_hidden;
                out.push(("lstm.w_input".into(), width, 4 * h));
                out.push(("lstm.w_hidden".into(), h, 4 * h));
                out.push(("lstm.bias".into(), 1, 4 * h));
                h
            }
        };
        out.push(("head.weight".into(), head_in, config.mlp_out));
        out.push(("head.bias".into(), 1, config.mlp_out));
        out
    }

    fn layout(config: &ModelConfig, store: &ParamStore) -> Result<Layout> {
        let id = |name: &str| {
            store
                .id_of(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let spatial = (0..config.mrgcn_layers)
            .map(|l| {
                let relations = if config.spatial == Spatial::Mrgcn {
                    RelationType::all()
                        .iter()
                        .map(|r| id(&format!("spatial.{l}.rel.{}", r.name())))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Ok(SpatialLayerIds {
                    self_loop: id(&format!("spatial.{l}.self"))?,
                    relations,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = match config.pooling {
            Pooling::None => None,
            Pooling::Topk => Some(PoolIds {
                self_weight: id("pool.self")?,
                neighbor_weight: None,
                bias: id("pool.bias")?,
            }),
            Pooling::Sag => Some(PoolIds {
                self_weight: id("pool.self")?,
                neighbor_weight: Some(id("pool.neighbor")?),
                bias: id("pool.bias")?,
            }),
        };
        let lstm = match config.temporal {
            Temporal::None => None,
            Temporal::Lstm => Some(LstmIds {
                w_input: id("lstm.w_input")?,
                w_hidden: id("lstm.w_hidden")?,
                bias: id("lstm.bias")?,
            }),
        };
        Ok(Layout {
            spatial,
            pool,
            lstm,
            head: HeadIds {
                weight: id("head.weight")?,
                bias: id("head.bias")?,
            },
        })
    }

    pub fn scalar_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Registers every parameter as a leaf; the returned vector is indexed by
    /// [`ParamId::index`].
    pub fn register<'a>(&'a self, tape: &mut Tape<'a>) -> Vec<Var> {
        self.store.iter().map(|(id, _, v)| tape.param(id, v)).collect()
    }
}
