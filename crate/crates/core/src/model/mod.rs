//! Mapper-GIN, its global-coordinate variant, and the pointwise MLP baseline.

mod batch;
mod encoder;
mod gin;
mod mapper_gin;
mod mlp;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use batch::{node_frame, GraphBatch, PointBatch, Sample};
pub use encoder::{Descriptor, EncoderCache, PointEncoder, MAX_DESCRIPTOR};
pub use gin::{dropedge, gin_aggregate, BlockDropout, DropoutPosition, GinCache, GinLayer};
pub use mapper_gin::{MapperGin, MapperGinCache};
pub use mlp::{MlpBaseline, MlpCache, MLP_WIDTHS};

use crate::error::{Error, Result};
use crate::nn::{Mode, Param, Parameterized, Real, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Node-local descriptors `[x, x_local]`.
    MapperGin,
    /// Raw coordinates only.
    MapperGinBase,
    MlpBaseline,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::MapperGin,
        Variant::MapperGinBase,
        Variant::MlpBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MapperGin => "mapper_gin",
            Variant::MapperGinBase => "mapper_gin_base",
            Variant::MlpBaseline => "mlp_baseline",
        }
    }

    pub fn uses_graphs(self) -> bool {
        self != Variant::MlpBaseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

impl fmt::Display for DropoutPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropoutPosition::AfterActivation => "after_activation",
            DropoutPosition::BeforeNorm => "before_norm",
        })
    }
}

impl FromStr for DropoutPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "after_activation" => Ok(DropoutPosition::AfterActivation),
            "before_norm" => Ok(DropoutPosition::BeforeNorm),
            _ => Err(Error::Config(format!("unknown dropout position `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub layers: usize,
    pub p_edge: f64,
    pub p_feature: f64,
    pub classes: usize,
    pub dropout_position: DropoutPosition,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::MapperGin,
            hidden_dim: 240,
            layers: 4,
            p_edge: 0.3,
            p_feature: 0.3,
            classes: 8,
            dropout_position: DropoutPosition::AfterActivation,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("model.hidden_dim must be > 0".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("model.classes must be >= 2".into()));
        }
        for (name, p) in [
            ("model.p_edge", self.p_edge),
            ("model.p_feature", self.p_feature),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Exact parameter count from the layer shapes.
pub fn param_count(config: &ModelConfig) -> usize {
    let c = config.classes;
    let dense = |i: usize, o: usize| i * o + o;
    match config.variant {
        Variant::MlpBaseline => {
            let [a, b] = MLP_WIDTHS;
            dense(3, a) + 2 * a + dense(a, b) + 2 * b + 2 * b + dense(b, c)
        }
        Variant::MapperGin | Variant::MapperGinBase => {
            let d = config.hidden_dim;
            let din = if config.variant == Variant::MapperGin {
                6
            } else {
                3
            };
            let block = 1 + 2 * dense(d, d) + 3 * d;
            dense(din, d) + 2 * d + config.layers * block + 2 * d + dense(d, c)
        }
    }
}

/// A classifier of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T: Real> {
    Graph(MapperGin<T>),
    Points(MlpBaseline<T>),
}

#[derive(Debug, Clone)]
pub enum ModelCache<T: Real> {
    Graph(MapperGinCache<T>),
    Points(MlpCache<T>),
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        Ok(match config.variant {
            Variant::MlpBaseline => Model::Points(MlpBaseline::new(config, rng)),
            _ => Model::Graph(MapperGin::new(config, rng)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Graph(m) => &m.config,
            Model::Points(m) => &m.config,
        }
    }

    /// Logits and the state needed by [`Self::backward`]. Training mode also
    /// folds batch statistics into the running estimates.
    pub fn forward_train(
        &mut self,
        samples: &[&Sample],
        rng: &mut impl Rng,
    ) -> Result<(Tensor2<T>, ModelCache<T>)> {
        match self {
            Model::Graph(m) => {
                let batch = GraphBatch::from_samples(samples)?;
                let (logits, cache) = m.forward(&batch, Mode::Train, rng)?;
                m.update_running(&cache);
                Ok((logits, ModelCache::Graph(cache)))
            }
            Model::Points(m) => {
                let batch = PointBatch::from_samples(samples)?;
                let (logits, cache) = m.forward(&batch, Mode::Train)?;
                m.update_running(&cache);
                Ok((logits, ModelCache::Points(cache)))
            }
        }
    }

    pub fn backward(&mut self, cache: &ModelCache<T>, dlogits: &Tensor2<T>) {
        match (self, cache) {
            (Model::Graph(m), ModelCache::Graph(c)) => m.backward(c, dlogits),
            (Model::Points(m), ModelCache::Points(c)) => m.backward(c, dlogits),
            _ => panic!("cache from a different model family"),
        }
    }

    /// Deterministic evaluation-mode logits.
    pub fn logits(&self, samples: &[&Sample]) -> Result<Tensor2<T>> {
        match self {
            Model::Graph(m) => {
                let batch = GraphBatch::from_samples(samples)?;
                // evaluation draws no random numbers
                let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
                Ok(m.forward(&batch, Mode::Eval, &mut unused)?.0)
            }
            Model::Points(m) => Ok(m
                .forward(&PointBatch::from_samples(samples)?, Mode::Eval)?
                .0),
        }
    }

    /// Arg-max class per sample; ties go to the lowest class index.
    pub fn predict(&self, samples: &[&Sample]) -> Result<Vec<usize>> {
        let logits = self.logits(samples)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }
}

impl<T: Real> Parameterized<T> for Model<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            Model::Graph(m) => m.params(),
            Model::Points(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Model::Graph(m) => m.params_mut(),
            Model::Points(m) => m.params_mut(),
        }
    }

    fn buffers(&self) -> Vec<&Tensor2<T>> {
        match self {
            Model::Graph(m) => m.buffers(),
            Model::Points(m) => m.buffers(),
        }
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        match self {
            Model::Graph(m) => m.buffers_mut(),
            Model::Points(m) => m.buffers_mut(),
        }
    }
}
