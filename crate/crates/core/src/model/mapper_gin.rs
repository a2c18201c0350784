use rand::Rng;

use super::batch::GraphBatch;
use super::encoder::{EncoderCache, PointEncoder};
use super::gin::{BlockDropout, GinCache, GinLayer};
use super::{ModelConfig, Variant};
use crate::error::Result;
use crate::nn::{
    segment_max, segment_max_backward, Dense, LayerNorm, LayerNormCache, Mode, Param,
    Parameterized, Real, Tensor2,
};

/// Node encoder, GIN blocks, per-graph max readout, LayerNorm and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperGin<T: Real> {
    pub config: ModelConfig,
    pub encoder: PointEncoder<T>,
    pub layers: Vec<GinLayer<T>>,
    pub readout_norm: LayerNorm<T>,
    pub head: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct MapperGinCache<T: Real> {
    encoder: EncoderCache,
    layers: Vec<GinCache<T>>,
    node_count: usize,
    pool_arg: Vec<u32>,
    norm: LayerNormCache<T>,
    normed: Tensor2<T>,
}

impl<T: Real> MapperGin<T> {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let d = config.hidden_dim;
        let din = if config.variant == Variant::MapperGinBase {
            3
        } else {
            6
        };
        Self {
            config,
            encoder: PointEncoder::new(din, d, rng),
            layers: (0..config.layers).map(|_| GinLayer::new(d, rng)).collect(),
            readout_norm: LayerNorm::new(d),
            head: Dense::new(d, config.classes, rng),
        }
    }

    pub fn forward(
        &self,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Tensor2<T>, MapperGinCache<T>)> {
        let (rows, _, seg) = if self.config.variant == Variant::MapperGinBase {
            batch.base_descriptors()
        } else {
            batch.local_descriptors()
        };
        let (mut h, encoder) = self.encoder.forward(rows, &seg, mode)?;
        let drop = BlockDropout {
            p_edge: self.config.p_edge,
            p_feature: self.config.p_feature,
            position: self.config.dropout_position,
        };
        let n_graphs = batch.graph_count();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(
                &h,
                &batch.edges,
                &batch.node_graph,
                n_graphs,
                drop,
                mode,
                rng,
            )?;
            layers.push(cache);
            h = next;
        }
        let (pooled, pool_arg) = segment_max(&h, &batch.graph_segments());
        let (normed, norm) = self.readout_norm.forward(&pooled)?;
        let logits = self.head.forward(&normed)?;
        Ok((
            logits,
            MapperGinCache {
                encoder,
                layers,
                node_count: h.rows(),
                pool_arg,
                norm,
                normed,
            },
        ))
    }

    pub fn update_running(&mut self, cache: &MapperGinCache<T>) {
        self.encoder.update_running(&cache.encoder);
    }

    pub fn backward(&mut self, cache: &MapperGinCache<T>, dlogits: &Tensor2<T>) {
        let d_normed = self.head.backward(&cache.normed, dlogits);
        let d_pooled = self.readout_norm.backward(&cache.norm, &d_normed);
        let mut dh = segment_max_backward(&d_pooled, &cache.pool_arg, cache.node_count);
        let position = self.config.dropout_position;
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dh = layer.backward(lc, &dh, position);
        }
        self.encoder.backward(&cache.encoder, &dh);
    }
}

impl<T: Real> Parameterized<T> for MapperGin<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.encoder.params();
        for l in &self.layers {
            p.extend(l.params());
        }
        p.extend(self.readout_norm.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.encoder.params_mut();
        for l in &mut self.layers {
            p.extend(l.params_mut());
        }
        p.extend(self.readout_norm.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&Tensor2<T>> {
        self.encoder.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        self.encoder.buffers_mut()
    }
}
