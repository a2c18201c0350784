//! Binary training checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "MCKPT1" | config_hash[32] | epoch u64
//! rng: seed[32] | stream u64 | word_pos u128
//! meta: len u32 | utf8
//! params, buffers: count u32 | count x (rows u32 | cols u32 | rows*cols x f64)
//! optimizer: t u64 | lr f64 | beta1 f64 | beta2 f64 | eps f64 | wd f64
//!            count u32 | count x (len u32 | len x m f64 | len x v f64)
//! crc32 of everything above
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{AdamConfig, OptimState, Parameterized, Real, Tensor2};
use crate::error::{Error, Result};
use crate::files::{to_hex, write_atomic};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MCKPT1";
const WHAT: &str = "checkpoint";

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub epoch: u64,
    pub rng: RngState,
    /// Free-form JSON metadata such as the training history.
    pub meta: String,
    pub params: Vec<Tensor2<f64>>,
    pub buffers: Vec<Tensor2<f64>>,
    pub optim: OptimState,
}

impl Checkpoint {
    pub fn capture<T: Real, M: Parameterized<T>>(
        config_hash: [u8; 32],
        epoch: u64,
        rng: &ChaCha8Rng,
        meta: String,
        model: &M,
        optim: &OptimState,
    ) -> Self {
        Self {
            config_hash,
            epoch,
            rng: RngState::capture(rng),
            meta,
            params: model.params().iter().map(|p| p.value.to_f64()).collect(),
            buffers: model.buffers().iter().map(|b| b.to_f64()).collect(),
            optim: optim.clone(),
        }
    }

    /// Copy stored arrays into `model`; shapes must match exactly.
    pub fn restore_into<T: Real, M: Parameterized<T>>(&self, model: &mut M) -> Result<()> {
        let mismatch =
            || Error::ShapeMismatch("checkpoint does not match the model architecture".into());
        let mut params = model.params_mut();
        if params.len() != self.params.len() {
            return Err(mismatch());
        }
        for (p, src) in params.iter_mut().zip(&self.params) {
            if p.value.shape() != src.shape() {
                return Err(mismatch());
            }
            p.value = src.cast();
            p.zero_grad();
        }
        let mut buffers = model.buffers_mut();
        if buffers.len() != self.buffers.len() {
            return Err(mismatch());
        }
        for (b, src) in buffers.iter_mut().zip(&self.buffers) {
            if b.shape() != src.shape() {
                return Err(mismatch());
            }
            **b = src.cast();
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(CHECKPOINT_MAGIC);
        w.extend_from_slice(&self.config_hash);
        w.extend_from_slice(&self.epoch.to_le_bytes());
        w.extend_from_slice(&self.rng.seed);
        w.extend_from_slice(&self.rng.stream.to_le_bytes());
        w.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u32(&mut w, self.meta.len());
        w.extend_from_slice(self.meta.as_bytes());
        for group in [&self.params, &self.buffers] {
            put_u32(&mut w, group.len());
            for t in group {
                put_u32(&mut w, t.rows());
                put_u32(&mut w, t.cols());
                put_f64s(&mut w, t.data());
            }
        }
        let o = &self.optim;
        w.extend_from_slice(&o.t.to_le_bytes());
        let c = o.config;
        put_f64s(&mut w, &[c.lr, c.beta1, c.beta2, c.eps, c.weight_decay]);
        put_u32(&mut w, o.m.len());
        for (m, v) in o.m.iter().zip(&o.v) {
            put_u32(&mut w, m.len());
            put_f64s(&mut w, m);
            put_f64s(&mut w, v);
        }
        let crc = crc32fast::hash(&w);
        w.extend_from_slice(&crc.to_le_bytes());
        w
    }

    pub fn decode(bytes: &[u8], expected_hash: Option<&[u8; 32]>) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len()
            || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC
        {
            return Err(Error::Version { what: WHAT });
        }
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 {
            return Err(Error::Truncated { what: WHAT });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum {
                what: WHAT,
                stored,
                computed,
            });
        }
        let mut r = Reader {
            bytes: body,
            pos: CHECKPOINT_MAGIC.len(),
        };
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        if let Some(expected) = expected_hash {
            if *expected != config_hash {
                return Err(Error::ConfigHashMismatch {
                    expected: to_hex(expected),
                    found: to_hex(&config_hash),
                });
            }
        }
        let epoch = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let meta_len = r.count(1)?;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Version { what: WHAT })?;
        let mut groups = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = r.count(8)?;
            let mut arrays = Vec::with_capacity(n);
            for _ in 0..n {
                let rows = r.u32()? as usize;
                let cols = r.u32()? as usize;
                let data = r.f64s(
                    rows.checked_mul(cols)
                        .ok_or(Error::Truncated { what: WHAT })?,
                )?;
                arrays.push(Tensor2::from_vec(rows, cols, data)?);
            }
            groups.push(arrays);
        }
        let buffers = groups.pop().expect("two groups");
        let params = groups.pop().expect("two groups");
        let t = r.u64()?;
        let h = r.f64s(5)?;
        let config = AdamConfig {
            lr: h[0],
            beta1: h[1],
            beta2: h[2],
            eps: h[3],
            weight_decay: h[4],
        };
        let n = r.count(4)?;
        let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let len = r.count(16)?;
            m.push(r.f64s(len)?);
            v.push(r.f64s(len)?);
        }
        if r.pos != body.len() {
            return Err(Error::Version { what: WHAT });
        }
        Ok(Self {
            config_hash,
            epoch,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            meta,
            params,
            buffers,
            optim: OptimState { config, t, m, v },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, expected_hash)
    }
}

fn put_u32(w: &mut Vec<u8>, v: usize) {
    w.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(Error::Truncated { what: WHAT })?;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or(Error::Truncated { what: WHAT })?;
        self.pos = end;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_bytes) > self.bytes.len() - self.pos {
            return Err(Error::Truncated { what: WHAT });
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated { what: WHAT })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
