//! Binary graph cache.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "MGRAPH1" | key[32] | graph_count
//! per graph: point_count | node_count
//!            node_count x (len | len x index)
//!            edge_count | edge_count x (u | v)
//!            node_count x (cell_i | cell_j | cell_k | cluster)
//! crc32 of everything above
//! ```

use std::path::Path;

use super::{MapperGraph, NodeProvenance};
use crate::error::{Error, Result};
use crate::files::{to_hex, write_atomic};

pub const GRAPH_MAGIC: &[u8; 7] = b"MGRAPH1";
const WHAT: &str = "graph cache";

pub fn encode_graphs(key: &[u8; 32], graphs: &[MapperGraph]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(GRAPH_MAGIC);
    buf.extend_from_slice(key);
    let put = |buf: &mut Vec<u8>, v: u32| buf.extend_from_slice(&v.to_le_bytes());
    put(&mut buf, graphs.len() as u32);
    for g in graphs {
        put(&mut buf, g.point_count);
        put(&mut buf, g.nodes.len() as u32);
        for node in &g.nodes {
            put(&mut buf, node.len() as u32);
            for &i in node {
                put(&mut buf, i);
            }
        }
        put(&mut buf, g.edges.len() as u32);
        for &(u, v) in &g.edges {
            put(&mut buf, u);
            put(&mut buf, v);
        }
        for p in &g.provenance {
            for c in p.cell {
                put(&mut buf, c);
            }
            put(&mut buf, p.cluster);
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or(Error::Truncated { what: WHAT })?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    }

    /// Guards allocations against counts that cannot fit in the remaining bytes.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_bytes) > self.bytes.len() - self.pos {
            return Err(Error::Truncated { what: WHAT });
        }
        Ok(n)
    }
}

/// Decode a cache image. With `expected_key`, a different stored key is an
/// error.
pub fn decode_graphs(bytes: &[u8], expected_key: Option<&[u8; 32]>) -> Result<Vec<MapperGraph>> {
    if bytes.len() < GRAPH_MAGIC.len() || &bytes[..GRAPH_MAGIC.len()] != GRAPH_MAGIC {
        return Err(Error::Version { what: WHAT });
    }
    let header = GRAPH_MAGIC.len() + 32 + 4;
    if bytes.len() < header + 4 {
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
    let key: [u8; 32] = body[GRAPH_MAGIC.len()..GRAPH_MAGIC.len() + 32]
        .try_into()
        .expect("32 bytes");
    if let Some(expected) = expected_key {
        if *expected != key {
            return Err(Error::ConfigHashMismatch {
                expected: to_hex(expected),
                found: to_hex(&key),
            });
        }
    }
    let mut r = Reader {
        bytes: body,
        pos: GRAPH_MAGIC.len() + 32,
    };
    let count = r.count(8)?;
    let mut graphs = Vec::with_capacity(count);
    for _ in 0..count {
        let point_count = r.u32()?;
        let node_count = r.count(4)?;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let len = r.count(4)?;
            nodes.push((0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
        }
        let edge_count = r.count(8)?;
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            edges.push((r.u32()?, r.u32()?));
        }
        let mut provenance = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let cell = [r.u32()?, r.u32()?, r.u32()?];
            provenance.push(NodeProvenance {
                cell,
                cluster: r.u32()?,
            });
        }
        graphs.push(MapperGraph {
            point_count,
            nodes,
            edges,
            provenance,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Version { what: WHAT });
    }
    Ok(graphs)
}

/// Write atomically: temp file in the target directory, then rename.
pub fn write_graph_cache(path: &Path, key: &[u8; 32], graphs: &[MapperGraph]) -> Result<()> {
    write_atomic(path, &encode_graphs(key, graphs))
}

/// Debug export with the same fields as the binary cache.
pub fn graphs_to_json(key: &[u8; 32], graphs: &[MapperGraph]) -> String {
    let doc = serde_json::json!({ "key": to_hex(key), "graphs": graphs });
    serde_json::to_string_pretty(&doc).expect("graphs serialize")
}

pub fn read_graph_cache(path: &Path, expected_key: Option<&[u8; 32]>) -> Result<Vec<MapperGraph>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graphs(&bytes, expected_key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{build_mapper_graph, MapperParams};
    use crate::pointcloud::{sample_synthetic, Shape};

    fn sample_graphs() -> Vec<MapperGraph> {
        Shape::ALL
            .iter()
            .enumerate()
            .map(|(i, s)| {
                build_mapper_graph(
                    &sample_synthetic(*s, 256, i as u64).unwrap(),
                    &MapperParams::default(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip() {
        let graphs = sample_graphs();
        let key = [7u8; 32];
        let bytes = encode_graphs(&key, &graphs);
        assert_eq!(decode_graphs(&bytes, Some(&key)).unwrap(), graphs);
        assert_eq!(decode_graphs(&bytes, None).unwrap(), graphs);
        assert_eq!(encode_graphs(&key, &graphs), bytes);
    }

    #[test]
    fn json_export_mirrors_fields() {
        let graphs = sample_graphs();
        let doc: serde_json::Value =
            serde_json::from_str(&graphs_to_json(&[2; 32], &graphs)).unwrap();
        assert_eq!(doc["key"].as_str().unwrap(), to_hex(&[2; 32]));
        let back: Vec<MapperGraph> = serde_json::from_value(doc["graphs"].clone()).unwrap();
        assert_eq!(back, graphs);
    }

    #[test]
    fn bad_magic_is_version_error() {
        let mut bytes = encode_graphs(&[0; 32], &sample_graphs());
        bytes[0] = b'X';
        assert!(matches!(
            decode_graphs(&bytes, None),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = encode_graphs(&[0; 32], &sample_graphs());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            decode_graphs(&bytes, None),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn truncated_and_wrong_key() {
        let bytes = encode_graphs(&[1; 32], &sample_graphs());
        assert!(decode_graphs(&bytes[..20], None).is_err());
        assert!(matches!(
            decode_graphs(&bytes, Some(&[2; 32])),
            Err(Error::ConfigHashMismatch { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("graphs.mgraph");
        let graphs = sample_graphs();
        write_graph_cache(&path, &[3; 32], &graphs).unwrap();
        assert_eq!(read_graph_cache(&path, Some(&[3; 32])).unwrap(), graphs);
    }
}
