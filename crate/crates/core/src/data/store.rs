//! `MLVE` embedding stores.
//!
//! Little-endian layout:
//!
//! ```text
//! magic     4 bytes  "MLVE"
//! version   u32      1
//! n_sent    u32
//! n_layers  u32
//! dim       u32
//! ids       n_sent x (u32 byte length, UTF-8 bytes)
//! data      n_sent x n_layers x dim  f32, sentence-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkit::Mat64;

const MAGIC: [u8; 4] = *b"MLVE";
pub const MLVE_VERSION: u32 = 1;

/// Which layers make up a sentence vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayerSelection {
    Single(usize),
    /// Mean of layers `0..=max`.
    MeanUpTo(usize),
    /// The highest layer.
    Last,
    /// Mean of every layer.
    MeanAll,
}

impl LayerSelection {
    fn range(self, n_layers: usize) -> Result<std::ops::RangeInclusive<usize>> {
        let check = |layer: usize| {
            if layer < n_layers {
                Ok(layer)
            } else {
                Err(Error::LayerOutOfRange { layer, n_layers })
            }
        };
        Ok(match self {
            LayerSelection::Single(l) => check(l)?..=l,
            LayerSelection::MeanUpTo(l) => 0..=check(l)?,
            LayerSelection::Last => n_layers - 1..=n_layers - 1,
            LayerSelection::MeanAll => 0..=n_layers - 1,
        })
    }
}

impl std::fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSelection::Single(l) => write!(f, "{l}"),
            LayerSelection::MeanUpTo(l) => write!(f, "mean:{l}"),
            LayerSelection::Last => f.write_str("last"),
            LayerSelection::MeanAll => f.write_str("mean"),
        }
    }
}

impl std::str::FromStr for LayerSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad layer selection {s:?}"));
        match s {
            "last" => Ok(Self::Last),
            "mean" => Ok(Self::MeanAll),
            _ => match s.strip_prefix("mean:") {
                Some(l) => l.parse().map(Self::MeanUpTo).map_err(|_| bad()),
                None => s.parse().map(Self::Single).map_err(|_| bad()),
            },
        }
    }
}

/// Per-sentence, per-layer vectors kept in memory as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    n_layers: usize,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(n_layers: usize, dim: usize) -> Self {
        assert!(n_layers >= 1, "n_layers must be >= 1");
        Self {
            n_layers,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Appends one sentence; `block` is `n_layers x dim`, layer-major.
    pub fn push(&mut self, id: impl Into<String>, block: &[f32]) -> Result<()> {
        let id = id.into();
        if block.len() != self.n_layers * self.dim {
            return Err(Error::LengthMismatch {
                expected: self.n_layers * self.dim,
                actual: block.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(block);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// The `n_layers x dim` block of one sentence.
    pub fn block(&self, id: &str) -> Result<&[f32]> {
        let &i = self.index.get(id).ok_or_else(|| Error::NotFound(id.to_string()))?;
        let size = self.n_layers * self.dim;
        Ok(&self.data[i * size..(i + 1) * size])
    }

    /// Sentence vector for `id`, promoted to `f64`.
    ///
    /// Multi-layer selections use a running mean, which returns a layer's
    /// vector unchanged when all averaged layers are equal.
    pub fn vector(&self, id: &str, selection: LayerSelection) -> Result<Vec<f64>> {
        let range = selection.range(self.n_layers)?;
        let block = self.block(id)?;
        let mut mean = vec![0.0f64; self.dim];
        for (k, layer) in range.enumerate() {
            let v = &block[layer * self.dim..(layer + 1) * self.dim];
            let w = 1.0 / (k + 1) as f64;
            for (m, &x) in mean.iter_mut().zip(v) {
                *m += (x as f64 - *m) * w;
            }
        }
        Ok(mean)
    }

    /// Stacks sentence vectors for `ids` into a matrix.
    pub fn features<S: AsRef<str>>(&self, ids: &[S], selection: LayerSelection) -> Result<Mat64> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let id = id.as_ref();
            let v = self.vector(id, selection).map_err(|e| match e {
                Error::NotFound(id) => Error::MissingEmbedding(id),
                other => other,
            })?;
            data.extend(v);
        }
        Mat64::from_vec(ids.len(), self.dim, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(&MAGIC);
        for v in [MLVE_VERSION, self.len() as u32, self.n_layers as u32, self.dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = r.u32("header")?;
        if version != MLVE_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let n = r.u32("header")? as usize;
        let n_layers = r.u32("header")? as usize;
        let dim = r.u32("header")? as usize;
        if n_layers == 0 {
            return Err(Error::Data("MLVE store with zero layers".into()));
        }
        let mut store = EmbeddingStore::new(n_layers, dim);
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = r.u32("id length")? as usize;
            let raw = r.take(len, "id")?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| Error::Data("id is not valid UTF-8".into()))?
                .to_string();
            ids.push(id);
        }
        let size = n_layers * dim;
        let payload = r.take(n * size * 4, "vectors")?;
        if !r.buf.is_empty() {
            return Err(Error::TrailingData(r.buf.len()));
        }
        store.data.reserve(n * size);
        for (id, chunk) in ids.into_iter().zip(payload.chunks_exact((size * 4).max(1)).chain(std::iter::repeat(&[][..]))) {
            let block: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.push(id, &block)?;
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io_util::write_atomic(path.as_ref(), &self.to_bytes())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::TruncatedFile(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Reads an `MLVE` file fully into memory.
pub fn open_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    EmbeddingStore::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn sample_store(n: usize, layers: usize, dim: usize) -> EmbeddingStore {
        let mut rng = Rng::new(1);
        let mut s = EmbeddingStore::new(layers, dim);
        for i in 0..n {
            let block: Vec<f32> = (0..layers * dim).map(|_| rng.normal() as f32).collect();
            s.push(format!("id-{i}"), &block).unwrap();
        }
        s
    }

    #[test]
    fn round_trip_counts_and_bits() {
        let s = sample_store(10, 13, 768);
        let back = EmbeddingStore::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!((back.len(), back.n_layers(), back.dim()), (10, 13, 768));
        assert_eq!(back, s);
    }

    #[test]
    fn corrupt_inputs() {
        let s = sample_store(3, 2, 4);
        let mut bytes = s.to_bytes();
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::TruncatedFile(_))
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(EmbeddingStore::from_bytes(&v), Err(Error::VersionUnsupported(9))));
        bytes[1] = b'X';
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn duplicate_ids_rejected_on_read() {
        let mut s = EmbeddingStore::new(1, 2);
        s.push("a", &[1.0, 2.0]).unwrap();
        assert!(matches!(s.push("a", &[0.0, 0.0]), Err(Error::DuplicateId(_))));
        let mut bytes = s.to_bytes();
        // Hand-build a second "a" record.
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let ids_end = 20 + 4 + 1;
        let mut forged = bytes[..ids_end].to_vec();
        forged.extend_from_slice(&1u32.to_le_bytes());
        forged.push(b'a');
        forged.extend_from_slice(&bytes[ids_end..]);
        forged.extend_from_slice(&[0u8; 8]);
        assert!(matches!(EmbeddingStore::from_bytes(&forged), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn lookup_and_selection() {
        let mut s = EmbeddingStore::new(3, 2);
        s.push("x", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(matches!(s.block("nope"), Err(Error::NotFound(_))));
        assert_eq!(s.vector("x", LayerSelection::Single(1)).unwrap(), vec![3.0, 4.0]);
        assert_eq!(s.vector("x", LayerSelection::Last).unwrap(), vec![5.0, 6.0]);
        assert_eq!(s.vector("x", LayerSelection::MeanUpTo(1)).unwrap(), vec![2.0, 3.0]);
        assert_eq!(s.vector("x", LayerSelection::MeanAll).unwrap(), vec![3.0, 4.0]);
        assert!(matches!(
            s.vector("x", LayerSelection::Single(3)),
            Err(Error::LayerOutOfRange { layer: 3, n_layers: 3 })
        ));
        assert!(matches!(
            s.features(&["x", "y"], LayerSelection::Last),
            Err(Error::MissingEmbedding(_))
        ));
    }

    #[test]
    fn mean_of_identical_layers_is_exact() {
        let v = [0.1f32, -3.7, 12.25];
        let block: Vec<f32> = v.iter().cycle().take(v.len() * 5).copied().collect();
        let mut s = EmbeddingStore::new(5, 3);
        s.push("a", &block).unwrap();
        let single = s.vector("a", LayerSelection::Single(0)).unwrap();
        assert_eq!(s.vector("a", LayerSelection::MeanAll).unwrap(), single);
    }

    #[test]
    fn selection_parse() {
        for s in ["last", "mean", "mean:4", "7"] {
            assert_eq!(s.parse::<LayerSelection>().unwrap().to_string(), s);
        }
        assert!("mean:x".parse::<LayerSelection>().is_err());
    }
}
