//! Coupled-pair document embeddings `v_i = (v_f, v_b)` and their binary
//! store.
//!
//! Store layout (little endian):
//!
//! ```text
//! magic     8 bytes  "CTPEEMB1"
//! dim       u64
//! count     u64
//! encoder   u32 length + UTF-8 hex fingerprint
//! table     u32 length + UTF-8 hex fingerprint
//! count × { u32 id length, id bytes, u8 split (0 candidate, 1 test),
//!           dim × f64 v_f, dim × f64 v_b }
//! ```
//!
//! Records are written in ascending id order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;

use crate::corpus::{CorpusStore, CoupledPair, Split};
use crate::embedding::{embed_sequence, EmbeddingTable};
use crate::encoder::{forward, TwinEncoder};
use crate::error::{Error, Result};
use crate::exec::Execution;

const MAGIC: &[u8; 8] = b"CTPEEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbedding {
    pub doc_id: String,
    pub split: Split,
    pub v_f: Vec<f64>,
    pub v_b: Vec<f64>,
}

/// Encodes the former side with the former tower and the latter side with
/// the latter tower.
pub fn embed_document(
    twin: &TwinEncoder,
    table: &EmbeddingTable,
    pair: &CoupledPair,
    split: Split,
) -> Result<DocEmbedding> {
    let l = twin.config.l;
    let f = embed_sequence(&pair.f, table, l)?;
    let b = embed_sequence(&pair.b, table, l)?;
    let (v_f, _) = forward(&twin.former, &f)?;
    let (v_b, _) = forward(&twin.latter, &b)?;
    if v_f.iter().all(|&x| x == 0.0) || v_b.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(DocEmbedding {
        doc_id: pair.doc_id.clone(),
        split,
        v_f,
        v_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub encoder_fingerprint: String,
    pub table_fingerprint: String,
    pub docs: BTreeMap<String, DocEmbedding>,
}

/// Embeds every pair of `store`; documents that cannot be embedded are
/// logged and returned separately.
pub fn embed_corpus(
    twin: &TwinEncoder,
    table: &EmbeddingTable,
    store: &CorpusStore,
    exec: Execution,
) -> (EmbeddingStore, Vec<String>) {
    let pairs: Vec<&CoupledPair> = store.pairs.values().collect();
    let results = exec.map(&pairs, |p| {
        let split = store.documents[&p.doc_id].split;
        embed_document(twin, table, p, split)
    });
    let mut docs = BTreeMap::new();
    let mut skipped = Vec::new();
    for (pair, result) in pairs.into_iter().zip(results) {
        match result {
            Ok(e) => {
                docs.insert(e.doc_id.clone(), e);
            }
            Err(e) => {
                warn!("not embedding `{}`: {e}", pair.doc_id);
                skipped.push(pair.doc_id.clone());
            }
        }
    }
    let out = EmbeddingStore {
        dim: twin.output_dim(),
        encoder_fingerprint: twin.fingerprint(),
        table_fingerprint: table.fingerprint(),
        docs,
    };
    (out, skipped)
}

impl EmbeddingStore {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.docs
            .values()
            .filter(|d| d.split == split)
            .map(|d| d.doc_id.as_str())
            .collect()
    }

    /// Errors unless both stores come from the same encoder and table.
    pub fn check_compatible(&self, other: &EmbeddingStore) -> Result<()> {
        if self.encoder_fingerprint != other.encoder_fingerprint
            || self.table_fingerprint != other.table_fingerprint
            || self.dim != other.dim
        {
            return Err(Error::FingerprintMismatch(
                "embedding stores come from different models".into(),
            ));
        }
        Ok(())
    }

    /// Errors unless the store was produced by `twin` and `table`.
    pub fn check_model(&self, twin: &TwinEncoder, table: &EmbeddingTable) -> Result<()> {
        if self.encoder_fingerprint != twin.fingerprint() {
            return Err(Error::FingerprintMismatch(format!(
                "store encoder {} vs checkpoint {}",
                short(&self.encoder_fingerprint),
                short(&twin.fingerprint())
            )));
        }
        if self.table_fingerprint != table.fingerprint() {
            return Err(Error::FingerprintMismatch(format!(
                "store table {} vs vectors {}",
                short(&self.table_fingerprint),
                short(&table.fingerprint())
            )));
        }
        Ok(())
    }

    /// Scales every stored vector by `alpha`.
    pub fn scaled(&self, alpha: f64) -> EmbeddingStore {
        let mut out = self.clone();
        for d in out.docs.values_mut() {
            d.v_f.iter_mut().for_each(|x| *x *= alpha);
            d.v_b.iter_mut().for_each(|x| *x *= alpha);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.docs.len() as u64).to_le_bytes())?;
        write_str(out, &self.encoder_fingerprint)?;
        write_str(out, &self.table_fingerprint)?;
        for d in self.docs.values() {
            write_str(out, &d.doc_id)?;
            out.write_all(&[match d.split {
                Split::Candidate => 0,
                Split::Test => 1,
            }])?;
            for v in d.v_f.iter().chain(&d.v_b) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(input, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an embedding store".into()));
        }
        let dim = read_u64(input)? as usize;
        let count = read_u64(input)? as usize;
        let encoder_fingerprint = read_str(input)?;
        let table_fingerprint = read_str(input)?;
        let mut docs = BTreeMap::new();
        for _ in 0..count {
            let doc_id = read_str(input)?;
            let mut split = [0u8; 1];
            read_exact(input, &mut split)?;
            let split = match split[0] {
                0 => Split::Candidate,
                1 => Split::Test,
                s => return Err(Error::Format(format!("bad split tag {s}"))),
            };
            let read_vec = |input: &mut dyn Read| -> Result<Vec<f64>> {
                (0..dim)
                    .map(|_| {
                        let mut b = [0u8; 8];
                        read_exact(input, &mut b)?;
                        Ok(f64::from_le_bytes(b))
                    })
                    .collect()
            };
            let v_f = read_vec(input)?;
            let v_b = read_vec(input)?;
            if docs.contains_key(&doc_id) {
                return Err(Error::DuplicateId(doc_id));
            }
            docs.insert(
                doc_id.clone(),
                DocEmbedding {
                    doc_id,
                    split,
                    v_f,
                    v_b,
                },
            );
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after the last record".into()));
        }
        Ok(EmbeddingStore {
            dim,
            encoder_fingerprint,
            table_fingerprint,
            docs,
        })
    }
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

fn write_str(out: &mut impl Write, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_exact(input: &mut (impl Read + ?Sized), buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated embedding store: {e}")))
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(input: &mut impl Read) -> Result<String> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    let len = u32::from_le_bytes(b) as usize;
    let mut s = vec![0u8; len];
    read_exact(input, &mut s)?;
    String::from_utf8(s).map_err(|e| Error::Format(e.to_string()))
}
