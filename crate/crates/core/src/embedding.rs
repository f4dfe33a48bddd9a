//! Word-vector tables: the frozen embedding model that turns a token
//! sequence into a `dim × l` matrix.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};

/// Dense token → index map.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary keeping the first occurrence of each token.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for t in tokens {
            vocab.insert(t.into());
        }
        vocab
    }

    /// Every token of every document in the corpus, sorted.
    pub fn from_corpus(store: &CorpusStore) -> Self {
        let set: BTreeSet<&str> = store
            .documents
            .values()
            .flat_map(|d| d.tokens.iter().map(String::as_str))
            .collect();
        Vocabulary::from_tokens(set)
    }

    fn insert(&mut self, token: String) -> (usize, bool) {
        if let Some(&i) = self.index.get(&token) {
            return (i, false);
        }
        let i = self.tokens.len();
        self.index.insert(token.clone(), i);
        self.tokens.push(token);
        (i, true)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A `size × dim` table of word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if vectors.len() != vocab.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} tokens of dimension {dim}",
                vectors.len(),
                vocab.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite component in the vector of `{}`",
                vocab.token(pos / dim)
            )));
        }
        Ok(EmbeddingTable { vocab, dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.get(token).map(|i| self.row(i))
    }

    /// Hex SHA-256 over the dimension, tokens and vector bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ctpe-table");
        h.update((self.dim as u64).to_le_bytes());
        for t in self.vocab.tokens() {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        for v in &self.vectors {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Writes the word-vector text format with a `count dim` header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vocab.len(), self.dim)?;
        for (i, token) in self.vocab.tokens().iter().enumerate() {
            write!(out, "{token}")?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a whitespace-separated word-vector file (`token v1 … v_dim` per
/// line, optional `count dim` header).
pub fn load_pretrained(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pretrained(BufReader::new(file), dim)
}

/// Vector dimension of a word-vector file, from its header or first row.
pub fn detect_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.len() {
            0 => continue,
            1 => return Err(Error::parse(i + 1, "token without vector")),
            2 if fields.iter().all(|f| f.parse::<usize>().is_ok()) => {
                return fields[1].parse().map_err(|_| Error::parse(i + 1, "bad header"));
            }
            n => return Ok(n - 1),
        }
    }
    Err(Error::Format(format!("{}: no vectors", path.display())))
}

pub fn read_pretrained(reader: impl BufRead, dim: usize) -> Result<EmbeddingTable> {
    let mut vocab = Vocabulary::default();
    let mut vectors = Vec::new();
    let mut declared_count = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 {
            if let (Ok(count), Ok(header_dim)) =
                (fields[0].parse::<usize>(), fields[1].parse::<usize>())
            {
                if header_dim != dim {
                    return Err(Error::DimMismatch {
                        line: lineno,
                        expected: dim,
                        found: header_dim,
                    });
                }
                declared_count = Some(count);
                continue;
            }
        }
        let found = fields.len() - 1;
        if found != dim {
            return Err(Error::DimMismatch {
                line: lineno,
                expected: dim,
                found,
            });
        }
        let (_, fresh) = vocab.insert(fields[0].to_string());
        if !fresh {
            warn!("line {lineno}: duplicate token `{}` ignored", fields[0]);
            continue;
        }
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(lineno, format!("`{f}` is not a number")))?;
            vectors.push(v);
        }
    }
    if let Some(count) = declared_count {
        if count != vocab.len() {
            warn!("header declares {count} vectors, file holds {}", vocab.len());
        }
    }
    EmbeddingTable::new(vocab, dim, vectors)
}

/// Random table with entries i.i.d. uniform on `[-0.5/dim, 0.5/dim]`.
pub fn random_table(vocab: Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let bound = 0.5 / dim as f64;
    let law = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..vocab.len() * dim).map(|_| law.sample(&mut rng)).collect();
    EmbeddingTable::new(vocab, dim, vectors)
}

/// Column-major `dim × len` matrix; columns at or beyond `valid_len` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    dim: usize,
    len: usize,
    valid_len: usize,
    data: Vec<f64>,
}

impl SequenceMatrix {
    /// Builds a matrix from explicit columns, zero-padding up to `len`.
    pub fn from_columns(dim: usize, len: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.is_empty() || columns.len() > len {
            return Err(Error::ShapeMismatch(format!(
                "{} columns for a sequence of length {len}",
                columns.len()
            )));
        }
        let mut data = vec![0.0; dim * len];
        for (t, c) in columns.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "column {t} has {} rows, expected {dim}",
                    c.len()
                )));
            }
            data[t * dim..(t + 1) * dim].copy_from_slice(c);
        }
        Ok(SequenceMatrix {
            dim,
            len,
            valid_len: columns.len(),
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.valid_len == 0
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Contiguous columns `start..start + width`.
    pub fn window(&self, start: usize, width: usize) -> &[f64] {
        &self.data[start * self.dim..(start + width) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same content padded with zero columns up to `len`.
    pub fn padded(&self, len: usize) -> SequenceMatrix {
        let mut data = self.data.clone();
        data.resize(self.dim * len.max(self.len), 0.0);
        SequenceMatrix {
            dim: self.dim,
            len: len.max(self.len),
            valid_len: self.valid_len,
            data,
        }
    }
}

/// Embeds the first `l` in-vocabulary tokens as columns; OOV tokens are
/// skipped.
pub fn embed_sequence(tokens: &[String], table: &EmbeddingTable, l: usize) -> Result<SequenceMatrix> {
    let dim = table.dim();
    let mut data = vec![0.0; dim * l];
    let mut valid_len = 0;
    for row in tokens.iter().filter_map(|t| table.vector(t)).take(l) {
        data[valid_len * dim..(valid_len + 1) * dim].copy_from_slice(row);
        valid_len += 1;
    }
    if valid_len == 0 {
        return Err(Error::AllTokensOov);
    }
    Ok(SequenceMatrix {
        dim,
        len: l,
        valid_len,
        data,
    })
}
