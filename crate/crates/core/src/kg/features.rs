use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Graph;
use crate::{Error, Result};

/// Splits a node id into the word tokens whose vectors are averaged.
pub trait Tokenizer {
    fn tokens(&self, id: &str) -> Vec<String>;
}

impl<F> Tokenizer for F
where
    F: Fn(&str) -> Vec<String>,
{
    fn tokens(&self, id: &str) -> Vec<String> {
        self(id)
    }
}

/// Default tokenizer for concept ids.
///
/// A ConceptNet-style `/c/<lang>/` prefix is stripped; the remainder is split
/// on `_`, `/` and whitespace. `/c/en/town_hall/n` gives `[town, hall, n]`
/// and `town_hall` gives `[town, hall]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConceptTokenizer;

impl Tokenizer for ConceptTokenizer {
    fn tokens(&self, id: &str) -> Vec<String> {
        let body = strip_concept_prefix(id);
        body.split(|c: char| c == '_' || c == '/' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    }
}

fn strip_concept_prefix(id: &str) -> &str {
    if let Some(rest) = id.strip_prefix("/c/") {
        if let Some(pos) = rest.find('/') {
            return &rest[pos + 1..];
        }
    }
    id
}

/// Deterministic out-of-vocabulary vector: uniform on `[-0.5/d, 0.5/d]` per
/// component, seeded from a SHA-256 of `(oov_seed, token)`.
pub fn oov_vector(token: &str, dim: usize, oov_seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(oov_seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let bound = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-bound..=bound)).collect()
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov_seed: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            entries: HashMap::new(),
            oov_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a vector under the lowercased token. The first insertion of
    /// a token wins, as in cased embedding dumps read case-insensitively.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(
                "embedding insert",
                format!("token `{token}` has {} components, table dim is {}", vector.len(), self.dim),
            ));
        }
        self.entries.entry(token.to_lowercase()).or_insert(vector);
        Ok(())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(&token.to_lowercase())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Vector for `token`, falling back to the seeded OOV vector.
    pub fn vector(&self, token: &str) -> Vec<f64> {
        match self.get(token) {
            Some(v) => v.to_vec(),
            None => oov_vector(&token.to_lowercase(), self.dim, self.oov_seed),
        }
    }

    /// Mean of the token vectors; `None` when there are no tokens.
    pub fn mean_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<f64>> {
        if tokens.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; self.dim];
        for t in tokens {
            for (a, x) in acc.iter_mut().zip(self.vector(t.as_ref())) {
                *a += x;
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }

    /// Reads `token v1 .. vd` lines; the dimension is taken from the first
    /// data line.
    pub fn read(reader: impl BufRead, source_name: &str, oov_seed: u64) -> Result<Self> {
        let (dim, entries) = read_vectors(reader, source_name, true)?;
        Ok(Self { dim, entries, oov_seed })
    }

    pub fn load(path: impl AsRef<Path>, oov_seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string(), oov_seed)
    }
}

fn read_vectors(
    reader: impl BufRead,
    source_name: &str,
    lowercase: bool,
) -> Result<(usize, HashMap<String, Vec<f64>>)> {
    let mut dim = None;
    let mut entries = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let parse_err = |msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line: lineno,
            msg,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a token");
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|e| parse_err(format!("bad number `{p}`: {e}"))))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(parse_err(format!("token `{token}` has no vector")));
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(parse_err(format!(
                "token `{token}` has {} components, expected {d}",
                values.len()
            )));
        }
        let key = if lowercase { token.to_lowercase() } else { token.to_string() };
        entries.entry(key).or_insert(values);
    }
    let dim = dim.ok_or_else(|| Error::Data(format!("{source_name}: file has no vectors")))?;
    Ok((dim, entries))
}

/// Initial node features `h^(0)`, one vector per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    features: HashMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: HashMap::new(),
        }
    }

    /// Averages word vectors of each node's name tokens.
    pub fn from_graph(g: &Graph, emb: &EmbeddingTable, tokenizer: &impl Tokenizer) -> Result<Self> {
        let mut table = FeatureTable::new(emb.dim());
        for id in g.nodes() {
            let tokens = tokenizer.tokens(id);
            let v = emb
                .mean_vector(&tokens)
                .ok_or_else(|| Error::EmptyName(id.clone()))?;
            table.features.insert(id.clone(), v);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.features.get(id).map(Vec::as_slice)
    }

    pub(crate) fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id)
            .ok_or_else(|| Error::Data(format!("no feature vector for node `{id}`")))
    }

    pub fn insert(&mut self, id: &str, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::shape(
                "feature insert",
                format!("node `{id}` has {} components, table dim is {}", v.len(), self.dim),
            ));
        }
        self.features.insert(id.to_string(), v);
        Ok(())
    }

    /// Checks every graph node has a feature vector.
    pub fn covers(&self, g: &Graph) -> Result<()> {
        for id in g.nodes() {
            self.require(id)?;
        }
        Ok(())
    }

    /// Same text format as embedding files, keyed by (case-sensitive) node id.
    pub fn read(reader: impl BufRead, source_name: &str) -> Result<Self> {
        let (dim, features) = read_vectors(reader, source_name, false)?;
        Ok(Self { dim, features })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    /// Writes `id v1 .. vd` lines sorted by id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut ids: Vec<&String> = self.features.keys().collect();
        ids.sort();
        let write = |w: &mut std::io::BufWriter<File>| -> std::io::Result<()> {
            for id in ids {
                write!(w, "{id}")?;
                for x in &self.features[id] {
                    write!(w, " {x}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }
}
