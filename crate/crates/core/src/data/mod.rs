//! Byte-level corpus ingestion, sequence packing, the held-out split and
//! deterministic batch iteration.

mod synthetic;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use synthetic::{synthetic_corpus, write_synthetic_corpus};

use crate::Error;

/// Byte values occupy ids `0..256`; this id separates documents.
pub const SEPARATOR: u16 = 256;
pub const VOCAB: usize = 257;

const PACK_MAGIC: &[u8; 4] = b"PRPK";
const PACK_VERSION: u32 = 1;

/// Concatenated documents with their boundaries and a content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    bytes: Vec<u8>,
    /// End offset of every document in `bytes`.
    ends: Vec<usize>,
    hash: String,
}

impl Corpus {
    pub fn from_documents<D: AsRef<[u8]>>(docs: impl IntoIterator<Item = D>) -> Result<Self, Error> {
        let mut bytes = Vec::new();
        let mut ends = Vec::new();
        let mut h = Sha256::new();
        for d in docs {
            let d = d.as_ref();
            h.update((d.len() as u64).to_le_bytes());
            h.update(d);
            bytes.extend_from_slice(d);
            ends.push(bytes.len());
        }
        if bytes.is_empty() {
            return Err(Error::Data("empty corpus".into()));
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { bytes, ends, hash })
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn documents(&self) -> usize {
        self.ends.len()
    }

    pub fn document(&self, i: usize) -> &[u8] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.bytes[start..self.ends[i]]
    }

    /// Hex SHA-256 over length-prefixed documents.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Byte ids with a separator between consecutive documents.
    pub fn tokens(&self) -> Vec<u16> {
        let mut out = Vec::with_capacity(self.bytes.len() + self.ends.len());
        for i in 0..self.documents() {
            if i > 0 {
                out.push(SEPARATOR);
            }
            out.extend(self.document(i).iter().map(|&b| b as u16));
        }
        out
    }
}

fn source_path(source: &str) -> Result<PathBuf, Error> {
    if let Some(rest) = source.strip_prefix("file://") {
        return Ok(PathBuf::from(rest));
    }
    if source.contains("://") {
        return Err(Error::Data(format!(
            "unsupported source `{source}`: only local paths and file:// URLs are read"
        )));
    }
    Ok(PathBuf::from(source))
}

/// Reads every source as one document. Directories contribute their files
/// in sorted name order.
pub fn ingest<S: AsRef<str>>(sources: &[S]) -> Result<Corpus, Error> {
    let mut files = Vec::new();
    for s in sources {
        let p = source_path(s.as_ref())?;
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&p)
                .map_err(|e| Error::Data(format!("unreadable directory {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p);
        }
    }
    let mut docs = Vec::with_capacity(files.len());
    for f in &files {
        let bytes = fs::read(f).map_err(|e| Error::Data(format!("unreadable file {}: {e}", f.display())))?;
        docs.push(bytes);
    }
    Corpus::from_documents(docs)
}

/// Fixed-length samples cut from the token stream. Sample `i` covers
/// `seq_len + 1` tokens: the input and, shifted by one, its targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedDataset {
    tokens: Vec<u16>,
    seq_len: usize,
}

pub fn pack(corpus: &Corpus, seq_len: usize) -> Result<PackedDataset, Error> {
    PackedDataset::from_tokens(corpus.tokens(), seq_len)
}

impl PackedDataset {
    /// Chunks `tokens` into windows of `seq_len + 1`; the remainder is dropped.
    pub fn from_tokens(mut tokens: Vec<u16>, seq_len: usize) -> Result<Self, Error> {
        if seq_len == 0 {
            return Err(Error::Data("seq_len must be positive".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= VOCAB) {
            return Err(Error::Data(format!("token {t} outside vocab {VOCAB}")));
        }
        let w = seq_len + 1;
        if tokens.len() < w {
            return Err(Error::Data(format!(
                "corpus of {} tokens is shorter than seq_len + 1 = {w}",
                tokens.len()
            )));
        }
        tokens.truncate(tokens.len() / w * w);
        Ok(Self { tokens, seq_len })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len() / (self.seq_len + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> &[u16] {
        &self.tokens
    }

    fn window(&self, i: usize) -> &[u16] {
        let w = self.seq_len + 1;
        &self.tokens[i * w..(i + 1) * w]
    }

    pub fn input(&self, i: usize) -> &[u16] {
        &self.window(i)[..self.seq_len]
    }

    pub fn target(&self, i: usize) -> &[u16] {
        &self.window(i)[1..]
    }

    /// Deterministic held-out split: samples ordered by a hash of their index,
    /// the first `round(n * eval_fraction)` go to eval.
    pub fn split(&self, eval_fraction: f64) -> Result<Split, Error> {
        if !(0.0..1.0).contains(&eval_fraction) {
            return Err(Error::Data(format!("eval fraction {eval_fraction} outside [0, 1)")));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (splitmix64(i as u64), i));
        let n_eval = (n as f64 * eval_fraction).round() as usize;
        let n_eval = if eval_fraction > 0.0 { n_eval.max(1) } else { 0 }.min(n.saturating_sub(1));
        let mut eval = order[..n_eval].to_vec();
        let mut train = order[n_eval..].to_vec();
        eval.sort_unstable();
        train.sort_unstable();
        Ok(Split { train, eval })
    }

    pub fn write_cache(&self, path: &Path) -> Result<(), Error> {
        let mut buf = Vec::with_capacity(20 + 2 * self.tokens.len());
        buf.extend_from_slice(PACK_MAGIC);
        buf.extend_from_slice(&PACK_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.seq_len as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for t in &self.tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        write_atomic(path, &buf)
    }

    pub fn read_cache(path: &Path) -> Result<Self, Error> {
        let bad = |r: String| Error::Format { what: "pack cache", reason: r };
        let mut f = fs::File::open(path)?;
        let mut head = [0u8; 20];
        f.read_exact(&mut head).map_err(|e| bad(format!("short header: {e}")))?;
        if &head[..4] != PACK_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != PACK_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let seq_len = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes")) as usize;
        let mut body = Vec::new();
        f.read_to_end(&mut body)?;
        if seq_len == 0 || body.len() != count * (seq_len + 1) * 2 {
            return Err(bad(format!(
                "expected {count} samples of {} tokens, found {} bytes",
                seq_len + 1,
                body.len()
            )));
        }
        let tokens = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Self::from_tokens(tokens, seq_len)
    }

    /// Packs `corpus`, reusing a cache file keyed by content hash and `seq_len`.
    pub fn cached(corpus: &Corpus, seq_len: usize, dir: &Path) -> Result<Self, Error> {
        let path = dir.join(format!("{}-{seq_len}.prpk", &corpus.hash()[..16]));
        if path.exists() {
            if let Ok(ds) = Self::read_cache(&path) {
                return Ok(ds);
            }
        }
        let ds = pack(corpus, seq_len)?;
        fs::create_dir_all(dir)?;
        ds.write_cache(&path)?;
        Ok(ds)
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sorted, disjoint sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// One batch of `batch_size` sequences, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub indices: Vec<usize>,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Batch {
    fn gather(ds: &PackedDataset, indices: Vec<usize>) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * ds.seq_len);
        let mut targets = Vec::with_capacity(indices.len() * ds.seq_len);
        for &i in &indices {
            inputs.extend(ds.input(i).iter().map(|&t| t as usize));
            targets.extend(ds.target(i).iter().map(|&t| t as usize));
        }
        Self {
            batch_size: indices.len(),
            seq_len: ds.seq_len,
            indices,
            inputs,
            targets,
        }
    }
}

/// Endless training batches. Each epoch is a seeded permutation of the
/// train indices; batch `k` takes positions `k*B .. (k+1)*B` of the
/// concatenated epoch stream, so any step can be reached directly.
#[derive(Debug, Clone)]
pub struct Batches<'a> {
    ds: &'a PackedDataset,
    pool: Vec<usize>,
    batch_size: usize,
    seed: u64,
    step: u64,
    epoch: Option<(u64, Vec<usize>)>,
}

impl<'a> Batches<'a> {
    pub fn new(ds: &'a PackedDataset, pool: &[usize], batch_size: usize, seed: u64) -> Result<Self, Error> {
        if batch_size == 0 || pool.is_empty() {
            return Err(Error::Data("empty training pool or zero batch size".into()));
        }
        Ok(Self {
            ds,
            pool: pool.to_vec(),
            batch_size,
            seed,
            step: 0,
            epoch: None,
        })
    }

    /// Positions the iterator so the next batch is the one for `step`.
    pub fn skip_to(&mut self, step: u64) {
        self.step = step;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed) ^ splitmix64(epoch.wrapping_add(1)));
        let mut p = self.pool.clone();
        p.shuffle(&mut rng);
        p
    }

    /// The batch for `step`, independent of iterator position.
    pub fn batch_at(&mut self, step: u64) -> Batch {
        let n = self.pool.len() as u64;
        let b = self.batch_size as u64;
        let mut indices = Vec::with_capacity(self.batch_size);
        for pos in step * b..(step + 1) * b {
            let epoch = pos / n;
            if self.epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
                self.epoch = Some((epoch, self.permutation(epoch)));
            }
            let perm = &self.epoch.as_ref().expect("just set").1;
            indices.push(perm[(pos % n) as usize]);
        }
        Batch::gather(self.ds, indices)
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let b = self.batch_at(self.step);
        self.step += 1;
        Some(b)
    }
}

/// Evaluation batches over `pool` in index order; the last may be short.
pub fn eval_batches(ds: &PackedDataset, pool: &[usize], batch_size: usize) -> Vec<Batch> {
    pool.chunks(batch_size.max(1))
        .map(|c| Batch::gather(ds, c.to_vec()))
        .collect()
}
