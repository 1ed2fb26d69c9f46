//! Embedding files.
//!
//! Text: a `|V| d` header, then `token x1 .. xd` per line, most frequent
//! token first. Counts and the training config go to a `<file>.meta.json`
//! sidecar; without it every count reads as 0.
//!
//! Binary (`.bin`): the magic bytes `PLEMB\0v1`, a little-endian `u32`
//! length and that many bytes of JSON metadata (`dim`, `vocab`, `counts`,
//! `config`), then `|V| * d` little-endian `f32` values row by row.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use polarlens_core::embedding::{Embedding, TrainConfig};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"PLEMB\0v1";

#[derive(Debug, thiserror::Error)]
pub enum EmbFileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Meta { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Embedding(#[from] polarlens_core::Error),
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    counts: Vec<u64>,
    config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    dim: usize,
    vocab: Vec<String>,
    counts: Vec<u64>,
    config: TrainConfig,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EmbFileError + '_ {
    move |source| EmbFileError::Io { path: path.to_path_buf(), source }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Writes text or binary depending on the `.bin` extension.
pub fn write_embedding(path: &Path, emb: &Embedding) -> Result<(), EmbFileError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    if is_binary(path) {
        write_binary(path, emb)
    } else {
        write_text(path, emb)
    }
}

pub fn read_embedding(path: &Path) -> Result<Embedding, EmbFileError> {
    if is_binary(path) {
        read_binary(path)
    } else {
        read_text(path)
    }
}

pub fn write_text(path: &Path, emb: &Embedding) -> Result<(), EmbFileError> {
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{} {}", emb.len(), emb.dim())?;
        for (i, token) in emb.vocab().iter().enumerate() {
            w.write_all(token.as_bytes())?;
            for x in emb.row(i) {
                write!(w, " {x}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    body().map_err(io(path))?;
    let meta = Sidecar { counts: emb.counts().to_vec(), config: emb.config().clone() };
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&meta).map_err(|source| EmbFileError::Meta { path: side.clone(), source })?;
    fs::write(&side, json).map_err(io(&side))
}

pub fn read_text(path: &Path) -> Result<Embedding, EmbFileError> {
    let fmt = |line: usize, msg: String| EmbFileError::Format { path: path.to_path_buf(), line, msg };
    let mut lines = BufReader::new(File::open(path).map_err(io(path))?).lines();
    let header = lines.next().ok_or_else(|| fmt(1, "empty file".into()))?.map_err(io(path))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| fmt(1, format!("bad header `{header}`"))))
        .collect::<Result<_, _>>()?;
    let [n, dim] = dims[..] else {
        return Err(fmt(1, format!("header must be `|V| d`, got `{header}`")));
    };
    let mut vocab = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * dim);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io(path))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default().to_string();
        let before = vectors.len();
        for p in parts {
            vectors.push(p.parse::<f32>().map_err(|_| fmt(i + 2, format!("bad float `{p}`")))?);
        }
        if vectors.len() - before != dim {
            return Err(fmt(i + 2, format!("expected {dim} values, found {}", vectors.len() - before)));
        }
        vocab.push(token);
    }
    if vocab.len() != n {
        return Err(fmt(1, format!("header promises {n} rows, file has {}", vocab.len())));
    }
    let side = sidecar_path(path);
    let (counts, config) = if side.exists() {
        let text = fs::read(&side).map_err(io(&side))?;
        let meta: Sidecar = serde_json::from_slice(&text).map_err(|source| EmbFileError::Meta { path: side, source })?;
        (meta.counts, meta.config)
    } else {
        log::warn!("{} has no sidecar; counts read as 0", path.display());
        (vec![0; n], TrainConfig { dim, ..TrainConfig::default() })
    };
    Ok(Embedding::from_parts(vocab, counts, vectors, dim, config)?)
}

pub fn write_binary(path: &Path, emb: &Embedding) -> Result<(), EmbFileError> {
    let header = BinaryHeader {
        dim: emb.dim(),
        vocab: emb.vocab().to_vec(),
        counts: emb.counts().to_vec(),
        config: emb.config().clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|source| EmbFileError::Meta { path: path.to_path_buf(), source })?;
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    let mut body = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for x in emb.vectors() {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    };
    body().map_err(io(path))
}

pub fn read_binary(path: &Path) -> Result<Embedding, EmbFileError> {
    let fmt = |msg: String| EmbFileError::Format { path: path.to_path_buf(), line: 0, msg };
    let mut r = BufReader::new(File::open(path).map_err(io(path))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io(path))?;
    if &magic != MAGIC {
        return Err(fmt("not a polarlens binary embedding".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io(path))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io(path))?;
    let h: BinaryHeader =
        serde_json::from_slice(&json).map_err(|source| EmbFileError::Meta { path: path.to_path_buf(), source })?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(io(path))?;
    if raw.len() != h.vocab.len() * h.dim * 4 {
        return Err(fmt(format!("expected {} matrix bytes, found {}", h.vocab.len() * h.dim * 4, raw.len())));
    }
    let vectors = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok(Embedding::from_parts(h.vocab, h.counts, vectors, h.dim, h.config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Embedding {
        let vocab = vec!["the".to_string(), "vote".into(), "x-y_z".into()];
        let vectors = vec![0.1, -2.5, 3.0e-7, 1.0, 0.0, -0.0, 123.456, 7.0, -1e10];
        Embedding::from_parts(vocab, vec![9, 4, 1], vectors, 3, TrainConfig { dim: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.vec");
        write_embedding(&p, &sample()).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("3 3\nthe "));
        assert_eq!(read_embedding(&p).unwrap(), sample());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_embedding(&p, &sample()).unwrap();
        assert_eq!(&fs::read(&p).unwrap()[..8], MAGIC);
        assert_eq!(read_embedding(&p).unwrap(), sample());
    }

    #[test]
    fn text_without_sidecar_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plain.vec");
        fs::write(&p, "2 2\na 1 2\nb 3 4\n").unwrap();
        let e = read_embedding(&p).unwrap();
        assert_eq!(e.counts(), [0, 0]);
        assert_eq!(e.vector("b").unwrap(), [3.0, 4.0]);
        fs::write(&p, "2 2\na 1 2\nb 3\n").unwrap();
        let err = read_embedding(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        let bin = dir.path().join("junk.bin");
        fs::write(&bin, b"nonsense-bytes").unwrap();
        assert!(read_embedding(&bin).is_err());
    }
}
