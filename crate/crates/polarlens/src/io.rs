//! Archive directories: one JSONL file per record type.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use polarlens_core::{ArchiveParts, ChannelArchive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const CHANNELS_FILE: &str = "channels.jsonl";
pub const VIDEOS_FILE: &str = "videos.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const SUBSCRIBERS_FILE: &str = "subscribers.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveIoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}: {source}", path.display())]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },

    #[error(transparent)]
    Archive(#[from] polarlens_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveIoError + '_ {
    move |source| ArchiveIoError::Io { path: path.to_path_buf(), source }
}

/// Reads one JSON object per line; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArchiveIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|source| ArchiveIoError::Parse { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ArchiveIoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| ArchiveIoError::Io { path: path.to_path_buf(), source: e.into() })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_optional<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArchiveIoError> {
    if path.exists() {
        read_jsonl(path)
    } else {
        log::debug!("{} absent, treating as empty", path.display());
        Ok(Vec::new())
    }
}

/// Loads and validates an archive directory. Transcripts and subscriber
/// snapshots may be absent.
pub fn load_archive(dir: &Path) -> Result<ChannelArchive, ArchiveIoError> {
    let parts = ArchiveParts {
        channels: read_jsonl(&dir.join(CHANNELS_FILE))?,
        videos: read_jsonl(&dir.join(VIDEOS_FILE))?,
        comments: read_jsonl(&dir.join(COMMENTS_FILE))?,
        transcripts: read_optional(&dir.join(TRANSCRIPTS_FILE))?,
        subscribers: read_optional(&dir.join(SUBSCRIBERS_FILE))?,
    };
    Ok(ChannelArchive::from_parts(parts)?)
}

pub fn write_parts(dir: &Path, parts: &ArchiveParts) -> Result<(), ArchiveIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join(CHANNELS_FILE), &parts.channels)?;
    write_jsonl(&dir.join(VIDEOS_FILE), &parts.videos)?;
    write_jsonl(&dir.join(COMMENTS_FILE), &parts.comments)?;
    write_jsonl(&dir.join(TRANSCRIPTS_FILE), &parts.transcripts)?;
    write_jsonl(&dir.join(SUBSCRIBERS_FILE), &parts.subscribers)
}

pub fn write_archive(dir: &Path, archive: &ChannelArchive) -> Result<(), ArchiveIoError> {
    write_parts(dir, &archive.to_parts())
}
