//! JSON-lines persistence: one file per speaker pool, one entry per line in
//! insertion order, `{id, owner, text, source, session_index, embedding}`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{MemoryEntry, MemoryError, MemoryPool};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MemoryError + '_ {
    move |source| MemoryError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reversible file-safe encoding of a speaker name, plus `.jsonl`.
pub(super) fn file_name(owner: &str) -> String {
    let mut out = String::new();
    for b in owner.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out.push_str(".jsonl");
    out
}

fn decode_stem(stem: &str) -> Option<String> {
    let mut bytes = Vec::new();
    let mut it = stem.bytes();
    while let Some(b) = it.next() {
        if b == b'%' {
            let hex = [it.next()?, it.next()?];
            bytes.push(u8::from_str_radix(std::str::from_utf8(&hex).ok()?, 16).ok()?);
        } else {
            bytes.push(b);
        }
    }
    String::from_utf8(bytes).ok()
}

pub(super) fn save(pool: &MemoryPool, path: &Path) -> Result<(), MemoryError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        for entry in pool.entries() {
            let line = serde_json::to_string(entry.as_ref())
                .expect("memory entries always serialize");
            writeln!(f, "{line}").map_err(io_err(&tmp))?;
        }
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(super) fn load(owner: String, dimension: usize, path: &Path) -> Result<MemoryPool, MemoryError> {
    let mut pool = MemoryPool::new(owner, dimension)?;
    let f = fs::File::open(path).map_err(io_err(path))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| MemoryError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let entry: MemoryEntry =
            serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if entry.owner != pool.owner {
            return Err(corrupt(format!(
                "owner {:?} does not match pool owner {:?}",
                entry.owner, pool.owner
            )));
        }
        if entry.embedding.len() != dimension {
            return Err(corrupt(format!(
                "embedding dimension {} != {dimension}",
                entry.embedding.len()
            )));
        }
        if entry.text.trim().is_empty() {
            return Err(corrupt("empty text".into()));
        }
        if pool.ids.contains(&entry.id) {
            return Err(corrupt(format!("duplicate id {}", entry.id)));
        }
        if pool.find_text(&entry.text).is_some() {
            return Err(corrupt(format!("duplicate text {:?}", entry.text)));
        }
        pool.push(entry);
    }
    pool.next_seq = pool.entries.len() as u64;
    Ok(pool)
}

/// Loads a pool whose owner is encoded in the file name.
pub(super) fn load_any_owner(dimension: usize, path: &Path) -> Result<MemoryPool, MemoryError> {
    let owner = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(decode_stem)
        .ok_or_else(|| MemoryError::Corrupt {
            path: path.display().to_string(),
            line: 0,
            message: "file name does not encode a speaker".into(),
        })?;
    load(owner, dimension, path)
}
