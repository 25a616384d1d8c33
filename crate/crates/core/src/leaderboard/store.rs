//! Board persistence: one JSON file, replaced atomically, guarded by a
//! sibling `.lock` file.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Board, STORAGE_VERSION};
use crate::error::{Error, Result};

/// Advisory single-writer lock. Readers never take it.
#[derive(Debug)]
pub struct BoardLock {
    path: PathBuf,
}

impl BoardLock {
    pub fn lock_path(board: &Path) -> PathBuf {
        let mut name = board.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        board.with_file_name(name)
    }

    pub fn acquire(board: impl AsRef<Path>) -> Result<Self> {
        let path = Self::lock_path(board.as_ref());
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for BoardLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Board {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == STORAGE_VERSION as u64 => {}
            Some(v) => return Err(Error::UnsupportedVersion(v as u32)),
            None => return Err(Error::Validation("board file has no version".into())),
        }
        let board: Board = serde_json::from_value(value)?;
        for s in &board.submissions {
            s.validate()?;
        }
        Ok(board)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// An empty board when `path` does not exist yet.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    /// Write to a temporary file in the same directory, then rename over
    /// `path`, so readers see either the old or the new board.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let json = self.to_json()?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(json.as_bytes()).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    /// Load (or create), modify and save `path` while holding its lock.
    pub fn update<R>(path: impl AsRef<Path>, f: impl FnOnce(&mut Board) -> Result<R>) -> Result<R> {
        let path = path.as_ref();
        let _lock = BoardLock::acquire(path)?;
        let mut board = Self::load_or_default(path)?;
        let out = f(&mut board)?;
        board.save(path)?;
        Ok(out)
    }
}
