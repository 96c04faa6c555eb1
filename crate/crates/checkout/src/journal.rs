//! Append-only JSON-lines event log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::session::Event;

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with the events it
    /// already holds. A torn final record from an interrupted write is cut off.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<(Self, Vec<Event>)> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let bytes = if path.exists() {
            std::fs::read(&path)?
        } else {
            Vec::new()
        };
        let (events, good) = parse(&path, &bytes)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if good < bytes.len() {
            log::warn!("{}: dropping incomplete final record", path.display());
            file.set_len(good as u64)?;
        }
        Ok((Self { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Events of a log file, read without modifying it.
pub fn read_events(path: &Path) -> std::io::Result<Vec<Event>> {
    Ok(parse(path, &std::fs::read(path)?)?.0)
}

// events plus the byte length of the well-formed prefix
fn parse(path: &Path, bytes: &[u8]) -> std::io::Result<(Vec<Event>, usize)> {
    let mut events = Vec::new();
    let mut offset = 0;
    let mut good = 0;
    let mut lineno = 0;
    while offset < bytes.len() {
        lineno += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|i| offset + i + 1);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        let last = end.is_none_or(|e| bytes[e..].iter().all(|b| b.is_ascii_whitespace()));
        if !line.iter().all(|b| b.is_ascii_whitespace()) {
            match serde_json::from_slice(line) {
                Ok(e) if end.is_some() => events.push(e),
                Ok(_) | Err(_) if last => return Ok((events, good)),
                _ => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{lineno}: malformed event record", path.display()),
                    ))
                }
            }
        }
        offset = end.unwrap_or(bytes.len());
        good = offset;
    }
    Ok((events, good))
}
