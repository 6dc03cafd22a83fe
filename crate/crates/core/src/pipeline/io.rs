use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::NamedTempFile;

use super::{PipelineError, Result};

pub const TMPDIR_ENV: &str = "CORPUSFORGE_TMPDIR";

/// An output file written to scratch space and moved into place on
/// `commit`. Scratch is `$CORPUSFORGE_TMPDIR` when set, else the
/// destination directory.
pub struct OutputFile {
    dest: PathBuf,
    writer: BufWriter<NamedTempFile>,
}

impl OutputFile {
    pub fn create(dest: &Path) -> io::Result<Self> {
        let dir = dest.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = match std::env::var_os(TMPDIR_ENV) {
            Some(scratch) if !scratch.is_empty() => {
                std::fs::create_dir_all(&scratch)?;
                NamedTempFile::new_in(scratch)?
            }
            _ => NamedTempFile::new_in(dir)?,
        };
        Ok(Self {
            dest: dest.to_path_buf(),
            writer: BufWriter::new(tmp),
        })
    }

    pub fn write_json_line<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, value)?;
        self.writer.write_all(b"\n")
    }

    pub fn commit(self) -> io::Result<()> {
        let tmp = self.writer.into_inner().map_err(|e| e.into_error())?;
        tmp.as_file().sync_all()?;
        match tmp.persist(&self.dest) {
            Ok(_) => Ok(()),
            Err(e) => {
                // scratch on another filesystem: copy next to the target first
                let dir = self.dest.parent().unwrap_or(Path::new("."));
                let mut local = NamedTempFile::new_in(dir)?;
                io::copy(&mut File::open(e.file.path())?, local.as_file_mut())?;
                local.as_file().sync_all()?;
                local.persist(&self.dest).map_err(|e| e.error)?;
                Ok(())
            }
        }
    }
}

impl Write for OutputFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    dest: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> io::Result<()> {
    let mut out = OutputFile::create(dest)?;
    for item in items {
        out.write_json_line(item)?;
    }
    out.commit()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            PipelineError::MissingInput(format!("{} not found", path.display()))
        } else {
            e.into()
        }
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            PipelineError::MissingInput(format!("{} not found", path.display()))
        } else {
            e.into()
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(dest: &Path, value: &T) -> io::Result<()> {
    if let Some(dir) = dest.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    super::atomic_write(dest, &bytes)
}
