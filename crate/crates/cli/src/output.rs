//! Artifact writing. Every file goes through a temporary file in the
//! target directory and is renamed into place once complete.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Write `name` atomically with the bytes produced by `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let tmp = NamedTempFile::new_in(&self.root)?;
        {
            let mut out = BufWriter::new(tmp.as_file());
            fill(&mut out)?;
            out.flush()?;
        }
        tmp.as_file().sync_all()?;
        let dest = self.root.join(name);
        tmp.persist(&dest).map_err(|e| CliError::Io(e.error))?;
        self.written.push(dest.clone());
        Ok(dest)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.into()))?;
            writeln!(out)?;
            Ok(())
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
