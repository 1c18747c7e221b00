//! Stamped output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, VERSION};

/// Provenance block embedded in every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub command: &'static str,
}

impl Meta {
    /// First line of every text and CSV output.
    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={} seed={} version={} command={}\n",
            self.config_hash, self.seed, self.version, self.command
        )
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory plus the stamp written into each file.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    meta: Meta,
}

impl OutputDir {
    pub fn create(root: &Path, config_hash: String, seed: u64, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            meta: Meta {
                config_hash,
                seed,
                version: VERSION,
                command,
            },
        })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Pretty JSON of `body` with a leading `meta` object.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(&Stamped { meta: &self.meta, body })
            .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// A buffered writer whose first line is the stamp comment.
    pub fn text_writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.meta.comment_line().as_bytes())?;
        Ok(w)
    }
}
