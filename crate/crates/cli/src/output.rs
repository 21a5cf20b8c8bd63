use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Round-trip exact text form of a double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Every file a run writes, with checksums for the manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn csv(&mut self, name: &str, header: &[String]) -> Result<CsvWriter<'_>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        let mut w = CsvWriter {
            set: self,
            name: name.to_string(),
            path,
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            bytes: 0,
        };
        w.row(header)?;
        Ok(w)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        let path = self.dir.join(name);
        std::fs::write(&path, &text)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(text.as_bytes())),
            bytes: text.len() as u64,
        });
        Ok(())
    }
}

pub struct CsvWriter<'a> {
    set: &'a mut OutputSet,
    name: String,
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
}

impl CsvWriter<'_> {
    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<(), CliError> {
        let mut line = String::new();
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(f.as_ref());
        }
        line.push('\n');
        self.hasher.update(line.as_bytes());
        self.bytes += line.len() as u64;
        self.out
            .write_all(line.as_bytes())
            .map_err(|e| CliError::Io(format!("writing {}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out
            .flush()
            .map_err(|e| CliError::Io(format!("writing {}: {e}", self.path.display())))?;
        self.set.files.push(OutputFile {
            file: self.name,
            sha256: hex(&self.hasher.finalize()),
            bytes: self.bytes,
        });
        Ok(())
    }
}
