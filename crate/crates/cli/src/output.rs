use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const TOOL: &str = "bkl-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header carried by every data file. Wall-clock time lives only in the
/// run sidecar so that reruns produce identical data files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: &'static str,
    pub config_hash: String,
    pub seed: u64,
    /// Replica indices used, as `first..end`.
    pub replica_range: String,
    /// Where each reference number in the file comes from.
    pub provenance: Vec<String>,
}

impl Meta {
    fn comment_lines(&self) -> String {
        let mut s = format!(
            "# tool: {} {}\n# mode: {}\n# config_hash: {}\n# seed: {}\n# replicas: {}\n",
            self.tool, self.version, self.mode, self.config_hash, self.seed, self.replica_range
        );
        for p in &self.provenance {
            s.push_str(&format!("# provenance: {p}\n"));
        }
        s
    }
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// CSV with `#` metadata lines ahead of the header row.
    pub fn csv(&mut self, name: &str, meta: &Meta, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut buf = meta.comment_lines().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        self.bytes(name, &buf)
    }

    /// Pretty JSON object `{"meta": …, <body fields>}`.
    pub fn json<T: Serialize>(&mut self, name: &str, meta: &Meta, body: &T) -> Result<(), CliError> {
        let mut value = serde_json::to_value(body)?;
        let object = value.as_object_mut().ok_or_else(|| CliError::Io(format!("{name}: body is not an object")))?;
        object.insert("meta".into(), serde_json::to_value(meta)?);
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    /// JSON lines with the metadata as the first record.
    pub fn jsonl<T: Serialize>(&mut self, name: &str, meta: &Meta, records: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        serde_json::to_writer(&mut buf, &serde_json::json!({ "meta": meta }))?;
        buf.push(b'\n');
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.bytes(name, &buf)
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(data)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
