//! Artifact writing, metadata and exit codes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<bcprior::Error> for CliError {
    fn from(e: bcprior::Error) -> Self {
        use bcprior::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) | E::TooManyClusters { .. } => CliError::Usage(msg),
            E::InvalidDataset { .. }
            | E::Parse { .. }
            | E::FamilyMismatch(_)
            | E::Io(_)
            | E::Json(_) => CliError::Data(msg),
            E::NonConvergence(_) | E::EmptyCluster { .. } | E::OracleTooLarge { .. } => {
                CliError::Numeric(msg)
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifies one run: command, hashed inputs and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Metadata {
    /// `inputs` is hashed through its canonical JSON form.
    pub fn new(command: &'static str, inputs: &Value, seed: u64) -> Self {
        let canonical = serde_json::to_vec(inputs).expect("serializable inputs");
        Self {
            tool: "bcprior",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: sha256_hex(&canonical),
            seed,
        }
    }
}

pub struct OutDir {
    pub root: PathBuf,
    pub metadata: Metadata,
}

impl OutDir {
    pub fn create(root: PathBuf, metadata: Metadata) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let out = Self { root, metadata };
        out.write_bytes(
            "metadata.json",
            &pretty(&json!({ "metadata": &out.metadata }))?,
        )?;
        Ok(out)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// JSON artifact `{ "metadata": ..., key: payload }`.
    pub fn write_json<T: Serialize>(
        &self,
        name: &str,
        key: &str,
        payload: &T,
    ) -> CliResult<PathBuf> {
        let mut doc = serde_json::Map::new();
        doc.insert(
            "metadata".into(),
            serde_json::to_value(&self.metadata).expect("metadata"),
        );
        doc.insert(
            key.into(),
            serde_json::to_value(payload).map_err(|e| CliError::Numeric(e.to_string()))?,
        );
        self.write_bytes(name, &pretty(&Value::Object(doc))?)
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> bcprior::Result<()>,
    ) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }
}

fn pretty(v: &Value) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let usage: CliError = bcprior::Error::InvalidArgument("k".into()).into();
        let data: CliError = bcprior::Error::FamilyMismatch("beta".into()).into();
        let numeric: CliError = bcprior::Error::EmptyCluster { cluster: 2 }.into();
        assert_eq!(usage.code(), EXIT_USAGE);
        assert_eq!(data.code(), EXIT_DATA);
        assert_eq!(numeric.code(), EXIT_NUMERIC);
    }

    #[test]
    fn config_hash_ignores_key_order() {
        let a = Metadata::new("x", &json!({"a": 1, "b": 2}), 7);
        let b = Metadata::new("x", &json!({"b": 2, "a": 1}), 7);
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(
            a.config_hash,
            Metadata::new("x", &json!({"a": 2, "b": 2}), 7).config_hash
        );
    }
}
