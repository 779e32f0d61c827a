//! Metrics files: canonical JSON plus a row in a sibling `results.csv`.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rfgn_core::eval::{Metrics, Protocol};
use serde::Deserialize;

pub const CSV_HEADER: &str = "name,protocol,filtered,mrr,hits@1,hits@3,hits@10,n_queries";

/// JSON with sorted keys and reals at six decimals.
pub fn canonical_json(m: &Metrics, protocol: &Protocol) -> String {
    format!(
        "{{\n  \"filtered\": {},\n  \"hits@1\": {:.6},\n  \"hits@10\": {:.6},\n  \"hits@3\": {:.6},\n  \"mrr\": {:.6},\n  \"n_queries\": {},\n  \"protocol\": \"{}\"\n}}\n",
        protocol.filtered,
        m.hits1,
        m.hits10,
        m.hits3,
        m.mrr,
        m.n_queries,
        protocol.label()
    )
}

fn results_path(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join("results.csv")
}

/// Writes `path` (replacing it) and appends a row to `results.csv` next to it.
pub fn emit_metrics(m: &Metrics, protocol: &Protocol, path: &Path) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, canonical_json(m, protocol))?;
    let csv = results_path(path);
    let fresh = !csv.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(&csv)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    writeln!(
        f,
        "{name},{},{},{:.6},{:.6},{:.6},{:.6},{}",
        protocol.label(),
        protocol.filtered,
        m.mrr,
        m.hits1,
        m.hits3,
        m.hits10,
        m.n_queries
    )
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub filtered: bool,
    #[serde(rename = "hits@1")]
    pub hits1: f64,
    #[serde(rename = "hits@3")]
    pub hits3: f64,
    #[serde(rename = "hits@10")]
    pub hits10: f64,
    pub mrr: f64,
    pub n_queries: usize,
    pub protocol: String,
}

impl MetricsFile {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            mrr: self.mrr,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
            n_queries: self.n_queries,
        }
    }
}

pub fn read_metrics(path: &Path) -> io::Result<MetricsFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
