//! On-disk formats. Results are pretty JSON documents, sample logs are JSON
//! lines behind a versioned header line, and histograms are CSV with a
//! commented footer. Every file carries the config hash and master seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Header {
    pub fn new(schema: &str, config_hash: &str, master_seed: u64) -> Self {
        Self {
            schema: schema.to_owned(),
            version: FORMAT_VERSION,
            config_hash: config_hash.to_owned(),
            master_seed,
        }
    }

    fn check(&self, schema: &str, path: &Path) -> Result<()> {
        if self.schema != schema || self.version != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_owned(),
                message: format!(
                    "expected {schema} v{FORMAT_VERSION}, found {} v{}",
                    self.schema, self.version
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document<T> {
    pub header: Header,
    pub body: T,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn malformed(path: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path.to_owned(),
        message: message.to_string(),
    }
}

pub fn write_document<T: Serialize>(path: &Path, header: Header, body: &T) -> Result<()> {
    let mut w = create(path)?;
    let doc = Document { header, body };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| malformed(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Document<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: Document<T> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| malformed(path, e))?;
    doc.header.check(schema, path)?;
    Ok(doc)
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: Header, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &header).map_err(|e| malformed(path, e))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| malformed(path, e))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<(Header, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| malformed(path, "empty record stream"))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| malformed(path, e))?;
    header.check(schema, path)?;
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| malformed(path, format!("line {}: {e}", n + 2)))?,
        );
    }
    Ok((header, items))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins spanning the data. The last bin is closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    assert!(bins > 0, "histogram needs at least one bin");
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() {
        (lo, hi) = (0.0, 1.0);
    } else if hi <= lo {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|i| Bin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

pub fn write_histogram_csv(
    path: &Path,
    header: &Header,
    bins: &[Bin],
    cutoff: f64,
    certified: f64,
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "bin_left,bin_right,count").map_err(io)?;
    for b in bins {
        writeln!(w, "{},{},{}", b.left, b.right, b.count).map_err(io)?;
    }
    writeln!(
        w,
        "# cutoff={cutoff},certified={certified},config_hash={},master_seed={}",
        header.config_hash, header.master_seed
    )
    .map_err(io)?;
    w.flush().map_err(io)
}
