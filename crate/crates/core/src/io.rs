//! On-disk formats.
//!
//! Everything structured (priors, schedules, codec params, ensemble models,
//! scenario configs, manifests) uses one versioned plain-text key-value
//! format: one `key = value` field per line, vectors as comma-separated
//! decimals. Floats are printed with 17 significant digits, which round-trips
//! every f64 bit-exactly.
//!
//! Sample vectors use a raw binary format: a 16-byte header (8-byte magic,
//! u64 little-endian dimension) followed by `dim` little-endian f64 values.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub const KV_FORMAT: &str = "noiselab-kv";
pub const KV_VERSION: u32 = 1;
pub const SAMPLE_MAGIC: [u8; 8] = *b"NLSAMP01";

/// Print an f64 with 17 significant digits (lossless round-trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_f64_vec(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x:.16e}");
    }
    s
}

/// An ordered key-value document.
#[derive(Debug, Clone, Default)]
pub struct Kv {
    pub kind: String,
    pairs: Vec<(String, String)>,
}

impl Kv {
    pub fn new(kind: &str) -> Self {
        Kv { kind: kind.to_string(), pairs: Vec::new() }
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.pairs.push((key.to_string(), value.into()));
    }

    pub fn push_f64(&mut self, key: &str, x: f64) {
        self.push(key, fmt_f64(x));
    }

    pub fn push_u64(&mut self, key: &str, x: u64) {
        self.push(key, x.to_string());
    }

    pub fn push_vec(&mut self, key: &str, xs: &[f64]) {
        self.push(key, fmt_f64_vec(xs));
    }

    pub fn push_usize_vec(&mut self, key: &str, xs: &[usize]) {
        let s: Vec<String> = xs.iter().map(|v| v.to_string()).collect();
        self.push(key, s.join(","));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Key/value pairs in document order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Format(format!("missing key `{key}` in {} document", self.kind)))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::Format(format!("key `{key}`: bad float `{raw}`")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::Format(format!("key `{key}`: bad integer `{raw}`")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        Ok(self.get_u64(key)? as usize)
    }

    pub fn get_vec(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|tok| tok.trim().parse().map_err(|_| Error::Format(format!("key `{key}`: bad float `{tok}`"))))
            .collect()
    }

    pub fn get_usize_vec(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|tok| tok.trim().parse().map_err(|_| Error::Format(format!("key `{key}`: bad integer `{tok}`"))))
            .collect()
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.pairs.iter().filter(move |(k, _)| k.starts_with(prefix)).map(|(k, _)| k.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{KV_FORMAT} = {KV_VERSION}\nkind = {}\n", self.kind);
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut pairs = Vec::new();
        let mut version_ok = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                KV_FORMAT => {
                    let ver: u32 = v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad version `{v}`") })?;
                    if ver != KV_VERSION {
                        return Err(Error::Format(format!("unsupported {KV_FORMAT} version {ver}")));
                    }
                    version_ok = true;
                }
                "kind" => kind = Some(v.to_string()),
                _ => pairs.push((k.to_string(), v.to_string())),
            }
        }
        if !version_ok {
            return Err(Error::Format(format!("missing `{KV_FORMAT}` version header")));
        }
        Ok(Kv { kind: kind.ok_or_else(|| Error::Format("missing `kind` field".into()))?, pairs })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Write one sample vector in the raw binary format.
pub fn write_sample(path: &Path, x: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * x.len());
    buf.extend_from_slice(&SAMPLE_MAGIC);
    buf.extend_from_slice(&(x.len() as u64).to_le_bytes());
    for v in x {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read one sample vector in the raw binary format.
pub fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let buf = std::fs::read(path)?;
    if buf.len() < 16 || buf[..8] != SAMPLE_MAGIC {
        return Err(Error::Format(format!("{}: not a sample file", path.display())));
    }
    let dim = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 8 * dim {
        return Err(Error::Format(format!("{}: truncated sample (dim {dim}, {} bytes)", path.display(), buf.len())));
    }
    Ok(buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Feature rows as CSV: `label,f1..f10` with a header line.
pub fn feature_csv(rows: &[(u8, Vec<f64>)]) -> String {
    let width = rows.first().map_or(10, |(_, f)| f.len());
    let mut out = String::from("label");
    for i in 1..=width {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for (label, f) in rows {
        let _ = write!(out, "{label}");
        for v in f {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Parse a feature CSV produced by [`feature_csv`].
pub fn parse_feature_csv(text: &str) -> Result<Vec<(u8, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("label,") {
                return Err(Error::Format("feature CSV missing `label,f1..` header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split(',');
        let label: u8 = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(Error::Parse { line: i + 1, msg: "bad label".into() })?;
        let feats: Result<Vec<f64>> = toks
            .map(|t| t.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad float `{t}`") }))
            .collect();
        rows.push((label, feats?));
    }
    Ok(rows)
}
