//! Plain-text parameter dumps: a versioned header of `key=value` fields
//! followed by named matrices. Values use Rust's shortest round-trip float
//! formatting, so a dump reloads bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio;

pub struct Dump {
    pub kind: String,
    pub header: BTreeMap<String, String>,
    pub matrices: BTreeMap<String, (usize, usize, Vec<f64>)>,
}

impl Dump {
    pub fn new(kind: &str) -> Self {
        Dump { kind: kind.to_string(), header: BTreeMap::new(), matrices: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.insert(key.to_string(), value.to_string());
    }

    pub fn put(&mut self, name: &str, rows: usize, cols: usize, data: &[f64]) {
        debug_assert_eq!(rows * cols, data.len());
        self.matrices.insert(name.to_string(), (rows, cols, data.to_vec()));
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.header
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse { what: "checkpoint", line: 1, msg: format!("missing or bad header field {key}") })
    }

    pub fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        match self.matrices.remove(name) {
            Some((r, c, data)) if r == rows && c == cols => Ok(data),
            Some((r, c, _)) => Err(Error::Parse {
                what: "checkpoint",
                line: 0,
                msg: format!("matrix {name} is {r}x{c}, expected {rows}x{cols}"),
            }),
            None => Err(Error::Parse { what: "checkpoint", line: 0, msg: format!("missing matrix {name}") }),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} v1\n", self.kind);
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k}={v}");
        }
        for (name, (rows, cols, data)) in &self.matrices {
            let _ = writeln!(out, "[{name}] {rows} {cols}");
            for r in 0..*rows {
                let row: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", row.join("\t"));
            }
        }
        out
    }

    pub fn from_text(text: &str, kind: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse { what: "checkpoint", line, msg };
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l == format!("# {kind} v1") => {}
            Some((_, l)) => return Err(bad(1, format!("expected a {kind} v1 header, found {l:?}"))),
            None => return Err(bad(1, "empty checkpoint".into())),
        }
        let mut dump = Dump::new(kind);
        while let Some((n, line)) = lines.next() {
            if let Some(rest) = line.strip_prefix('[') {
                let (name, dims) = rest.split_once("] ").ok_or_else(|| bad(n + 1, "bad matrix header".into()))?;
                let dims: Vec<usize> = dims.split(' ').filter_map(|d| d.parse().ok()).collect();
                let [rows, cols] = dims[..] else { return Err(bad(n + 1, "bad matrix dims".into())) };
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (m, row) = lines.next().ok_or_else(|| bad(n + 1, format!("truncated matrix {name}")))?;
                    for v in row.split('\t').filter(|s| !s.is_empty()) {
                        data.push(v.parse::<f64>().map_err(|_| bad(m + 1, format!("bad value {v:?}")))?);
                    }
                }
                if data.len() != rows * cols {
                    return Err(bad(n + 1, format!("matrix {name} has {} values, expected {}", data.len(), rows * cols)));
                }
                dump.matrices.insert(name.to_string(), (rows, cols, data));
            } else if let Some((k, v)) = line.split_once('=') {
                dump.header.insert(k.to_string(), v.to_string());
            } else if !line.is_empty() {
                return Err(bad(n + 1, format!("unexpected line {line:?}")));
            }
        }
        Ok(dump)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path, kind: &str) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact("checkpoint", path.to_path_buf()));
        }
        Self::from_text(&fsio::read_to_string(path)?, kind)
    }
}
