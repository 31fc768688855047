//! Deterministic emission: floats printed with 17 significant digits (so
//! they round-trip exactly), `\n` line endings, sorted JSON keys, and no
//! wall-clock content in any file. Identical config and seed must give
//! identical bytes; runtimes go to stderr only.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{Serializer, Value};

use crate::config::Config;
use crate::{LabError, Result};

pub fn version() -> String {
    format!("lab-v{}", env!("CARGO_PKG_VERSION"))
}

/// 17 significant digits: one before the point, sixteen after.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Flagged,
}

impl Verdict {
    pub fn from_check(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Flagged => "flagged",
        }
    }

    pub fn failed(self) -> bool {
        self == Verdict::Fail
    }
}

struct Full17;

impl Formatter for Full17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// Compact JSON with sorted keys and full-precision floats, newline
/// terminated. Pretty-printing would drag whitespace into the determinism
/// contract for no benefit.
pub fn json_to_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Full17);
    value.serialize(&mut ser).expect("in-memory serialization");
    let mut s = String::from_utf8(buf).expect("serde_json emits utf-8");
    s.push('\n');
    s
}

/// The config echo as a JSON object; values stay verbatim strings.
pub fn config_json(cfg: &Config) -> Value {
    Value::Object(
        cfg.entries()
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect(),
    )
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| LabError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, content).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV with the config echoed as `# key = value` lines above the header.
pub fn csv_text(echo: &str, header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(echo.len() + header.len() + rows.len() * 64 + 2);
    out.push_str(echo);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Relative output paths land under LAB_OUT when it is set.
pub fn resolve_out(file: &str) -> PathBuf {
    let p = PathBuf::from(file);
    if p.is_absolute() {
        return p;
    }
    match std::env::var_os("LAB_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(p),
        _ => p,
    }
}
