//! Deterministic result files: CSV with a header row, JSON with sorted keys,
//! floats with 17 significant digits, and a manifest of content hashes.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// `{:.16e}` for finite values, `inf`/`-inf`/`nan` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_tuple(t: &[usize]) -> String {
    t.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// Float for JSON: non-finite values become strings so nothing is lost.
pub fn jf(x: f64) -> Value {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap()
    } else {
        Value::String(fmt_f64(x))
    }
}

pub fn jfs(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| jf(*x)).collect())
}

/// Pretty printer that writes every float with 17 significant digits.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format!("{value:.16e}").as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// JSON text with sorted keys (serde_json maps are ordered) and 17-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("writing to memory");
    out.push(b'\n');
    String::from_utf8(out).expect("utf-8")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Result files collected in memory, in emission order, then written at once.
#[derive(Debug, Default, Clone)]
pub struct Emitter {
    files: BTreeMap<String, Vec<u8>>,
    timings: BTreeMap<String, f64>,
}

impl Emitter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("in-memory csv");
        for row in rows {
            w.write_record(&row).expect("in-memory csv");
        }
        self.files.insert(name.to_string(), w.into_inner().expect("flush"));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.files.insert(name.to_string(), to_json_string(value).into_bytes());
    }

    /// Run `f`, recording its wall time under `label` (manifest only).
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        *self.timings.entry(label.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    pub fn record_time(&mut self, label: &str, seconds: f64) {
        self.timings.insert(label.to_string(), seconds);
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    pub fn timings(&self) -> &BTreeMap<String, f64> {
        &self.timings
    }

    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }
}

pub fn io_error(path: &Path, source: io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub criterion: usize,
    pub name: String,
    pub passed: bool,
}

/// Written as `manifest.json`; the only output that carries timings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub toolkit_version: String,
    pub timings_seconds: BTreeMap<String, f64>,
    pub files: Vec<FileRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckRecord>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn build(command: &str, config_canonical: &str, emitter: &Emitter, checks: Vec<CheckRecord>, out_dir: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config_canonical.as_bytes()),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            timings_seconds: emitter.timings().clone(),
            files: emitter
                .files()
                .iter()
                .map(|(path, bytes)| FileRecord {
                    path: path.clone(),
                    sha256: sha256_hex(bytes),
                    bytes: bytes.len(),
                })
                .collect(),
            checks,
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn write(&self) -> Result<(), CliError> {
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, to_json_string(self)).map_err(|e| io_error(&path, e))
    }
}

/// Read a table potential from CSV with header `i1,…,ik,value`. Every tuple
/// must appear exactly once.
pub fn load_table_csv(path: &Path, n_atoms: usize) -> Result<(usize, Vec<f64>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?.clone();
    let k = headers.len().saturating_sub(1);
    if k == 0 || headers.get(k) != Some("value") {
        return Err(CliError::Config(format!(
            "{}: header must list tuple index columns followed by `value`",
            path.display()
        )));
    }
    let size = (n_atoms as u128).pow(k as u32);
    if size > ruelle_core::space::DEFAULT_GRID_CAP as u128 {
        return Err(CliError::Compute(ruelle_core::Error::GridCap {
            size,
            cap: ruelle_core::space::DEFAULT_GRID_CAP,
        }));
    }
    let mut values = vec![f64::NAN; size as usize];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let at = |m: String| CliError::Config(format!("{} row {}: {m}", path.display(), line + 2));
        if rec.len() != k + 1 {
            return Err(at(format!("expected {} fields", k + 1)));
        }
        let mut index = 0usize;
        for i in 0..k {
            let a: usize = rec[i].parse().map_err(|_| at(format!("bad index `{}`", &rec[i])))?;
            if a >= n_atoms {
                return Err(at(format!("index {a} is not an atom")));
            }
            index = index * n_atoms + a;
        }
        let v: f64 = rec[k].parse().map_err(|_| at(format!("bad value `{}`", &rec[k])))?;
        if !values[index].is_nan() {
            return Err(at("duplicate tuple".into()));
        }
        values[index] = v;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(CliError::Config(format!("{}: tuple #{missing} has no value", path.display())));
    }
    Ok((k, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        let s = to_json_string(&json!({"b": 0.1, "a": [1.5]}));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("1.0000000000000001e-1"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], json!(0.1));
    }

    #[test]
    fn csv_round_trip() {
        let mut e = Emitter::new();
        e.csv("t.csv", &["x", "y"], vec![vec!["1".into(), fmt_f64(0.5)]]);
        assert_eq!(e.files()["t.csv"], b"x,y\n1,5.0000000000000000e-1\n");
    }

    #[test]
    fn table_csv_loader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "i1,i2,value\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n").unwrap();
        let (k, v) = load_table_csv(&p, 2).unwrap();
        assert_eq!(k, 2);
        assert_eq!(v, vec![0.0, 1.0, 1.0, 0.0]);
        std::fs::write(&p, "i1,i2,value\n0,0,0\n0,1,1\n1,0,1\n").unwrap();
        assert!(matches!(load_table_csv(&p, 2), Err(CliError::Config(_))));
        std::fs::write(&p, "i1,i2,value\n0,0,0\n0,0,1\n1,0,1\n1,1,1\n").unwrap();
        assert!(matches!(load_table_csv(&p, 2), Err(CliError::Config(_))));
    }
}
