//! CSV ensembles, CSV tables and JSON reports/configs.
//!
//! Ensembles are written as `t,p0,...,p{P-1}` with one row per grid time and
//! every value in `{:.16e}` form, which round-trips `f64` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::levytest::TestReport;
use crate::simulate::{Ensemble, Grid};

/// Shipped JSON schema of [`TestReport`].
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

/// Relative tolerance on grid spacing when reading a `t` column.
const GRID_TOL: f64 = 1e-9;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::Parse { line, column: (*expected_len).min(*len) + 1, message: format!("expected {expected_len} fields, found {len}") }
        }
        _ => Error::Parse { line, column: 0, message: e.to_string() },
    }
}

/// Writes an ensemble as CSV.
pub fn write_ensemble<W: Write>(e: &Ensemble, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..e.len()).map(|k| format!("p{k}")));
    wr.write_record(&header).map_err(csv_err)?;
    for i in 0..=e.grid.n {
        let mut row = Vec::with_capacity(e.len() + 1);
        row.push(fmt(e.grid.time(i)));
        row.extend(e.paths.iter().map(|p| fmt(p[i])));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|err| Error::io("<csv writer>", err))
}

/// Reads an ensemble written by [`write_ensemble`]. The grid is rebuilt from
/// the `t` column, which must be uniformly spaced.
pub fn read_ensemble<R: Read>(r: R) -> Result<Ensemble> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.is_empty() || &header[0] != "t" {
        return Err(Error::Parse { line: 1, column: 1, message: "first column must be `t`".into() });
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name != format!("p{}", k - 1) {
            return Err(Error::Parse { line: 1, column: k as u64 + 1, message: format!("expected header `p{}`, found `{name}`", k - 1) });
        }
    }
    let npaths = header.len() - 1;
    if npaths == 0 {
        return Err(Error::Parse { line: 1, column: 2, message: "no path columns".into() });
    }
    let mut times = Vec::new();
    let mut paths = vec![Vec::new(); npaths];
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                column: k as u64 + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if k == 0 {
                times.push(v);
            } else {
                paths[k - 1].push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse { line: 2, column: 1, message: "need at least two grid times".into() });
    }
    let n = times.len() - 1;
    let t0 = times[0];
    let dt = (times[n] - t0) / n as f64;
    for (i, &t) in times.iter().enumerate() {
        if (t - (t0 + i as f64 * dt)).abs() > GRID_TOL * (t0.abs() + n as f64 * dt.abs()) {
            return Err(Error::Parse { line: i as u64 + 2, column: 1, message: format!("time {t} breaks the uniform grid") });
        }
    }
    Ensemble::new(Grid::new(t0, dt, n)?, paths, 0, "csv")
}

pub fn save_ensemble(e: &Ensemble, path: &FsPath) -> Result<()> {
    let f = File::create(path).map_err(|err| Error::io(path, err))?;
    write_ensemble(e, BufWriter::new(f))
}

pub fn load_ensemble(path: &FsPath) -> Result<Ensemble> {
    let f = File::open(path).map_err(|err| Error::io(path, err))?;
    read_ensemble(BufReader::new(f))
}

/// A named numeric table, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record(r.iter().map(|&x| fmt(x))).map_err(csv_err)?;
        }
        wr.flush().map_err(|err| Error::io("<csv writer>", err))
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        let f = File::create(path).map_err(|err| Error::io(path, err))?;
        self.write(BufWriter::new(f))
    }
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

pub fn save_json<T: Serialize>(v: &T, path: &FsPath) -> Result<()> {
    std::fs::write(path, to_json(v)? + "\n").map_err(|err| Error::io(path, err))
}

pub fn load_json<T: DeserializeOwned>(path: &FsPath) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    from_json(&s)
}

pub fn from_json<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line() as u64, column: e.column() as u64, message: e.to_string() })
}

/// Parses a report and checks it against [`REPORT_SCHEMA`].
pub fn report_from_json(s: &str) -> Result<TestReport> {
    let v: Value = from_json(s)?;
    validate_report(&v)?;
    Ok(serde_json::from_value(v)?)
}

pub fn validate_report(v: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA)?;
    validate(v, &schema, "$")
}

fn type_matches(v: &Value, ty: &str) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Validates against the keywords the shipped schema uses: `type`,
/// `required`, `properties`, `items` and `enum`.
pub fn validate(v: &Value, schema: &Value, at: &str) -> Result<()> {
    let bad = |msg: String| Err(Error::Parse { line: 0, column: 0, message: format!("{at}: {msg}") });
    match schema.get("type") {
        Some(Value::String(t)) if !type_matches(v, t) => return bad(format!("expected {t}")),
        Some(Value::Array(ts)) if !ts.iter().any(|t| t.as_str().is_some_and(|t| type_matches(v, t))) => {
            return bad(format!("expected one of {ts:?}"))
        }
        _ => {}
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        if !allowed.contains(v) {
            return bad(format!("{v} not in {allowed:?}"));
        }
    }
    if let (Some(Value::Array(req)), Some(obj)) = (schema.get("required"), v.as_object()) {
        for k in req.iter().filter_map(Value::as_str) {
            if !obj.contains_key(k) {
                return bad(format!("missing `{k}`"));
            }
        }
    }
    if let (Some(Value::Object(props)), Some(obj)) = (schema.get("properties"), v.as_object()) {
        for (k, sub) in props {
            if let Some(x) = obj.get(k) {
                validate(x, sub, &format!("{at}.{k}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(x, items, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levytest::{CriterionRecord, Outcome, Provenance};
    use crate::par::Execution;
    use crate::simulate::Process;

    fn ensemble() -> Ensemble {
        Process::Brownian.sampler(Grid::horizon(64, 1.0).unwrap()).unwrap().ensemble(3, 5, Execution::Sequential).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let e = ensemble();
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        let back = read_ensemble(buf.as_slice()).unwrap();
        assert_eq!(back.grid.n, e.grid.n);
        for (a, b) in e.paths.iter().zip(&back.paths) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,p0,p1,p2\n"));
    }

    #[test]
    fn header_mismatch_is_parse_error() {
        let err = read_ensemble("t,p0,p2\n0,0,0\n1,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 3, .. }), "{err}");
        let err = read_ensemble("time,p0\n0,0\n1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn bad_cell_reports_position() {
        let err = read_ensemble("t,p0,p1\n0,0,0\n0.5,1,x\n1,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 3, .. }), "{err}");
        let err = read_ensemble("t,p0,p1\n0,0,0\n0.5,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_ensemble("t,p0\n0,0\n0.2,1\n1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 1, .. }), "{err}");
    }

    #[test]
    fn report_validates_against_schema() {
        let rec = CriterionRecord {
            name: "x".into(),
            statistic: 1.5,
            reference: None,
            tolerance: 0.1,
            verdict: Outcome::Pass,
            sequence: vec![1.0, 2.0],
            detail: String::new(),
        };
        let r = TestReport::new("t", Some(0.7), vec![rec], Provenance::of(&ensemble()), vec![]);
        let s = to_json(&r).unwrap();
        assert_eq!(report_from_json(&s).unwrap(), r);
        let mut v: Value = serde_json::from_str(&s).unwrap();
        v["criteria"][0]["verdict"] = Value::String("maybe".into());
        assert!(validate_report(&v).is_err());
        v.as_object_mut().unwrap().remove("overall");
        assert!(validate_report(&v).is_err());
    }

    #[test]
    fn table_writes_header_and_rows() {
        let mut t = Table::new("demo", &["n", "mean"]);
        t.push(vec![64.0, 0.5]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,mean\n6.4000000000000000e1,5.0000000000000000e-1\n");
    }
}
