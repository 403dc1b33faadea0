//! Report assembly and serialization.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("SYMINDEX_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "==")]
    Equal,
}

/// One asserted identity or bound.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, limit: f64) -> Self {
        let pass = match comparison {
            Comparison::AtMost => value <= limit,
            Comparison::AtLeast => value >= limit,
            Comparison::Below => value < limit,
            Comparison::Equal => value == limit,
        };
        Check { name: name.into(), value, comparison, limit, pass: pass && value.is_finite() }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Comparison::AtMost, limit)
    }

    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Comparison::Below, limit)
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Comparison::AtLeast, limit)
    }

    pub fn equal(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Comparison::Equal, limit)
    }
}

/// Rows of the CSV summary and text table.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: Value,
    pub table: Table,
}

impl Report {
    pub fn new(config: &ExperimentConfig, checks: Vec<Check>, results: Value, table: Table) -> Self {
        Report {
            experiment: config.experiment.name().to_string(),
            version: VERSION.to_string(),
            config: config.clone(),
            passed: checks.iter().all(|c| c.pass),
            checks,
            results,
            table,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SignificantDigits::default());
        self.serialize(&mut ser).expect("report serializes");
        out.push(b'\n');
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.table.columns).expect("in-memory write");
        for row in &self.table.rows {
            w.write_record(row.iter().map(cell)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} · symindex {}\n", self.experiment, self.version);
        s += &format!("status: {}\n\n", if self.passed { "PASS" } else { "FAIL" });
        let name_w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let cmp = serde_json::to_value(c.comparison).expect("serializes");
            s += &format!(
                "  [{}] {:name_w$}  {} {} {}\n",
                if c.pass { "ok" } else { "!!" },
                c.name,
                float(c.value),
                cmp.as_str().unwrap_or("?"),
                float(c.limit),
            );
        }
        if !self.table.rows.is_empty() {
            s.push('\n');
            let cells: Vec<Vec<String>> = self.table.rows.iter().map(|r| r.iter().map(short_cell).collect()).collect();
            let widths: Vec<usize> = (0..self.table.columns.len())
                .map(|j| cells.iter().map(|r| r[j].len()).chain([self.table.columns[j].len()]).max().unwrap_or(0))
                .collect();
            let line = |r: &[String]| r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ") + "\n";
            s += &line(&self.table.columns);
            for r in &cells {
                s += &line(r);
            }
        }
        s
    }

    /// Writes `<experiment>.json`, `.csv` and `.txt` into `dir`.
    pub fn write_files(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (ext, body) in [("json", self.to_json()), ("csv", self.to_csv()), ("txt", self.to_text())] {
            let p = dir.join(format!("{}.{ext}", self.experiment));
            std::fs::File::create(&p)?.write_all(body.as_bytes())?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Seventeen significant digits, which round-trips every `f64`.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => float(n.as_f64().expect("f64")),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn short_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format!("{:.6e}", n.as_f64().expect("f64")),
        other => cell(other),
    }
}

/// JSON formatter printing floats with seventeen significant digits.
#[derive(Default)]
pub struct SignificantDigits(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, -2.0, 6.02214076e23, 5e-324, f64::MAX] {
            let s = float(x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_uses_formatter() {
        let v = serde_json::json!({"a": 0.1, "b": [1, 2.5]});
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SignificantDigits::default());
        v.serialize(&mut ser).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.contains("1.0000000000000001e-1") && s.contains("2.5000000000000000e0"), "{s}");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
        assert_eq!(back["b"][0].as_u64(), Some(1));
    }

    #[test]
    fn checks_compare() {
        assert!(Check::at_most("x", 1.0, 1.0).pass);
        assert!(!Check::below("x", 1.0, 1.0).pass);
        assert!(!Check::at_most("x", f64::NAN, 1.0).pass);
        assert!(Check::equal("x", 5.0, 5.0).pass);
        assert!(Check::at_least("x", 2.0, 1.8).pass);
    }
}
