//! Machine-readable reports: JSON, CSV and aligned text tables.
//!
//! JSON carries no timing information so that identical runs are byte
//! identical; numbers use the shortest representation that round-trips.

use std::io::Write;

use serde::Serialize;

use crate::config::{Format, RunConfig};

/// Shortest round-trip text for a float; scientific outside `[1e-4, 1e6)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e6).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail record. `value` is always the measured quantity, so a
/// failing check carries its residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, anchor: impl Into<String>, value: f64, tolerance: f64) -> Self {
        let pass = value <= tolerance;
        Self { name: name.into(), anchor: anchor.into(), value, tolerance, relation: Relation::AtMost, pass }
    }

    pub fn at_least(name: impl Into<String>, anchor: impl Into<String>, value: f64, tolerance: f64) -> Self {
        let pass = value >= tolerance;
        Self { name: name.into(), anchor: anchor.into(), value, tolerance, relation: Relation::AtLeast, pass }
    }

    /// `|value - target| <= tolerance`, reported as the deviation.
    pub fn near(name: impl Into<String>, anchor: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self::at_most(name, anchor, (value - target).abs(), tolerance)
    }
}

/// Rows for CSV and table output when a command has a natural table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    fn write_aligned<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        writeln!(out, "{}", line(&self.header))?;
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(out, "{}", line(&rule))?;
        for r in &self.rows {
            writeln!(out, "{}", line(r))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub data: serde_json::Value,
    #[serde(skip)]
    pub table: Option<Table>,
}

impl Report {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            command: config.command.clone(),
            config: config.clone(),
            checks: Vec::new(),
            data: serde_json::Value::Null,
            table: None,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    fn checks_table(&self) -> Table {
        let mut t = Table::new(&["name", "anchor", "value", "relation", "tolerance", "pass"]);
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            t.push(vec![
                c.name.clone(),
                c.anchor.clone(),
                num(c.value),
                rel.into(),
                num(c.tolerance),
                if c.pass { "PASS" } else { "FAIL" }.into(),
            ]);
        }
        t
    }

    pub fn render(&self, format: Format) -> std::io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut buf, self)?;
                buf.push(b'\n');
            }
            Format::Csv => match &self.table {
                Some(t) => t.write_csv(&mut buf)?,
                None => self.checks_table().write_csv(&mut buf)?,
            },
            Format::Table => {
                if let Some(t) = &self.table {
                    t.write_aligned(&mut buf)?;
                    if !self.checks.is_empty() {
                        buf.push(b'\n');
                    }
                }
                if !self.checks.is_empty() || self.table.is_none() {
                    self.checks_table().write_aligned(&mut buf)?;
                }
            }
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn report() -> Report {
        let cfg = RunConfig::new("demo", None, Overrides::default(), Format::Json, Some(3)).unwrap();
        let mut r = Report::new(&cfg);
        r.check(Check::at_most("a", "first, with comma", 1e-12, 1e-10));
        r.check(Check::at_least("b", "second", 0.05, 0.1));
        r
    }

    #[test]
    fn failing_checks_keep_their_value() {
        let r = report();
        assert!(!r.all_pass());
        let f: Vec<_> = r.failures().collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].value, 0.05);
    }

    #[test]
    fn csv_quotes_fields() {
        let text = String::from_utf8(report().render(Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("name,anchor,value,relation,tolerance,pass"));
        assert_eq!(lines.next(), Some("a,\"first, with comma\",1e-12,<=,1e-10,PASS"));
    }

    #[test]
    fn json_round_trips_values() {
        let text = String::from_utf8(report().render(Format::Json).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["checks"][0]["value"].as_f64(), Some(1e-12));
        assert_eq!(v["checks"][1]["relation"], ">=");
        assert_eq!(v["config"]["seed"], 3);
    }

    #[test]
    fn table_is_aligned() {
        let mut r = report();
        let mut t = Table::new(&["index", "eigenvalue"]);
        t.push(vec!["0".into(), "-2".into()]);
        r.table = Some(t);
        let text = String::from_utf8(r.render(Format::Table).unwrap()).unwrap();
        assert!(text.starts_with("index  eigenvalue\n-----  ----------\n0      -2\n"));
    }
}
