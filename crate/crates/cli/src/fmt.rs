//! Deterministic text output: C-style `%.17g` float formatting, CSV with
//! `#`-prefixed metadata lines, and a JSON mirror of the same table.
//!
//! Byte-identical reruns are a hard requirement, so every float goes
//! through one formatter and row order is fixed by the callers.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;

/// Format like C's `printf("%.17g", x)`: 17 significant digits, fixed or
/// scientific per the exponent, trailing zeros trimmed.
pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        // Covers -0.0 as well; %g prints plain zero.
        return "0".into();
    }
    let (sign, ax) = if x < 0.0 { ("-", -x) } else { ("", x) };
    // Decimal exponent as %e would determine it (after rounding to 17
    // significant digits).
    let e_repr = format!("{ax:.16e}");
    let (mantissa, exp_str) = e_repr.split_once('e').expect("exponent marker");
    let exp10: i32 = exp_str.parse().expect("exponent value");
    if exp10 < -4 || exp10 >= 17 {
        let trimmed = trim_fraction(mantissa);
        let (es, ea) = if exp10 < 0 { ("-", -exp10) } else { ("+", exp10) };
        format!("{sign}{trimmed}e{es}{ea:02}")
    } else {
        let prec = (16 - exp10).max(0) as usize;
        let fixed = format!("{ax:.prec$}");
        format!("{sign}{}", trim_fraction(&fixed))
    }
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// A table cell: either a float (formatted via [`g17`]) or verbatim text.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => g17(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::F(v) if v.is_finite() => serde_json::json!(v),
            Cell::F(v) => serde_json::json!(g17(*v)),
            Cell::I(v) => serde_json::json!(v),
            Cell::S(v) => serde_json::json!(v),
        }
    }
}

/// Resolved-run metadata stamped into every output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// Canonical one-line JSON of the fully resolved configuration.
    pub config: serde_json::Value,
    /// Free-form extra metadata lines (key, value).
    pub extra: Vec<(String, String)>,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        let canon = config.to_string();
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let hash = hasher.finalize();
        let hex: String = hash[..8].iter().map(|b| format!("{b:02x}")).collect();
        Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: hex,
            config,
            extra: Vec::new(),
        }
    }

    pub fn push_extra(&mut self, key: &str, value: String) {
        self.extra.push((key.to_string(), value));
    }
}

/// A fully assembled table ready for serialization.
#[derive(Debug, Clone)]
pub struct Table {
    pub meta: Meta,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(meta: Meta, columns: &[&str]) -> Self {
        Table {
            meta,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "# hrg {}", self.meta.version)?;
        writeln!(out, "# command: {}", self.meta.command)?;
        writeln!(out, "# seed: {}", self.meta.seed)?;
        writeln!(out, "# config-hash: {}", self.meta.config_hash)?;
        writeln!(out, "# config: {}", self.meta.config)?;
        for (k, v) in &self.meta.extra {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_json(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let extra: serde_json::Map<String, serde_json::Value> = self
            .meta
            .extra
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        let doc = serde_json::json!({
            "meta": {
                "version": self.meta.version,
                "command": self.meta.command,
                "seed": self.meta.seed,
                "config_hash": self.meta.config_hash,
                "config": self.meta.config,
                "extra": extra,
            },
            "columns": self.columns,
            "rows": self.rows
                .iter()
                .map(|r| r.iter().map(Cell::json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        });
        // serde_json's canonical compact form, then a trailing newline.
        writeln!(out, "{doc}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_c_reference_cases() {
        // Reference strings produced by printf("%.17g", x).
        assert_eq!(g17(0.0), "0");
        assert_eq!(g17(-0.0), "0");
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(-1.5), "-1.5");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(123456.0), "123456");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(0.0009765625), "0.0009765625");
        assert_eq!(g17(f64::NAN), "nan");
        assert_eq!(g17(f64::INFINITY), "inf");
        assert_eq!(g17(std::f64::consts::PI), "3.1415926535897931");
    }

    #[test]
    fn g_format_round_trips() {
        let values = [
            1.0 / 3.0,
            2.0_f64.powi(-52),
            6.02214076e23,
            -7.297352570e-3,
            1.7976931348623157e308,
            5e-324,
        ];
        for v in values {
            let s = g17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn csv_layout_is_stable() {
        let meta = Meta::new("demo", 7, serde_json::json!({"a": 1}));
        let mut t = Table::new(meta, &["x", "y"]);
        t.push(vec![Cell::I(1), Cell::F(0.5)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# command: demo"));
        assert!(text.contains("# config: {\"a\":1}"));
        assert!(text.ends_with("x,y\n1,0.5\n"));
        // Identical inputs hash identically.
        let again = Meta::new("demo", 7, serde_json::json!({"a": 1}));
        assert_eq!(again.config_hash, t.meta.config_hash);
    }
}
