//! Run reports: JSON, aligned text, and scan CSV.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use sha2::{Digest, Sha256};

use crate::bw::EnergyLedger;
use crate::config::RunConfig;
use crate::controversy::{ControversyReport, ScanOutcome};
use crate::error::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Top-level report keys, in output order.
pub const REPORT_KEYS: [&str; 10] = [
    "version",
    "command",
    "config_hash",
    "config",
    "ledger",
    "controversy",
    "scan",
    "identity_residuals",
    "error",
    "timings_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureInfo {
    pub stage: String,
    pub exit_code: i32,
    pub message: String,
}

impl FailureInfo {
    pub fn new(stage: &str, err: &Error) -> Self {
        Self {
            stage: stage.to_string(),
            exit_code: err.exit_code(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    #[serde(flatten)]
    pub outcome: ScanOutcome,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Canonical TOML of the run configuration.
    pub config: String,
    pub ledger: Option<EnergyLedger>,
    pub controversy: Option<ControversyReport>,
    pub scan: Option<ScanReport>,
    pub identity_residuals: BTreeMap<String, Option<f64>>,
    pub error: Option<FailureInfo>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// SHA-256 of the canonical config text, hex encoded.
pub fn config_hash(config: &RunConfig) -> String {
    hex::encode(Sha256::digest(config.emit().as_bytes()))
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            config_hash: config_hash(config),
            config: config.emit(),
            ledger: None,
            controversy: None,
            scan: None,
            identity_residuals: BTreeMap::new(),
            error: None,
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// Aligned `key  value` lines.
    pub fn to_table(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut rows = Vec::new();
        flatten("", &value, &mut rows);
        let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let pad = width - k.chars().count();
            out.push_str(&k);
            out.push_str(&" ".repeat(pad + 2));
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, rows);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, rows);
            }
        }
        Value::String(s) if s.contains('\n') => {
            for (i, line) in s.lines().enumerate() {
                rows.push((if i == 0 { prefix.to_string() } else { String::new() }, line.to_string()));
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Number(n) => rows.push((prefix.to_string(), format_number(n))),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn format_number(n: &serde_json::Number) -> String {
    match (n.as_i64(), n.as_u64(), n.as_f64()) {
        (Some(i), _, _) => i.to_string(),
        (_, Some(u), _) => u.to_string(),
        (_, _, Some(f)) => format_f64(f),
        _ => n.to_string(),
    }
}

/// 17 significant digits, scientific notation.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON formatter writing every float with 17 significant digits.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("report serializes");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub const CSV_HEADER: &str = "lambda,difference,predicted,ratio";

/// Scan rows as CSV; failed points leave their value fields empty.
pub fn scan_csv(scan: &ScanOutcome) -> String {
    let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &scan.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_f64(r.lambda),
            opt(r.difference),
            opt(r.predicted),
            opt(r.ratio)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controversy::ScanRow;

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&vec![0.1_f64, -2.0, 1e-300]);
        assert_eq!(s, "[1.0000000000000001e-1,-2.0000000000000000e0,1.0000000000000000e-300]");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, -2.0, 1e-300]);
    }

    #[test]
    fn key_set_is_fixed() {
        let r = RunReport::new("verify", &RunConfig::default());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut want = REPORT_KEYS.to_vec();
        want.sort();
        let mut got = keys.clone();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&RunConfig::default());
        assert_eq!(a, config_hash(&RunConfig::default()));
        assert_eq!(a.len(), 64);
        let mut other = RunConfig::default();
        other.model.seed = 7;
        assert_ne!(a, config_hash(&other));
    }

    #[test]
    fn csv_layout() {
        let scan = ScanOutcome {
            rows: vec![
                ScanRow {
                    lambda: 0.5,
                    difference: Some(0.25),
                    predicted: Some(0.25),
                    ratio: Some(1.0),
                    error: None,
                    error_code: None,
                },
                ScanRow {
                    lambda: 1.0,
                    difference: None,
                    predicted: None,
                    ratio: None,
                    error: Some("x".into()),
                    error_code: Some(4),
                },
            ],
            fit: None,
        };
        let csv = scan_csv(&scan);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lambda,difference,predicted,ratio");
        assert_eq!(lines[2], "1.0000000000000000e0,,,");
        assert!(csv.ends_with('\n'));
        assert_eq!(lines[1].split(',').count(), 4);
    }

    #[test]
    fn table_aligns() {
        let t = RunReport::new("compare", &RunConfig::default()).to_table();
        assert!(t.lines().any(|l| l.starts_with("command") && l.ends_with("compare")));
    }
}
