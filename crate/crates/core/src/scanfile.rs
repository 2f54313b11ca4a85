//! Reading and writing one-dimensional scans.
//!
//! Two layouts are accepted: two numeric columns (comma or whitespace
//! separated, `#` comments and an optional header line), or the native JSON
//! object `{"x": [...], "y": [...], "x_label": ..., "y_label": ..., "metadata": {...}}`.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::fmt_num;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanData {
    #[serde(default = "default_x_label")]
    pub x_label: String,
    #[serde(default = "default_y_label")]
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn default_x_label() -> String {
    "x".into()
}

fn default_y_label() -> String {
    "y".into()
}

impl ScanData {
    pub fn new(x_label: &str, y_label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            y,
            metadata: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let scan = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("scan JSON: {e}")))?
        } else {
            parse_columns(text)?
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::Schema(format!(
                "scan has {} x values and {} y values",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.is_empty() {
            return Err(Error::Schema("scan has no rows".into()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::Schema("scan contains non-finite values".into()));
        }
        Ok(())
    }

    /// Metadata goes into leading `# key: value` comments, values as JSON.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.metadata {
            let mut value = value.clone();
            round_json(&mut value);
            let _ = writeln!(out, "# {key}: {value}");
        }
        let _ = writeln!(out, "{},{}", self.x_label, self.y_label);
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{},{}", fmt_num(*x), fmt_num(*y));
        }
        out
    }

    /// Pretty JSON with every number rounded to 12 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| Error::Schema(e.to_string()))?;
        round_json(&mut value);
        serde_json::to_string_pretty(&value).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(value: &mut serde_json::Value) {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(f) = n.as_f64() {
                let r: f64 = format!("{f:.11e}").parse().unwrap_or(f);
                if let Some(m) = serde_json::Number::from_f64(r) {
                    *n = m;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn parse_columns(text: &str) -> Result<ScanData> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut labels = None;
    let mut metadata = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let key = key.trim();
                let plain =
                    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if let (true, Ok(v)) = (plain, serde_json::from_str(value.trim())) {
                    metadata.insert(key.to_string(), v);
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Schema(format!(
                "line {}: expected 2 columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                x.push(a);
                y.push(b);
            }
            _ if x.is_empty() && labels.is_none() => {
                labels = Some((fields[0].to_string(), fields[1].to_string()));
            }
            _ => {
                return Err(Error::Schema(format!(
                    "line {}: non-numeric value",
                    lineno + 1
                )))
            }
        }
    }
    let (xl, yl) = labels.unwrap_or_else(|| (default_x_label(), default_y_label()));
    let mut scan = ScanData::new(&xl, &yl, x, y);
    scan.metadata = metadata;
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_column_text() {
        let s =
            ScanData::parse("# comment\ntheta_mrad,R2\n2.0,0.5\n2.1 0.4\n\n2.2\t0.3\n").unwrap();
        assert_eq!(s.x, vec![2.0, 2.1, 2.2]);
        assert_eq!(s.y, vec![0.5, 0.4, 0.3]);
        assert_eq!(s.x_label, "theta_mrad");
    }

    #[test]
    fn garbage_is_schema_error() {
        for bad in [
            "hello world\nfoo bar\n",
            "1,2,3\n",
            "",
            "{\"x\": [1], \"y\": []}",
            "{\"x\": [1], \"y\": [2], \"z\": 1}",
        ] {
            assert!(
                matches!(ScanData::parse(bad), Err(Error::Schema(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let mut s = ScanData::new(
            "energy_gamma",
            "R2",
            vec![-1.0, 0.0, 1.0],
            vec![0.3, 1.0 / 3.0, 0.2],
        );
        s.metadata
            .insert("abundance".into(), serde_json::json!(0.5));
        let back = ScanData::parse(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.x, s.x);
        assert!((back.y[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(back.metadata["abundance"], serde_json::json!(0.5));
        let csv = ScanData::parse(&s.to_csv()).unwrap();
        assert_eq!(csv.x_label, "energy_gamma");
        assert_eq!(csv.y[1], 0.333333333333);
        assert_eq!(csv.metadata["abundance"], serde_json::json!(0.5));
    }

    #[test]
    fn free_text_comments_are_not_metadata() {
        let s = ScanData::parse(
            "# note: see log
# source: \"oracle\"
1,2
3,4
",
        )
        .unwrap();
        assert_eq!(s.metadata.len(), 1);
        assert_eq!(s.metadata["source"], serde_json::json!("oracle"));
    }
}
