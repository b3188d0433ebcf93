use std::path::Path;

use super::{read_file, write_file, PipelineError};

/// Formats `v` with 10 significant digits, `%.10g` style: fixed notation
/// for exponents in [-5, 10), scientific otherwise, trailing zeros removed.
pub fn fmt_sig10(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One feature row per clip, keyed by clip id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("clip_id");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (id, values) in &self.rows {
            out.push_str(id);
            for v in values {
                out.push(',');
                out.push_str(&fmt_sig10(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_file(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = read_file(path)?;
        let bad = |msg: String| PipelineError::Data(format!("{}: {msg}", path.display()));
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.get(0) != Some("clip_id") {
            return Err(bad("first column must be clip_id".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let values = rec
                .iter()
                .skip(1)
                .map(|c| c.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            rows.push((rec[0].to_string(), values));
        }
        Ok(Self { names, rows })
    }
}

/// A clip (or subject) that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorRecord {
    pub id: String,
    pub stage: String,
    pub message: String,
}

pub(crate) fn errors_csv(id_column: &str, records: &[ErrorRecord]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record([id_column, "stage", "error"])
        .expect("in-memory write");
    for r in records {
        w.write_record([&r.id, &r.stage, &r.message])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
