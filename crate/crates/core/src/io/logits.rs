//! Delimited-text interchange: logit matrices and `image_id,label` tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::inference::LogitMatrix;
use crate::io::{read_bytes, read_text, write_file, Dataset};
use crate::tensor::Tensor;

const PREDICTIONS_HEADER: &str = "image_id,label";

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::ParseError { path: path.to_path_buf(), line, reason: reason.into() }
}

pub fn logits_header(classes: usize) -> String {
    let mut h = String::from("image_id");
    for k in 0..classes {
        write!(h, ",logit_{k}").unwrap();
    }
    h
}

/// Header line, then one row per image with 17 significant digits per value.
pub fn render_logits(m: &LogitMatrix) -> String {
    let mut out = logits_header(m.classes());
    out.push('\n');
    for (id, row) in m.image_ids().iter().zip(m.logits().rows()) {
        write!(out, "{id}").unwrap();
        for v in row {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_logits(text: &str, path: &Path, model_tag: &str) -> Result<LogitMatrix> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    let classes = cols.len().saturating_sub(1);
    if cols.len() < 2 || header != logits_header(classes) {
        return Err(Error::HeaderMismatch { path: path.to_path_buf(), found: header.to_string() });
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != classes + 1 {
            return Err(parse_error(path, lineno, format!("expected {} fields, got {}", classes + 1, fields.len())));
        }
        let id: u64 = fields[0].parse().map_err(|e| parse_error(path, lineno, format!("image id {:?}: {e}", fields[0])))?;
        if ids.last().is_some_and(|&last| id <= last) {
            return Err(parse_error(path, lineno, format!("image id {id} is not above the previous row")));
        }
        ids.push(id);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|e| parse_error(path, lineno, format!("value {f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, lineno, format!("non-finite value {f:?}")));
            }
            data.push(v);
        }
    }
    let logits = Tensor::new(vec![ids.len(), classes], data)?;
    LogitMatrix::new(ids, logits, model_tag)
}

pub fn save_logits(m: &LogitMatrix, path: &Path) -> Result<()> {
    write_file(path, render_logits(m))?;
    Ok(())
}

/// Loads a logit file; the model tag is the file stem.
pub fn load_logits(path: &Path) -> Result<LogitMatrix> {
    let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_logits(&read_text(path)?, path, &tag)
}

pub fn render_predictions(ids: &[u64], labels: &[usize]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for (id, l) in ids.iter().zip(labels) {
        writeln!(out, "{id},{l}").unwrap();
    }
    out
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<(Vec<u64>, Vec<usize>)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != PREDICTIONS_HEADER {
        return Err(Error::HeaderMismatch { path: path.to_path_buf(), found: header.to_string() });
    }
    let (mut ids, mut labels) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        if line.is_empty() {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| parse_error(path, lineno, "expected image_id,label"))?;
        ids.push(id.parse().map_err(|e| parse_error(path, lineno, format!("image id {id:?}: {e}")))?);
        labels.push(label.parse().map_err(|e| parse_error(path, lineno, format!("label {label:?}: {e}")))?);
    }
    Ok((ids, labels))
}

pub fn save_predictions(ids: &[u64], labels: &[usize], path: &Path) -> Result<()> {
    write_file(path, render_predictions(ids, labels))?;
    Ok(())
}

/// Reads `image_id,label` rows, or the labels of a binary dataset file (ids `0..N`).
pub fn load_labels(path: &Path) -> Result<(Vec<u64>, Vec<usize>)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"FGFD") {
        let ds = Dataset::from_bytes(&bytes, path)?;
        return Ok(((0..ds.len() as u64).collect(), ds.labels));
    }
    let text = String::from_utf8(bytes).map_err(|_| parse_error(path, 1, "not UTF-8 text"))?;
    parse_predictions(&text, path)
}
