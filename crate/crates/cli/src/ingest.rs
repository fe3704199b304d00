//! CSV ingestion: one sample per row, one feature per column, with an
//! optional label column.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use psman_core::Mat;

use crate::error::IngestError;

/// Which column, if any, holds class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    /// 0-based class index per row.
    pub indices: Vec<usize>,
    /// Original label text per class index.
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x: Mat,
    pub labels: Option<Labels>,
    /// Feature column names when a header was present.
    pub header: Option<Vec<String>>,
}

pub fn read_path(path: &Path, has_header: bool, label: Option<&LabelColumn>) -> Result<Table, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io(e.to_string()))?;
    read(file, has_header, label)
}

/// 1-based line on which a record's text starts. The reader's own position
/// can point at blank lines it skipped, so they are stepped over here.
fn line_of(text: &[u8], rec: &csv::StringRecord, index: usize) -> usize {
    let Some(pos) = rec.position() else {
        return index + 1;
    };
    let mut at = (pos.byte() as usize).min(text.len());
    while at < text.len() && (text[at] == b'\n' || text[at] == b'\r') {
        at += 1;
    }
    1 + text[..at].iter().filter(|&&b| b == b'\n').count()
}

pub fn read<R: Read>(mut input: R, has_header: bool, label: Option<&LabelColumn>) -> Result<Table, IngestError> {
    let mut text = Vec::new();
    input.read_to_end(&mut text).map_err(|e| IngestError::Io(e.to_string()))?;
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_slice());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Malformed { row: i + 1, msg: e.to_string() })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((line_of(&text, &rec, i), rec));
    }

    let header = if has_header && !records.is_empty() {
        Some(records.remove(0).1.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let Some((_, first)) = records.first() else {
        return Err(IngestError::EmptyFile);
    };
    let width = header.as_ref().map_or(first.len(), Vec::len);
    for (row, rec) in &records {
        if rec.len() != width {
            return Err(IngestError::MixedColumnCount { row: *row, expected: width, found: rec.len() });
        }
    }

    let label_idx = match label {
        None => None,
        Some(LabelColumn::Last) => Some(width - 1),
        Some(LabelColumn::Named(name)) => {
            let h = header.as_ref().ok_or_else(|| IngestError::MissingLabelColumn(name.clone()))?;
            Some(h.iter().position(|c| c == name).ok_or_else(|| IngestError::MissingLabelColumn(name.clone()))?)
        }
    };
    let features: Vec<usize> = (0..width).filter(|&c| Some(c) != label_idx).collect();
    if features.is_empty() {
        return Err(IngestError::NoFeatures);
    }

    let mut x = Mat::zeros(records.len(), features.len());
    for (i, (row, rec)) in records.iter().enumerate() {
        for (j, &c) in features.iter().enumerate() {
            let cell = &rec[c];
            x[(i, j)] = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return Err(IngestError::ParseError { row: *row, col: c + 1, value: cell.to_string() }),
            };
        }
    }

    let labels = label_idx.map(|c| {
        let raw: Vec<&str> = records.iter().map(|(_, rec)| &rec[c]).collect();
        encode_labels(&raw)
    });
    let header = header.map(|h| features.iter().map(|&c| h[c].clone()).collect());
    Ok(Table { x, labels, header })
}

/// Dense class indices. Integer labels are ordered numerically; any other
/// labels are numbered in order of first appearance.
pub fn encode_labels(raw: &[&str]) -> Labels {
    let mut classes: Vec<String> = Vec::new();
    for &r in raw {
        if !classes.iter().any(|c| c == r) {
            classes.push(r.to_string());
        }
    }
    let numeric: Option<Vec<i64>> = classes.iter().map(|c| c.parse::<i64>().ok()).collect();
    if let Some(values) = numeric {
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by_key(|&i| values[i]);
        classes = order.into_iter().map(|i| classes[i].clone()).collect();
    }
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    Labels { indices: raw.iter().map(|r| index[r]).collect(), classes }
}

/// Reads a single-column label file and maps it onto known class names.
pub fn read_label_file(path: &Path, has_header: bool, classes: &[String]) -> Result<Vec<usize>, IngestError> {
    let text = std::fs::read(path).map_err(|e| IngestError::Io(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let offset = if has_header { 2 } else { 1 };
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Malformed { row: i + offset, msg: e.to_string() })?;
        let row = line_of(&text, &rec, i + offset - 1);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 1 {
            return Err(IngestError::MixedColumnCount { row, expected: 1, found: rec.len() });
        }
        let idx = classes.iter().position(|c| c == &rec[0]).ok_or_else(|| IngestError::Malformed {
            row,
            msg: format!("label `{}` does not occur in the source data", &rec[0]),
        })?;
        out.push(idx);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(out)
}
