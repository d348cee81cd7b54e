//! Tables, column types and multi-sequence metadata.
//!
//! A dataset is a single mixed-type table in which a sequence-key column
//! assigns every row to one sequence. Context columns are constant inside a
//! sequence; an optional sequence-index column orders the rows of each one.
//! `validate` enforces those invariants and `partition_sequences` splits the
//! table into per-sequence views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};

/// The type a column declares in the metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Discrete,
    Categorical,
    Datetime,
    Boolean,
}

impl ColumnKind {
    /// True for kinds whose cells carry a number after validation.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            ColumnKind::Continuous | ColumnKind::Discrete | ColumnKind::Datetime
        )
    }

    /// Boolean columns go down the categorical path after validation.
    pub fn is_categorical(self) -> bool {
        matches!(self, ColumnKind::Categorical | ColumnKind::Boolean)
    }
}

/// One typed cell. Datetimes become epoch seconds at validation so every
/// numeric kind shares a total order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Numeric view of the cell, if it has one.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Missing => Ok(()),
        }
    }
}

/// Output format for a datetime column, detected from the first parseable
/// cell and reused when writing synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatetimeFormat {
    /// Plain integer epoch seconds.
    Epoch,
    /// RFC 3339, e.g. `2024-01-31T08:30:00Z`.
    Rfc3339,
    /// `2024-01-31 08:30:00`
    DateTime,
    /// `2024-01-31`
    Date,
}

impl DatetimeFormat {
    fn try_parse(text: &str) -> Option<(i64, DatetimeFormat)> {
        let t = text.trim();
        if let Ok(v) = t.parse::<i64>() {
            return Some((v, DatetimeFormat::Epoch));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
            return Some((dt.timestamp(), DatetimeFormat::Rfc3339));
        }
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S") {
            return Some((dt.and_utc().timestamp(), DatetimeFormat::DateTime));
        }
        if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
            return Some((
                d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp(),
                DatetimeFormat::Date,
            ));
        }
        None
    }

    /// Renders epoch seconds back into this format.
    pub fn render(self, epoch: i64) -> String {
        match self {
            DatetimeFormat::Epoch => epoch.to_string(),
            DatetimeFormat::Rfc3339 => DateTime::<Utc>::from_timestamp(epoch, 0)
                .map(|dt| dt.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
                .unwrap_or_else(|| epoch.to_string()),
            DatetimeFormat::DateTime => DateTime::<Utc>::from_timestamp(epoch, 0)
                .map(|dt| dt.format("%Y-%m-%d %H:%M:%S").to_string())
                .unwrap_or_else(|| epoch.to_string()),
            DatetimeFormat::Date => DateTime::<Utc>::from_timestamp(epoch, 0)
                .map(|dt| dt.format("%Y-%m-%d").to_string())
                .unwrap_or_else(|| epoch.to_string()),
        }
    }
}

/// Declares how the table is structured: which column keys the sequences,
/// which one orders rows, which ones are per-sequence constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub sequence_key: String,
    #[serde(default)]
    pub sequence_index: Option<String>,
    #[serde(default)]
    pub context_columns: BTreeSet<String>,
    pub column_types: BTreeMap<String, ColumnKind>,
}

impl Metadata {
    /// Reads a metadata JSON document.
    pub fn from_json(text: &str) -> Result<Metadata> {
        let meta: Metadata = serde_json::from_str(text)?;
        meta.check()?;
        Ok(meta)
    }

    pub fn from_path(path: &Path) -> Result<Metadata> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Metadata::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        if self.context_columns.contains(&self.sequence_key) {
            return Err(SynthError::InvalidMetadata(format!(
                "sequence key '{}' cannot be a context column",
                self.sequence_key
            )));
        }
        if let Some(index) = &self.sequence_index {
            if *index == self.sequence_key {
                return Err(SynthError::InvalidMetadata(
                    "sequence key and sequence index must be different columns".into(),
                ));
            }
            if self.context_columns.contains(index) {
                return Err(SynthError::InvalidMetadata(format!(
                    "sequence index '{index}' cannot be a context column"
                )));
            }
            match self.column_types.get(index) {
                Some(kind) if kind.is_numeric() => {}
                Some(_) => {
                    return Err(SynthError::UnorderableIndex {
                        column: index.clone(),
                        reason: "index column must be numeric or datetime".into(),
                    })
                }
                None => return Err(SynthError::UnknownColumn(index.clone())),
            }
        }
        Ok(())
    }

    /// Column type lookup that treats the sequence key as opaque.
    pub fn kind_of(&self, column: &str) -> Option<ColumnKind> {
        self.column_types.get(column).copied()
    }
}

/// A raw table straight out of a CSV reader: header plus untyped text cells,
/// `None` marking empty cells.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<RawTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = rdr
            .headers()?
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(
                record
                    .iter()
                    .map(|cell| {
                        if cell.is_empty() {
                            None
                        } else {
                            Some(cell.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(RawTable { header, rows })
    }

    pub fn from_path(path: &Path) -> Result<RawTable> {
        RawTable::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// A validated dataset: typed cells, per-sequence index order enforced,
/// context constancy checked.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub metadata: Metadata,
    /// Render format for each datetime column, detected during validation.
    pub datetime_formats: BTreeMap<String, DatetimeFormat>,
}

/// One sequence pulled out of a dataset. Steps carry only the time-varying
/// columns; the context record holds the per-sequence constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub key: String,
    /// Context cells, aligned with `Dataset::context_column_order`.
    pub context: Vec<Value>,
    /// Step cells, aligned with `Dataset::step_column_order`.
    pub steps: Vec<Vec<Value>>,
}

impl Dataset {
    /// Context columns in header order.
    pub fn context_column_order(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| self.metadata.context_columns.contains(*c))
            .cloned()
            .collect()
    }

    /// Time-varying columns (everything except the key and the context) in
    /// header order. Includes the sequence index when present.
    pub fn step_column_order(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| **c != self.metadata.sequence_key)
            .filter(|c| !self.metadata.context_columns.contains(*c))
            .cloned()
            .collect()
    }

    fn column_pos(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SynthError::UnknownColumn(name.to_string()))
    }

    /// Number of distinct sequence keys.
    pub fn sequence_count(&self) -> usize {
        let key_pos = self
            .columns
            .iter()
            .position(|c| *c == self.metadata.sequence_key)
            .unwrap_or(0);
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            seen.insert(row[key_pos].to_string());
        }
        seen.len()
    }
}

fn parse_cell(
    kind: ColumnKind,
    raw: &str,
    line: usize,
    column: &str,
) -> Result<(Value, Option<DatetimeFormat>)> {
    let bad = |reason: String| SynthError::BadCell {
        line,
        column: column.to_string(),
        reason,
    };
    match kind {
        ColumnKind::Continuous => {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| bad(format!("'{raw}' is not a real number")))?;
            if !v.is_finite() {
                return Err(bad(format!("'{raw}' is not finite")));
            }
            Ok((Value::Float(v), None))
        }
        ColumnKind::Discrete => {
            let t = raw.trim();
            let v: i64 = match t.parse::<i64>() {
                Ok(v) => v,
                Err(_) => {
                    let f: f64 = t
                        .parse()
                        .map_err(|_| bad(format!("'{raw}' is not an integer")))?;
                    if !f.is_finite() || (f - f.round()).abs() > 1e-9 {
                        return Err(bad(format!("'{raw}' is not an integer")));
                    }
                    f.round() as i64
                }
            };
            Ok((Value::Int(v), None))
        }
        ColumnKind::Categorical => Ok((Value::Text(raw.to_string()), None)),
        ColumnKind::Boolean => {
            let canon = match raw.trim().to_ascii_lowercase().as_str() {
                "true" | "t" | "yes" | "1" => "True",
                "false" | "f" | "no" | "0" => "False",
                _ => return Err(bad(format!("'{raw}' is not a boolean"))),
            };
            Ok((Value::Text(canon.to_string()), None))
        }
        ColumnKind::Datetime => {
            let (epoch, format) = DatetimeFormat::try_parse(raw)
                .ok_or_else(|| bad(format!("'{raw}' is not a recognized datetime")))?;
            Ok((Value::Int(epoch), Some(format)))
        }
    }
}

/// Validates a raw table against its metadata and produces a typed dataset.
///
/// Rows within each sequence end up sorted by the sequence index (stable, so
/// ties keep file order); without an index they keep file order outright.
pub fn validate(raw: &RawTable, metadata: &Metadata) -> Result<Dataset> {
    metadata.check()?;
    for name in metadata
        .column_types
        .keys()
        .chain(std::iter::once(&metadata.sequence_key))
        .chain(metadata.context_columns.iter())
    {
        if !raw.header.contains(name) {
            return Err(SynthError::UnknownColumn(name.clone()));
        }
    }
    for name in raw.header.iter().filter(|c| **c != metadata.sequence_key) {
        if !metadata.column_types.contains_key(name) {
            return Err(SynthError::UnknownColumn(format!(
                "{name} (present in the data but missing from column_types)"
            )));
        }
    }

    let key_pos = raw
        .header
        .iter()
        .position(|c| *c == metadata.sequence_key)
        .expect("checked above");

    let mut datetime_formats: BTreeMap<String, DatetimeFormat> = BTreeMap::new();
    let mut rows: Vec<Vec<Value>> = Vec::with_capacity(raw.rows.len());
    for (row_idx, raw_row) in raw.rows.iter().enumerate() {
        let line = row_idx + 2; // header is line 1
        if raw_row.len() != raw.header.len() {
            return Err(SynthError::SchemaMismatch(format!(
                "line {line} has {} cells, header has {}",
                raw_row.len(),
                raw.header.len()
            )));
        }
        let mut row = Vec::with_capacity(raw_row.len());
        for (pos, cell) in raw_row.iter().enumerate() {
            let column = &raw.header[pos];
            if pos == key_pos {
                match cell {
                    Some(text) => row.push(Value::Text(text.clone())),
                    None => {
                        return Err(SynthError::BadCell {
                            line,
                            column: column.clone(),
                            reason: "sequence key cannot be missing".into(),
                        })
                    }
                }
                continue;
            }
            let kind = metadata.column_types[column];
            match cell {
                None => row.push(Value::Missing),
                Some(text) => {
                    let (value, format) = parse_cell(kind, text, line, column)?;
                    if let Some(format) = format {
                        datetime_formats.entry(column.clone()).or_insert(format);
                    }
                    row.push(value);
                }
            }
        }
        rows.push(row);
    }

    let dataset = Dataset {
        columns: raw.header.clone(),
        rows,
        metadata: metadata.clone(),
        datetime_formats,
    };
    enforce_sequence_invariants(dataset)
}

fn enforce_sequence_invariants(mut dataset: Dataset) -> Result<Dataset> {
    let key_pos = dataset.column_pos(&dataset.metadata.sequence_key)?;
    let index_pos = match &dataset.metadata.sequence_index {
        Some(index) => Some(dataset.column_pos(index)?),
        None => None,
    };
    let context_pos: Vec<usize> = dataset
        .context_column_order()
        .iter()
        .map(|c| dataset.column_pos(c))
        .collect::<Result<_>>()?;

    // Group row indices per key, in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in dataset.rows.iter().enumerate() {
        let key = row[key_pos].to_string();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key.clone());
                Vec::new()
            })
            .push(i);
    }

    for key in &order {
        let members = &groups[key];
        for &pos in &context_pos {
            let first = &dataset.rows[members[0]][pos];
            if members
                .iter()
                .any(|&i| dataset.rows[i][pos] != *first)
            {
                return Err(SynthError::NonConstantContext {
                    column: dataset.columns[pos].clone(),
                    key: key.clone(),
                });
            }
        }
        if let Some(pos) = index_pos {
            for &i in members {
                if dataset.rows[i][pos].is_missing() {
                    return Err(SynthError::UnorderableIndex {
                        column: dataset.columns[pos].clone(),
                        reason: format!("missing index value in sequence '{key}'"),
                    });
                }
            }
        }
    }

    if let Some(pos) = index_pos {
        let mut sorted_rows = Vec::with_capacity(dataset.rows.len());
        for key in &order {
            let mut members = groups[key].clone();
            members.sort_by(|&a, &b| {
                let va = dataset.rows[a][pos].as_f64().unwrap_or(f64::NAN);
                let vb = dataset.rows[b][pos].as_f64().unwrap_or(f64::NAN);
                va.partial_cmp(&vb).unwrap_or(std::cmp::Ordering::Equal)
            });
            for i in members {
                sorted_rows.push(dataset.rows[i].clone());
            }
        }
        dataset.rows = sorted_rows;
    } else {
        // Keep file order but group rows by key so sequences are contiguous.
        let mut grouped = Vec::with_capacity(dataset.rows.len());
        for key in &order {
            for &i in &groups[key] {
                grouped.push(dataset.rows[i].clone());
            }
        }
        dataset.rows = grouped;
    }

    Ok(dataset)
}

/// Splits a validated dataset into one `Sequence` per distinct key.
///
/// The union of all steps is exactly the input rows; per-sequence order is
/// whatever `validate` established.
pub fn partition_sequences(dataset: &Dataset) -> Vec<Sequence> {
    let key_pos = dataset
        .columns
        .iter()
        .position(|c| *c == dataset.metadata.sequence_key)
        .expect("validated dataset");
    let context_cols = dataset.context_column_order();
    let step_cols = dataset.step_column_order();
    let context_pos: Vec<usize> = context_cols
        .iter()
        .map(|c| dataset.columns.iter().position(|x| x == c).unwrap())
        .collect();
    let step_pos: Vec<usize> = step_cols
        .iter()
        .map(|c| dataset.columns.iter().position(|x| x == c).unwrap())
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut sequences: BTreeMap<String, Sequence> = BTreeMap::new();
    for row in &dataset.rows {
        let key = row[key_pos].to_string();
        let seq = sequences.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Sequence {
                key: key.clone(),
                context: context_pos.iter().map(|&p| row[p].clone()).collect(),
                steps: Vec::new(),
            }
        });
        seq.steps
            .push(step_pos.iter().map(|&p| row[p].clone()).collect());
    }
    order
        .into_iter()
        .map(|key| sequences.remove(&key).unwrap())
        .collect()
}

/// Reassembles sequences into a flat table with the given column order.
/// Inverse of `partition_sequences` for tables that came from `validate`.
pub fn assemble_rows(
    columns: &[String],
    metadata: &Metadata,
    sequences: &[Sequence],
) -> Vec<Vec<Value>> {
    let context_cols: Vec<&String> = columns
        .iter()
        .filter(|c| metadata.context_columns.contains(*c))
        .collect();
    let step_cols: Vec<&String> = columns
        .iter()
        .filter(|c| **c != metadata.sequence_key)
        .filter(|c| !metadata.context_columns.contains(*c))
        .collect();

    let mut rows = Vec::new();
    for seq in sequences {
        for step in &seq.steps {
            let mut row = Vec::with_capacity(columns.len());
            for col in columns {
                if *col == metadata.sequence_key {
                    row.push(Value::Text(seq.key.clone()));
                } else if let Some(i) = context_cols.iter().position(|c| *c == col) {
                    row.push(seq.context[i].clone());
                } else {
                    let i = step_cols.iter().position(|c| *c == col).unwrap();
                    row.push(step[i].clone());
                }
            }
            rows.push(row);
        }
    }
    rows
}

/// Writes a dataset-shaped table to CSV, rendering datetimes with their
/// detected formats and missing cells as empty fields.
pub fn write_csv<W: std::io::Write>(
    writer: W,
    columns: &[String],
    rows: &[Vec<Value>],
    metadata: &Metadata,
    datetime_formats: &BTreeMap<String, DatetimeFormat>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(columns)?;
    for row in rows {
        let mut record = Vec::with_capacity(columns.len());
        for (col, value) in columns.iter().zip(row) {
            let is_datetime = metadata.kind_of(col) == Some(ColumnKind::Datetime);
            let text = match value {
                Value::Missing => String::new(),
                Value::Int(epoch) if is_datetime => datetime_formats
                    .get(col)
                    .copied()
                    .unwrap_or(DatetimeFormat::Epoch)
                    .render(*epoch),
                other => other.to_string(),
            };
            record.push(text);
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(
        key: &str,
        index: Option<&str>,
        context: &[&str],
        types: &[(&str, ColumnKind)],
    ) -> Metadata {
        Metadata {
            sequence_key: key.to_string(),
            sequence_index: index.map(|s| s.to_string()),
            context_columns: context.iter().map(|s| s.to_string()).collect(),
            column_types: types
                .iter()
                .map(|(n, k)| (n.to_string(), *k))
                .collect(),
        }
    }

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| {
                            if c.is_empty() {
                                None
                            } else {
                                Some(c.to_string())
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn two_patients_with_constant_sex_split_into_two_sequences() {
        let table = raw(
            &["patient", "sex", "hr"],
            &[
                &["p0", "M", "60"],
                &["p0", "M", "62"],
                &["p0", "M", "61"],
                &["p1", "F", "70"],
                &["p1", "F", "72"],
                &["p1", "F", "71"],
            ],
        );
        let metadata = meta(
            "patient",
            None,
            &["sex"],
            &[
                ("sex", ColumnKind::Categorical),
                ("hr", ColumnKind::Continuous),
            ],
        );
        let dataset = validate(&table, &metadata).unwrap();
        let sequences = partition_sequences(&dataset);
        assert_eq!(sequences.len(), 2);
        assert_eq!(sequences[0].steps.len(), 3);
        assert_eq!(sequences[0].context, vec![Value::Text("M".into())]);
        assert_eq!(sequences[1].context, vec![Value::Text("F".into())]);
    }

    #[test]
    fn single_row_table_is_one_sequence_of_length_one() {
        let table = raw(&["k", "v"], &[&["a", "1.5"]]);
        let metadata = meta("k", None, &[], &[("v", ColumnKind::Continuous)]);
        let dataset = validate(&table, &metadata).unwrap();
        let sequences = partition_sequences(&dataset);
        assert_eq!(sequences.len(), 1);
        assert_eq!(sequences[0].steps.len(), 1);
    }

    #[test]
    fn varying_context_column_is_rejected() {
        let table = raw(
            &["k", "sector", "v"],
            &[&["a", "tech", "1"], &["a", "energy", "2"]],
        );
        let metadata = meta(
            "k",
            None,
            &["sector"],
            &[
                ("sector", ColumnKind::Categorical),
                ("v", ColumnKind::Continuous),
            ],
        );
        let err = validate(&table, &metadata).unwrap_err();
        assert!(matches!(err, SynthError::NonConstantContext { .. }));
    }

    #[test]
    fn unknown_metadata_column_is_rejected() {
        let table = raw(&["k", "v"], &[&["a", "1"]]);
        let metadata = meta(
            "k",
            None,
            &[],
            &[
                ("v", ColumnKind::Continuous),
                ("ghost", ColumnKind::Continuous),
            ],
        );
        assert!(matches!(
            validate(&table, &metadata),
            Err(SynthError::UnknownColumn(_))
        ));
    }

    #[test]
    fn interleaved_keys_sort_by_index_within_sequence() {
        let table = raw(
            &["k", "t", "v"],
            &[
                &["A", "3", "30"],
                &["B", "2", "200"],
                &["A", "1", "10"],
                &["B", "1", "100"],
                &["A", "2", "20"],
            ],
        );
        let metadata = meta(
            "k",
            Some("t"),
            &[],
            &[("t", ColumnKind::Discrete), ("v", ColumnKind::Continuous)],
        );
        let dataset = validate(&table, &metadata).unwrap();
        let sequences = partition_sequences(&dataset);

        // Brute-force oracle: group rows by key, sort each group by t.
        let mut expect_a: Vec<(i64, f64)> = vec![(3, 30.0), (1, 10.0), (2, 20.0)];
        expect_a.sort_by_key(|&(t, _)| t);
        let got_a: Vec<(i64, f64)> = sequences[0]
            .steps
            .iter()
            .map(|s| match (&s[0], &s[1]) {
                (Value::Int(t), Value::Float(v)) => (*t, *v),
                _ => panic!("unexpected cell types"),
            })
            .collect();
        assert_eq!(got_a, expect_a);
        assert_eq!(sequences.len(), 2);
        assert_eq!(sequences[1].steps.len(), 2);
    }

    #[test]
    fn partition_roundtrip_restores_rows() {
        let table = raw(
            &["k", "c", "t", "v"],
            &[
                &["x", "1", "2", "0.5"],
                &["y", "2", "1", ""],
                &["x", "1", "1", "0.25"],
            ],
        );
        let metadata = meta(
            "k",
            Some("t"),
            &["c"],
            &[
                ("c", ColumnKind::Discrete),
                ("t", ColumnKind::Discrete),
                ("v", ColumnKind::Continuous),
            ],
        );
        let dataset = validate(&table, &metadata).unwrap();
        let sequences = partition_sequences(&dataset);
        let rows = assemble_rows(&dataset.columns, &dataset.metadata, &sequences);
        assert_eq!(rows, dataset.rows);
    }

    #[test]
    fn datetime_cells_become_epoch_seconds() {
        let table = raw(
            &["k", "when", "v"],
            &[
                &["a", "2024-01-02", "1"],
                &["a", "2024-01-01", "2"],
            ],
        );
        let metadata = meta(
            "k",
            Some("when"),
            &[],
            &[
                ("when", ColumnKind::Datetime),
                ("v", ColumnKind::Continuous),
            ],
        );
        let dataset = validate(&table, &metadata).unwrap();
        // Sorted by epoch: Jan 1 before Jan 2.
        assert_eq!(dataset.rows[0][1], Value::Int(1704067200));
        assert_eq!(dataset.rows[1][1], Value::Int(1704153600));
        assert_eq!(
            dataset.datetime_formats["when"],
            DatetimeFormat::Date
        );
    }

    #[test]
    fn boolean_cells_are_canonicalized() {
        let table = raw(&["k", "b"], &[&["a", "true"], &["a", "0"]]);
        let metadata = meta("k", None, &[], &[("b", ColumnKind::Boolean)]);
        let dataset = validate(&table, &metadata).unwrap();
        assert_eq!(dataset.rows[0][1], Value::Text("True".into()));
        assert_eq!(dataset.rows[1][1], Value::Text("False".into()));
    }

    #[test]
    fn duplicate_index_values_keep_file_order() {
        let table = raw(
            &["k", "t", "v"],
            &[&["a", "1", "first"], &["a", "1", "second"]],
        );
        let metadata = meta(
            "k",
            Some("t"),
            &[],
            &[
                ("t", ColumnKind::Discrete),
                ("v", ColumnKind::Categorical),
            ],
        );
        let dataset = validate(&table, &metadata).unwrap();
        assert_eq!(dataset.rows[0][2], Value::Text("first".into()));
        assert_eq!(dataset.rows[1][2], Value::Text("second".into()));
    }

    #[test]
    fn missing_index_cell_is_unorderable() {
        let table = raw(&["k", "t", "v"], &[&["a", "", "1"]]);
        let metadata = meta(
            "k",
            Some("t"),
            &[],
            &[("t", ColumnKind::Discrete), ("v", ColumnKind::Continuous)],
        );
        assert!(matches!(
            validate(&table, &metadata),
            Err(SynthError::UnorderableIndex { .. })
        ));
    }
}
