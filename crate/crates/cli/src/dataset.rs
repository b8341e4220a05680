//! Minimal-pair datasets in the CrowS-Pairs table layout.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use bias_attribution_core::ChallengePair;
use unicode_normalization::UnicodeNormalization;

use crate::error::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Auto,
    Comma,
    Tab,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFormat {
    pub delimiter: Delimiter,
    pub sent_more_column: String,
    pub sent_less_column: String,
    pub dimension_column: String,
    /// Column holding pair ids. When `None`, a column named `id` is used if
    /// present; otherwise ids are 0-based row numbers.
    pub id_column: Option<String>,
    /// Allowed dimension labels; `None` accepts any non-empty label.
    pub dimensions: Option<Vec<String>>,
}

impl Default for DatasetFormat {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Auto,
            sent_more_column: "sent_more".to_string(),
            sent_less_column: "sent_less".to_string(),
            dimension_column: "bias_type".to_string(),
            id_column: None,
            dimensions: None,
        }
    }
}

/// A row rejected during parsing. `row` is the 0-based data row number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedDataset {
    pub pairs: Vec<ChallengePair>,
    pub row_errors: Vec<RowError>,
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.matches('\t').count() > header.matches(',').count() {
        b'\t'
    } else {
        b','
    }
}

fn normalize(s: &str) -> String {
    s.nfc().collect()
}

pub fn parse_dataset<R: Read>(mut source: R, format: &DatasetFormat) -> Result<ParsedDataset, DatasetError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let delimiter = match format.delimiter {
        Delimiter::Auto => sniff_delimiter(text),
        Delimiter::Comma => b',',
        Delimiter::Tab => b'\t',
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);

    let required = [
        &format.sent_more_column,
        &format.sent_less_column,
        &format.dimension_column,
    ];
    let mut missing: Vec<String> = required
        .iter()
        .filter(|c| column(c).is_none())
        .map(|c| c.to_string())
        .collect();
    let id_column = match &format.id_column {
        Some(name) => match column(name) {
            Some(i) => Some(i),
            None => {
                missing.push(name.clone());
                None
            }
        },
        None => column("id"),
    };
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns(missing));
    }
    let (more_col, less_col, dim_col) = (
        column(&format.sent_more_column).unwrap(),
        column(&format.sent_less_column).unwrap(),
        column(&format.dimension_column).unwrap(),
    );
    let declared: Option<BTreeSet<&str>> = format
        .dimensions
        .as_ref()
        .map(|d| d.iter().map(String::as_str).collect());

    let mut parsed = ParsedDataset::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                parsed.row_errors.push(RowError { row, id: None, message: e.to_string() });
                continue;
            }
        };
        let field = |i: usize| record.get(i).map(normalize);
        let id = match id_column {
            Some(i) => field(i).unwrap_or_default().trim().to_string(),
            None => row.to_string(),
        };
        *seen.entry(id.clone()).or_default() += 1;
        let reject = |message: String| RowError { row, id: Some(id.clone()), message };

        let (Some(sent_more), Some(sent_less), Some(dimension)) = (field(more_col), field(less_col), field(dim_col)) else {
            parsed.row_errors.push(reject(format!(
                "expected at least {} field(s), found {}",
                more_col.max(less_col).max(dim_col) + 1,
                record.len()
            )));
            continue;
        };
        let dimension = dimension.trim().to_string();
        if id.is_empty() {
            parsed.row_errors.push(reject("empty pair id".to_string()));
        } else if sent_more.trim().is_empty() || sent_less.trim().is_empty() {
            parsed.row_errors.push(reject("empty sentence".to_string()));
        } else if sent_more == sent_less {
            parsed.row_errors.push(reject("sent_more and sent_less are identical".to_string()));
        } else if dimension.is_empty() {
            parsed.row_errors.push(reject("empty bias dimension".to_string()));
        } else if declared.as_ref().is_some_and(|d| !d.contains(dimension.as_str())) {
            parsed.row_errors.push(reject(format!("undeclared bias dimension {dimension:?}")));
        } else {
            parsed.pairs.push(ChallengePair { id, sent_more, sent_less, dimension });
        }
    }

    let duplicates: Vec<String> = seen.into_iter().filter(|(_, n)| *n > 1).map(|(id, _)| id).collect();
    if !duplicates.is_empty() {
        return Err(DatasetError::DuplicateIds(duplicates));
    }
    Ok(parsed)
}
