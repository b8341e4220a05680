//! Rendering of attribution tables, bias-score reports and semantic summaries
//! as JSON, CSV and Markdown.
//!
//! JSON keeps full precision. CSV and Markdown show `b(u)` with four decimals,
//! switching to scientific notation for magnitudes below 1e-4, and
//! percentages with two decimals.

use std::collections::BTreeMap;
use std::str::FromStr;

use bias_attribution_core::{
    AlignedPair, AttributionRecord, BiasScoreReport, PairPreference, SemanticSummary,
    SubwordBreakdown, TagLexicon,
};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "markdown",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format {other:?} (expected json, csv or markdown)")),
        }
    }
}

/// Shown in place of a missing lexicon translation.
pub const MISSING_TRANSLATION: &str = "?";

pub fn format_b(b: f64) -> String {
    if b == 0.0 {
        return "0.0000".to_string();
    }
    if b.abs() < 1e-4 {
        format!("{b:.2e}")
    } else {
        format!("{b:.4}")
    }
}

pub fn format_pct(p: f64) -> String {
    format!("{p:.2}")
}

/// JSON has no infinities; `-inf` log-likelihoods are written as a string.
fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(if x < 0.0 { "-inf" } else { "inf" }.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn to_markdown(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", header.iter().map(|_| " --- |").collect::<String>()));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| md_cell(c)).collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out
}

/// One rendered row of an attribution table.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionRow {
    pub word: String,
    pub translation: Option<String>,
    pub b: f64,
    pub direction: &'static str,
    pub tags: Vec<String>,
}

impl AttributionRow {
    pub fn new(record: &AttributionRecord, lexicon: Option<&TagLexicon>) -> Self {
        let word = record.surface();
        Self {
            word: word.to_string(),
            translation: lexicon.and_then(|l| l.translation(word)).map(str::to_string),
            b: record.b_word,
            direction: record.direction.label(),
            tags: lexicon
                .map(|l| l.tags_for(word).into_iter().map(str::to_string).collect())
                .unwrap_or_default(),
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.word.clone(),
            self.translation.clone().unwrap_or_else(|| MISSING_TRANSLATION.to_string()),
            format_b(self.b),
            self.direction.to_string(),
            self.tags.join("; "),
        ]
    }
}

const ATTRIBUTION_HEADER: [&str; 5] = ["word", "translation", "b(u)", "direction", "tags"];

/// Everything rendered for one pair.
pub struct PairTable<'a> {
    pub aligned: &'a AlignedPair,
    pub records: &'a [AttributionRecord],
    pub preference: Option<&'a PairPreference>,
    pub errors: &'a [String],
    pub lexicon: Option<&'a TagLexicon>,
}

fn side_json(probes: &[bias_attribution_core::SideProbe]) -> Value {
    Value::Array(
        probes
            .iter()
            .map(|s| {
                serde_json::json!({
                    "token_index": s.token_index,
                    "surface": s.token.surface,
                    "p": json_number(s.p.value()),
                    "distance": json_number(s.distance),
                })
            })
            .collect(),
    )
}

fn record_json(record: &AttributionRecord, row: &AttributionRow) -> Value {
    let mut word = serde_json::json!({
        "word": row.word,
        "position_more": record.word_more.position,
        "position_less": record.word_less.position,
        "translation": row.translation,
        "b": json_number(row.b),
        "direction": row.direction,
        "tags": row.tags,
    });
    let detail = match &record.breakdown {
        SubwordBreakdown::Paired(scores) => (
            "subwords",
            Value::Array(
                scores
                    .iter()
                    .map(|s| {
                        serde_json::json!({
                            "surface": s.token.surface,
                            "p_more": json_number(s.p_more.value()),
                            "p_less": json_number(s.p_less.value()),
                            "b": json_number(s.b),
                        })
                    })
                    .collect(),
            ),
        ),
        SubwordBreakdown::Asymmetric { more, less } => (
            "asymmetric",
            serde_json::json!({ "more": side_json(more), "less": side_json(less) }),
        ),
    };
    word[detail.0] = detail.1;
    word
}

fn preference_json(p: &PairPreference) -> Value {
    serde_json::json!({
        "ll_more": json_number(p.ll_more),
        "ll_less": json_number(p.ll_less),
        "preferred": p.preferred.as_str(),
    })
}

impl PairTable<'_> {
    pub fn rows(&self) -> Vec<AttributionRow> {
        self.records.iter().map(|r| AttributionRow::new(r, self.lexicon)).collect()
    }

    pub fn render(&self, format: Format) -> String {
        let rows = self.rows();
        match format {
            Format::Csv => to_csv(&ATTRIBUTION_HEADER, rows.iter().map(AttributionRow::cells)),
            Format::Markdown => {
                let mut out = format!(
                    "### Pair {} ({})\n\n- more: {}\n- less: {}\n\n",
                    md_cell(&self.aligned.pair_id),
                    md_cell(&self.aligned.dimension),
                    md_cell(&self.aligned.sent_more),
                    md_cell(&self.aligned.sent_less),
                );
                out.push_str(&to_markdown(&ATTRIBUTION_HEADER, rows.iter().map(AttributionRow::cells)));
                for e in self.errors {
                    out.push_str(&format!("\n> error: {}\n", md_cell(e)));
                }
                out
            }
            Format::Json => {
                let words: Vec<Value> = self
                    .records
                    .iter()
                    .zip(&rows)
                    .map(|(r, row)| record_json(r, row))
                    .collect();
                to_json(&serde_json::json!({
                    "pair_id": self.aligned.pair_id,
                    "dimension": self.aligned.dimension,
                    "sent_more": self.aligned.sent_more,
                    "sent_less": self.aligned.sent_less,
                    "modified_more": self.aligned.modified_more.iter().map(|w| &w.surface).collect::<Vec<_>>(),
                    "modified_less": self.aligned.modified_less.iter().map(|w| &w.surface).collect::<Vec<_>>(),
                    "preference": self.preference.map(preference_json),
                    "words": words,
                    "errors": self.errors,
                }))
            }
        }
    }
}

pub fn render_bias_report(report: &BiasScoreReport, preferences: &[PairPreference], format: Format) -> String {
    let header = ["dimension", "score", "pairs", "more", "ties"];
    let mut rows: Vec<Vec<String>> = report
        .per_dimension
        .iter()
        .map(|(dim, s)| {
            vec![
                dim.clone(),
                format_pct(s.score),
                s.pair_count.to_string(),
                s.more_count.to_string(),
                s.tie_count.to_string(),
            ]
        })
        .collect();
    let more_total: usize = report.per_dimension.values().map(|s| s.more_count).sum();
    rows.push(vec![
        "overall".to_string(),
        report.overall.map(format_pct).unwrap_or_default(),
        report.pair_count.to_string(),
        more_total.to_string(),
        report.tie_count.to_string(),
    ]);
    match format {
        Format::Csv => to_csv(&header, rows),
        Format::Markdown => to_markdown(&header, rows),
        Format::Json => {
            let per_dimension: BTreeMap<&str, Value> = report
                .per_dimension
                .iter()
                .map(|(dim, s)| {
                    (
                        dim.as_str(),
                        serde_json::json!({
                            "score": json_number(s.score),
                            "pairs": s.pair_count,
                            "more": s.more_count,
                            "ties": s.tie_count,
                        }),
                    )
                })
                .collect();
            let pairs: Vec<Value> = preferences
                .iter()
                .map(|p| {
                    let mut v = preference_json(p);
                    v["pair_id"] = Value::String(p.pair_id.clone());
                    v
                })
                .collect();
            to_json(&serde_json::json!({
                "overall": report.overall.map(json_number),
                "pair_count": report.pair_count,
                "tie_count": report.tie_count,
                "per_dimension": per_dimension,
                "pairs": pairs,
            }))
        }
    }
}

pub fn render_semantics(rows: &[SemanticSummary], format: Format) -> String {
    match format {
        Format::Markdown => to_markdown(
            &["Tag", "↑ bias", "∘ bias", "↓ bias"],
            rows.iter().map(|s| {
                vec![
                    s.tag.clone(),
                    format_pct(s.pct_up),
                    format_pct(s.pct_zero),
                    format_pct(s.pct_down),
                ]
            }),
        ),
        Format::Csv => to_csv(
            &["tag", "up_pct", "zero_pct", "down_pct", "n_up", "n_zero", "n_down"],
            rows.iter().map(|s| {
                vec![
                    s.tag.clone(),
                    format_pct(s.pct_up),
                    format_pct(s.pct_zero),
                    format_pct(s.pct_down),
                    s.n_up.to_string(),
                    s.n_zero.to_string(),
                    s.n_down.to_string(),
                ]
            }),
        ),
        Format::Json => to_json(&Value::Array(
            rows.iter()
                .map(|s| {
                    serde_json::json!({
                        "tag": s.tag,
                        "up_pct": json_number(s.pct_up),
                        "zero_pct": json_number(s.pct_zero),
                        "down_pct": json_number(s.pct_down),
                        "n_up": s.n_up,
                        "n_zero": s.n_zero,
                        "n_down": s.n_down,
                    })
                })
                .collect(),
        )),
    }
}
