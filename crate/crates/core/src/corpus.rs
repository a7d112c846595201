//! Listing ingestion and text preprocessing.
//!
//! Raw listings arrive as local JSONL or CSV files (one record per listing:
//! `id`, `source_domain`, `raw_text`). Preprocessing normalizes Unicode,
//! strips HTML leftovers, lowercases, and collapses whitespace, producing the
//! `description` text every later stage works on.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// A listing exactly as crawled: mixed case, HTML artifacts, messy spacing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAd {
    pub id: String,
    pub source_domain: String,
    pub raw_text: String,
}

/// A listing after preprocessing: lowercased, HTML-free, single-spaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanAd {
    pub id: String,
    pub source_domain: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate ad id {0:?}")]
    DuplicateId(String),
    #[error("text empty after cleaning (id {0:?})")]
    EmptyAfterCleaning(String),
}

/// One skipped input record: line number (1-based) and what was wrong.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

/// Result of ingesting one file: parsed ads in input order plus the records
/// that were skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ingested {
    pub ads: Vec<RawAd>,
    pub skipped: Vec<LineIssue>,
}

impl Ingested {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

/// Read raw ads from a local file. Malformed records are skipped and
/// reported; a duplicate id aborts the whole ingestion.
pub fn ingest(path: &Path, format: InputFormat) -> Result<Ingested, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        InputFormat::Jsonl => ingest_jsonl(BufReader::new(file), path),
        InputFormat::Csv => ingest_csv(file),
    }
}

fn ingest_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Ingested, CorpusError> {
    let mut ads = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawAd>(&line) {
            Ok(ad) => validate_record(ad, line_no, &mut seen, &mut ads, &mut skipped)?,
            Err(e) => skipped.push(LineIssue {
                line: line_no,
                message: format!("malformed JSON: {e}"),
            }),
        }
    }
    Ok(Ingested { ads, skipped })
}

fn ingest_csv<R: std::io::Read>(reader: R) -> Result<Ingested, CorpusError> {
    let mut ads = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    for (idx, row) in rdr.deserialize::<RawAd>().enumerate() {
        let line_no = idx + 2; // header occupies line 1
        match row {
            Ok(ad) => validate_record(ad, line_no, &mut seen, &mut ads, &mut skipped)?,
            Err(e) => skipped.push(LineIssue {
                line: line_no,
                message: format!("malformed CSV row: {e}"),
            }),
        }
    }
    Ok(Ingested { ads, skipped })
}

fn validate_record(
    ad: RawAd,
    line_no: usize,
    seen: &mut HashSet<String>,
    ads: &mut Vec<RawAd>,
    skipped: &mut Vec<LineIssue>,
) -> Result<(), CorpusError> {
    if ad.id.is_empty() {
        skipped.push(LineIssue {
            line: line_no,
            message: "empty id".into(),
        });
        return Ok(());
    }
    if ad.raw_text.is_empty() {
        skipped.push(LineIssue {
            line: line_no,
            message: format!("empty raw_text (id {:?})", ad.id),
        });
        return Ok(());
    }
    if !seen.insert(ad.id.clone()) {
        return Err(CorpusError::DuplicateId(ad.id));
    }
    ads.push(ad);
    Ok(())
}

/// Write ads back out as JSONL (the inverse of `ingest` for that format).
pub fn write_jsonl(ads: &[RawAd], path: &Path) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|source| {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    })?);
    for ad in ads {
        let line = serde_json::to_string(ad).expect("RawAd serializes");
        writeln!(out, "{line}").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

// A break-like tag plus any separator punctuation just before it collapses
// into a single sentence boundary, e.g. ", <br/>" -> ". ".
static BREAK_TAG: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)(?:\s*[.,;:]?\s*(?:<\s*br\s*/?\s*>|</\s*p\s*>))+").unwrap());
static ANY_TAG: Lazy<Regex> = Lazy::new(|| Regex::new(r"<[^<>]*>").unwrap());

/// Preprocess one raw listing into its normalized description.
///
/// Steps, in order: Unicode NFC normalization; decoding of the five standard
/// HTML entities; removal of literal `\n`/`\t`/`\r` escape artifacts and real
/// control whitespace; `<br>`-style and `</p>` tags become ". " so sentence
/// boundaries survive; remaining `<...>` spans are dropped; lowercasing over
/// the full Unicode range; whitespace collapsed to single spaces.
pub fn preprocess(raw: &RawAd) -> Result<CleanAd, CorpusError> {
    let text: String = raw.raw_text.nfc().collect();

    // Entities first, so encoded tags become real tags and are stripped
    // below. `&amp;` must decode last.
    let text = text
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");

    // Literal two-character escape artifacts left by sloppy crawls.
    let text = text.replace("\\n", " ").replace("\\t", " ").replace("\\r", " ");
    let text = text
        .replace(['\n', '\t', '\r', '\u{00a0}'], " ")
        .replace('\u{200b}', "");

    let text = BREAK_TAG.replace_all(&text, ". ").into_owned();
    let mut text = text;
    loop {
        let stripped = ANY_TAG.replace_all(&text, "").into_owned();
        if stripped == text {
            break;
        }
        text = stripped;
    }

    let text = text.to_lowercase();
    let description = text.split_whitespace().collect::<Vec<_>>().join(" ");
    // Leading separators carry no content (a break tag at the start of the
    // text leaves an orphan ". ").
    let description = description
        .trim_start_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | ' '))
        .to_string();
    if description.is_empty() {
        return Err(CorpusError::EmptyAfterCleaning(raw.id.clone()));
    }
    Ok(CleanAd {
        id: raw.id.clone(),
        source_domain: raw.source_domain.clone(),
        description,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawAd {
        RawAd {
            id: "t".into(),
            source_domain: "example.test".into(),
            raw_text: text.into(),
        }
    }

    #[test]
    fn whitespace_collapse() {
        assert_eq!(preprocess(&raw("abc  def")).unwrap().description, "abc def");
    }

    #[test]
    fn tag_only_text_is_empty() {
        match preprocess(&raw("<br/>")) {
            Err(CorpusError::EmptyAfterCleaning(id)) => assert_eq!(id, "t"),
            other => panic!("expected EmptyAfterCleaning, got {other:?}"),
        }
    }

    #[test]
    fn lowercases_vietnamese() {
        assert_eq!(preprocess(&raw("Nguyễn Trãi")).unwrap().description, "nguyễn trãi");
    }

    #[test]
    fn entities_decode_and_encoded_tags_strip() {
        assert_eq!(
            preprocess(&raw("a &amp; b &lt;br&gt; c")).unwrap().description,
            "a & b. c"
        );
        assert_eq!(
            preprocess(&raw("x &lt;i&gt;y&lt;/i&gt; z")).unwrap().description,
            "x y z"
        );
    }

    #[test]
    fn break_tags_become_sentence_breaks() {
        assert_eq!(
            preprocess(&raw("Nhà 2 lầu.<br/>DT: 10x30m")).unwrap().description,
            "nhà 2 lầu. dt: 10x30m"
        );
        assert_eq!(
            preprocess(&raw("chợ rẫy, <br/> (10x28m)")).unwrap().description,
            "chợ rẫy. (10x28m)"
        );
    }

    #[test]
    fn literal_escapes_removed() {
        assert_eq!(preprocess(&raw("a\\nb\tc")).unwrap().description, "a b c");
    }

    #[test]
    fn idempotent_on_clean_text() {
        let once = preprocess(&raw("Bán <b>nhà</b>  MT,<br> quận 5")).unwrap();
        let twice = preprocess(&raw(&once.description)).unwrap();
        assert_eq!(once.description, twice.description);
    }

    #[test]
    fn ingest_single_jsonl_record() {
        let data = r#"{"id":"a1","source_domain":"d","raw_text":"bán nhà"}"#;
        let got = ingest_jsonl(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(got.ads.len(), 1);
        assert_eq!(got.ads[0].id, "a1");
        assert!(got.skipped.is_empty());
    }

    #[test]
    fn ingest_duplicate_id_is_hard_error() {
        let data = concat!(
            r#"{"id":"x","source_domain":"d","raw_text":"a"}"#,
            "\n",
            r#"{"id":"x","source_domain":"d","raw_text":"b"}"#
        );
        match ingest_jsonl(data.as_bytes(), Path::new("mem")) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "x"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_malformed_lines_and_continues() {
        let data = concat!(
            r#"{"id":"a","source_domain":"d","raw_text":"x"}"#,
            "\n",
            "not json\n",
            r#"{"id":"b","source_domain":"d","raw_text":"y"}"#
        );
        let got = ingest_jsonl(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(got.ads.len(), 2);
        assert_eq!(got.skipped_count(), 1);
        assert_eq!(got.skipped[0].line, 2);
    }

    #[test]
    fn ingest_csv_with_quoting() {
        let data = "id,source_domain,raw_text\n1,d,\"bán nhà, quận 5\"\n";
        let got = ingest_csv(data.as_bytes()).unwrap();
        assert_eq!(got.ads[0].raw_text, "bán nhà, quận 5");
    }
}
