//! Tab-separated tag lexicons and plain stopword lists.
//!
//! Lexicon lines are `word<TAB>translation<TAB>tag;tag;...`. Blank lines and
//! lines starting with `#` are ignored. The tag `stopword` marks the word as
//! a stopword.

use std::io::{BufRead, BufReader, Read};

use bias_attribution_core::TagLexicon;

use crate::error::LexiconError;

pub fn load_lexicon<R: Read>(source: R) -> Result<TagLexicon, LexiconError> {
    let mut lexicon = TagLexicon::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let number = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(LexiconError::Malformed {
                line: number,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let word = fields[0].trim();
        if word.is_empty() {
            return Err(LexiconError::Malformed {
                line: number,
                message: "empty word".to_string(),
            });
        }
        let tags: Vec<&str> = fields[2].split(';').map(str::trim).filter(|t| !t.is_empty()).collect();
        if tags.is_empty() {
            return Err(LexiconError::Malformed {
                line: number,
                message: format!("no tags for {word:?}"),
            });
        }
        lexicon.insert(word, Some(fields[1].trim()), tags);
    }
    if lexicon.is_empty() {
        return Err(LexiconError::Empty);
    }
    Ok(lexicon)
}

/// Adds one stopword per non-comment line.
pub fn load_stopwords<R: Read>(source: R, lexicon: &mut TagLexicon) -> Result<usize, LexiconError> {
    let mut added = 0;
    for line in BufReader::new(source).lines() {
        let line = line?;
        let word = line.trim();
        if word.is_empty() || word.starts_with('#') {
            continue;
        }
        lexicon.insert_stopword(word);
        added += 1;
    }
    Ok(added)
}
