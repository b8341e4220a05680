//! Word segmentation with exact byte offsets into the source sentence.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

/// A word occurrence inside a sentence.
///
/// `span` holds byte offsets, so `&sentence[span.clone()] == surface` always.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word {
    pub surface: String,
    pub span: Range<usize>,
    pub position: usize,
}

impl Word {
    /// True when the word has no alphanumeric character.
    pub fn is_punctuation(&self) -> bool {
        is_punctuation_only(&self.surface)
    }
}

pub fn is_punctuation_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn is_punctuation_only(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_punctuation_char)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOptions {
    /// Split leading and trailing punctuation into one word per character.
    pub split_punctuation: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            split_punctuation: true,
        }
    }
}

/// Whitespace segmentation with punctuation splitting enabled.
pub fn split_words(sentence: &str) -> Vec<Word> {
    split_words_with(sentence, SplitOptions::default())
}

pub fn split_words_with(sentence: &str, options: SplitOptions) -> Vec<Word> {
    let mut words = Vec::new();
    let mut push = |range: Range<usize>| {
        words.push(Word {
            surface: String::from(&sentence[range.clone()]),
            span: range,
            position: words.len(),
        });
    };

    let mut chunk_start = None;
    for (i, c) in sentence.char_indices().chain(core::iter::once((sentence.len(), ' '))) {
        match (c.is_whitespace(), chunk_start) {
            (false, None) => chunk_start = Some(i),
            (true, Some(start)) => {
                chunk_start = None;
                if options.split_punctuation {
                    split_chunk(sentence, start..i, &mut push);
                } else {
                    push(start..i);
                }
            }
            _ => {}
        }
    }
    words
}

// Peels punctuation characters off both ends of a whitespace-delimited chunk.
// Internal punctuation (hyphens, apostrophes) stays inside the word.
fn split_chunk(sentence: &str, chunk: Range<usize>, push: &mut impl FnMut(Range<usize>)) {
    let text = &sentence[chunk.clone()];
    let core_start = text
        .char_indices()
        .find(|(_, c)| !is_punctuation_char(*c))
        .map(|(i, _)| i);
    let Some(core_start) = core_start else {
        for (i, c) in text.char_indices() {
            push(chunk.start + i..chunk.start + i + c.len_utf8());
        }
        return;
    };
    let core_end = text
        .char_indices()
        .rev()
        .find(|(_, c)| !is_punctuation_char(*c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(text.len());

    for (i, c) in text[..core_start].char_indices() {
        push(chunk.start + i..chunk.start + i + c.len_utf8());
    }
    push(chunk.start + core_start..chunk.start + core_end);
    for (i, c) in text[core_end..].char_indices() {
        let at = chunk.start + core_end + i;
        push(at..at + c.len_utf8());
    }
}
