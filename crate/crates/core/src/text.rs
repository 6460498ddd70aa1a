//! Tokenization shared by keyword extraction and the title topic model.

use alloc::string::String;
use alloc::vec::Vec;

use unicode_segmentation::UnicodeSegmentation;

const STOPWORD_LIST: &str = include_str!("../data/stopwords.txt");

/// Tokens shorter than this many characters are dropped.
pub const MIN_TOKEN_CHARS: usize = 3;

/// Whether `word` (already lowercase) is on the shipped stop-word list.
pub fn is_stopword(word: &str) -> bool {
    STOPWORD_LIST.lines().any(|w| w == word)
}

/// The shipped stop-word list, one lowercase word per entry.
pub fn stopwords() -> impl Iterator<Item = &'static str> {
    STOPWORD_LIST.lines().filter(|l| !l.is_empty())
}

/// Content tokens: Unicode words, lowercased, at least three characters
/// long, stop words removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words()
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= MIN_TOKEN_CHARS && !is_stopword(w))
        .collect()
}

/// Length of `text` in Unicode words, without any filtering.
pub fn word_count(text: &str) -> usize {
    text.unicode_words().count()
}
