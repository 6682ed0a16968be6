//! Tokenizers shared by the effort, overlap and extraction-validation metrics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::LazyLock;

/// Function-word list (one word per line) that defines "content word".
pub const STOPWORDS_TXT: &str = include_str!("../../resources/stopwords.txt");

static STOPWORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORDS_TXT.lines().map(str::trim).filter(|w| !w.is_empty()).collect());

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(token)
}

/// Lowercased alphanumeric runs; apostrophes are dropped first so "don't" becomes "dont".
fn alnum_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Tokens for ROUGE-L: lowercase alphanumeric runs, stopwords kept.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    alnum_tokens(text)
}

/// Content words of `text` in order.
pub fn content_tokens(text: &str) -> Vec<String> {
    alnum_tokens(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// Raw whitespace-separated word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Multiset of lowercase content-word tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenMultiset {
    counts: BTreeMap<String, usize>,
}

impl TokenMultiset {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut counts = BTreeMap::new();
        for t in tokens {
            let t = t.into();
            if !t.is_empty() {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        TokenMultiset { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> BTreeSet<&str> {
        self.counts.keys().map(String::as_str).collect()
    }

    /// Size of the multiset intersection.
    pub fn intersection_len(&self, other: &TokenMultiset) -> usize {
        self.counts
            .iter()
            .map(|(t, n)| (*n).min(other.count(t)))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(t, n)| (t.as_str(), *n))
    }
}

pub fn tokenize_content(text: &str) -> TokenMultiset {
    TokenMultiset::from_tokens(content_tokens(text))
}
