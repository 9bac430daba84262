//! Tokenization and stopword lists.
//!
//! Tokens are produced by splitting on Unicode whitespace and trimming every
//! leading and trailing character that is not a letter or digit. A token that
//! trims down to nothing is punctuation.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// One whitespace-delimited piece of text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token<'a> {
    Word(&'a str),
    Punctuation,
}

fn trim_token(raw: &str) -> &str {
    raw.trim_matches(|c: char| !c.is_alphanumeric())
}

pub fn tokens(text: &str) -> impl Iterator<Item = Token<'_>> {
    text.split_whitespace().map(|raw| match trim_token(raw) {
        "" => Token::Punctuation,
        w => Token::Word(w),
    })
}

/// Lowercased words, punctuation dropped.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    tokens(text).filter_map(|t| match t {
        Token::Word(w) => Some(w.to_lowercase()),
        Token::Punctuation => None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// Parses one token per line. Blank lines and lines starting with `#` are skipped.
    pub fn parse(content: &str) -> Self {
        let words = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stopwords { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&content))
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS_EN)
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// Case-insensitive membership.
    pub fn contains(&self, word: &str) -> bool {
        if self.words.contains(word) {
            return true;
        }
        let lower = word.to_lowercase();
        lower != word && self.words.contains(&lower)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_tokens() {
        let toks: Vec<_> = tokens("Hello, world ... #tag -- @user:").collect();
        assert_eq!(
            toks,
            vec![
                Token::Word("Hello"),
                Token::Word("world"),
                Token::Punctuation,
                Token::Word("tag"),
                Token::Punctuation,
                Token::Word("user"),
            ]
        );
    }

    #[test]
    fn unicode_whitespace_split() {
        let toks: Vec<_> = words("a\u{00A0}b\u{2003}Ünïcode").collect();
        assert_eq!(toks, vec!["a", "b", "ünïcode"]);
    }

    #[test]
    fn stopword_file_format() {
        let sw = Stopwords::parse("# comment\nThe\n\n  of  \n#a\n");
        assert_eq!(sw.len(), 2);
        assert!(sw.contains("the"));
        assert!(sw.contains("THE"));
        assert!(sw.contains("of"));
        assert!(!sw.contains("#a"));
        assert!(!sw.contains("a"));
    }

    #[test]
    fn default_list_loads() {
        let sw = Stopwords::english();
        assert!(sw.len() > 100);
        for w in ["the", "of", "a", "and", "is"] {
            assert!(sw.contains(w), "{w}");
        }
    }
}
