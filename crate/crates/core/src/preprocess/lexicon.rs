use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

const STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");
const GAZETTEER_TXT: &str = include_str!("../../data/gazetteer.txt");

fn config_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Lowercase stopword set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Self(config_lines(text).map(str::to_lowercase).collect())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn empty() -> Self {
        Self(HashSet::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        static SHIPPED: OnceLock<Stopwords> = OnceLock::new();
        SHIPPED.get_or_init(|| Self::parse(STOPWORDS_TXT)).clone()
    }
}

/// Product and vendor phrases, matched case-insensitively on word
/// boundaries with the longest phrase winning at any position.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    phrases: Vec<String>,
    matcher: Option<Regex>,
}

impl Gazetteer {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut phrases: Vec<String> = phrases
            .into_iter()
            .map(|p| p.as_ref().split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|p| !p.is_empty())
            .collect();
        phrases.sort_by(|a, b| {
            b.chars()
                .count()
                .cmp(&a.chars().count())
                .then_with(|| a.to_lowercase().cmp(&b.to_lowercase()))
        });
        phrases.dedup_by(|a, b| a.eq_ignore_ascii_case(b));
        let matcher = if phrases.is_empty() {
            None
        } else {
            let alternatives: Vec<String> = phrases.iter().map(|p| phrase_pattern(p)).collect();
            Some(
                Regex::new(&format!("(?i)(?:{})", alternatives.join("|")))
                    .expect("escaped phrases form a valid pattern"),
            )
        };
        Self { phrases, matcher }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(config_lines(text))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn empty() -> Self {
        Self::new(std::iter::empty::<&str>())
    }

    /// Phrases, longest first.
    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub(crate) fn find_all(&self, text: &str) -> Vec<(usize, usize)> {
        match &self.matcher {
            Some(re) => re.find_iter(text).map(|m| (m.start(), m.end())).collect(),
            None => Vec::new(),
        }
    }
}

impl Default for Gazetteer {
    fn default() -> Self {
        static SHIPPED: OnceLock<Gazetteer> = OnceLock::new();
        SHIPPED.get_or_init(|| Self::parse(GAZETTEER_TXT)).clone()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn phrase_pattern(phrase: &str) -> String {
    let body = phrase
        .split(' ')
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(r"\s+");
    let first = phrase.chars().next().unwrap();
    let last = phrase.chars().last().unwrap();
    format!(
        "{}{}{}",
        if is_word_char(first) { r"\b" } else { "" },
        body,
        if is_word_char(last) { r"\b" } else { "" }
    )
}
