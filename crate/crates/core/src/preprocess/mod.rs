//! Noise removal, tokenization and sentence segmentation shared by all rankers.
//!
//! Ranker input is always cleaned first and segmented second.

mod cleanup;
mod lexicon;
mod segment;

pub use cleanup::{cleanup, CleanupReport, Removal, RemovalCategory};
pub use lexicon::{Gazetteer, Stopwords};
pub use segment::segment_sentences;

/// Lowercases, splits on non-alphanumeric characters and drops stopwords.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Gazetteer and stopwords bundled with the cleanup switch.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub gazetteer: Gazetteer,
    pub stopwords: Stopwords,
    pub clean: bool,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            gazetteer: Gazetteer::default(),
            stopwords: Stopwords::default(),
            clean: true,
        }
    }
}

impl Preprocessor {
    pub fn without_cleanup(mut self) -> Self {
        self.clean = false;
        self
    }

    /// The cleaned text, or the input unchanged when cleanup is off.
    pub fn clean_text(&self, text: &str) -> String {
        if self.clean {
            cleanup(text, &self.gazetteer).output
        } else {
            text.to_string()
        }
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        tokenize(&self.clean_text(text), &self.stopwords)
    }

    pub fn sentences(&self, text: &str) -> Vec<String> {
        segment_sentences(&self.clean_text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_drops_stopwords() {
        assert_eq!(
            tokenize("The SQL injection", &Stopwords::default()),
            ["sql", "injection"]
        );
        assert!(tokenize("", &Stopwords::default()).is_empty());
        assert_eq!(
            tokenize("Out-of-bounds", &Stopwords::empty()),
            ["out", "of", "bounds"]
        );
    }

    /// Independent reference: byte-wise ASCII scan with a manual lowercase.
    fn oracle_tokens(text: &str, stop: &[&str]) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for ch in text.chars().chain(std::iter::once(' ')) {
            if ch.is_ascii_alphanumeric() {
                cur.push(if ch.is_ascii_uppercase() {
                    (ch as u8 + 32) as char
                } else {
                    ch
                });
            } else if !cur.is_empty() {
                if !stop.contains(&cur.as_str()) {
                    out.push(cur.clone());
                }
                cur.clear();
            }
        }
        out
    }

    #[test]
    fn tokenize_matches_reference_on_fixture_paragraph() {
        let paragraph = "A vulnerability in sshd-core of Apache Mina SSHD allows an attacker to overflow the server causing an OutOfMemory error. This issue affects the SFTP and port forwarding features of Apache Mina SSHD version 2.0.0 and later versions. It was addressed in Apache Mina SSHD 2.7.0";
        let stop = Stopwords::default();
        let words: Vec<&str> = include_str!("../../data/stopwords.txt")
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect();
        let mut ours = tokenize(paragraph, &stop);
        let mut theirs = oracle_tokens(paragraph, &words);
        ours.sort();
        theirs.sort();
        assert_eq!(ours, theirs);
    }

    fn noisy_text() -> impl Strategy<Value = String> {
        let word = prop::sample::select(vec![
            "buffer",
            "overflow",
            "The",
            "in",
            "WordPress",
            "Apache",
            "Mina",
            "SSHD",
            "https://a.example.com/x",
            "user@mail.org",
            "CVE-2021-1234",
            "1.4.x",
            "2.0.0",
            "/etc/passwd",
            "example.net",
            "Allows",
            "remote",
            "attackers.",
            "to",
            ",",
        ]);
        prop::collection::vec(
            (word, prop::sample::select(vec![" ", "  ", "\n", " \t"])),
            0..30,
        )
        .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
    }

    fn removal_applied(report: &CleanupReport) -> String {
        let mut s = String::new();
        let mut last = 0;
        for r in &report.removed {
            s.push_str(&report.input[last..r.start]);
            s.push(' ');
            last = r.end;
        }
        s.push_str(&report.input[last..]);
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    proptest! {
        #[test]
        fn cleanup_is_idempotent(text in noisy_text()) {
            let g = Gazetteer::default();
            let once = cleanup(&text, &g).output;
            prop_assert_eq!(cleanup(&once, &g).output, once);
        }

        #[test]
        fn output_is_input_minus_removed_spans(text in noisy_text()) {
            let report = cleanup(&text, &Gazetteer::default());
            prop_assert_eq!(removal_applied(&report), report.output.clone());
            for pair in report.removed.windows(2) {
                prop_assert!(pair[0].end <= pair[1].start);
            }
        }

        #[test]
        fn cleaned_tokens_carry_no_patterns(text in noisy_text()) {
            let cleaned = cleanup(&text, &Gazetteer::default()).output;
            for token in tokenize(&cleaned, &Stopwords::default()) {
                prop_assert!(!token.contains('@') && !token.contains("://") && !token.contains('.'));
            }
            prop_assert!(!cleaned.contains("://"));
            prop_assert!(!cleaned.contains('@'));
            prop_assert!(!cleaned.contains("2.0.0") && !cleaned.contains("1.4.x"));
        }

        #[test]
        fn segmentation_preserves_non_whitespace(text in noisy_text()) {
            let joined: String = segment_sentences(&text).concat();
            let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(strip(&joined), strip(&text));
        }
    }
}
