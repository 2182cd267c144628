use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Gazetteer;

/// Kind of noise removed from a description. Variant order is the tie-break
/// priority when two candidates start at the same byte with the same length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalCategory {
    Url,
    Email,
    CveId,
    Filepath,
    Domain,
    Version,
    Gazetteer,
}

/// A removed byte span of the original input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub start: usize,
    pub end: usize,
    pub category: RemovalCategory,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupReport {
    pub input: String,
    pub output: String,
    /// Non-overlapping, sorted by start offset.
    pub removed: Vec<Removal>,
}

struct Patterns {
    url: Regex,
    email: Regex,
    cve_id: Regex,
    filepath: Regex,
    domain: Regex,
    version: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        url: Regex::new(
            r#"(?i)\b(?:(?:https?|ftp|file)://|www\.)[^\s<>"'()\[\]{}]*[^\s<>"'()\[\]{}.,;:!?]"#,
        )
        .unwrap(),
        email: Regex::new(r"(?i)\b[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}\b").unwrap(),
        cve_id: Regex::new(r"(?i)\bCVE-\d{4}-\d{4,}\b").unwrap(),
        filepath: Regex::new(
            r"(?i)[a-z]:\\[\w.\-\\]+|(?:~|\.{1,2})?/[\w.\-]+(?:/[\w.\-]+)*/?|\b[\w\-]+(?:/[\w.\-]+)+\.[a-z0-9]{1,5}\b",
        )
        .unwrap(),
        domain: Regex::new(
            r"(?i)\b(?:[a-z0-9](?:[a-z0-9-]*[a-z0-9])?\.)+(?:com|org|net|edu|gov|mil|int|io|co|uk|us|de|fr|jp|cn|ru|in|br|it|nl|eu|info|biz|dev|app|me|tv|cc|xyz|cloud|tech|site|online|ai)\b",
        )
        .unwrap(),
        version: Regex::new(r"(?i)\bv?\d+(?:\.(?:\d+|x))+(?:[a-z]+\d+)?(?:-[a-z]+\d+)*\b").unwrap(),
    })
}

fn candidates(text: &str, gazetteer: &Gazetteer) -> Vec<(usize, usize, RemovalCategory)> {
    let p = patterns();
    let mut found = Vec::new();
    let mut push_all = |re: &Regex, category| {
        found.extend(re.find_iter(text).map(|m| (m.start(), m.end(), category)));
    };
    push_all(&p.url, RemovalCategory::Url);
    push_all(&p.email, RemovalCategory::Email);
    push_all(&p.cve_id, RemovalCategory::CveId);
    push_all(&p.domain, RemovalCategory::Domain);
    push_all(&p.version, RemovalCategory::Version);
    for m in p.filepath.find_iter(text) {
        // a slash glued to a word ("client/server", "TCP/IP") is not a path
        let glued = text[..m.start()]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || matches!(c, '_' | '/' | ':' | '.' | '-'));
        if !glued {
            found.push((m.start(), m.end(), RemovalCategory::Filepath));
        }
    }
    found.extend(
        gazetteer
            .find_all(text)
            .into_iter()
            .map(|(s, e)| (s, e, RemovalCategory::Gazetteer)),
    );
    found
}

/// Leftmost first; among equal starts the longest; then category priority.
fn select(mut found: Vec<(usize, usize, RemovalCategory)>) -> Vec<(usize, usize, RemovalCategory)> {
    found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut chosen: Vec<(usize, usize, RemovalCategory)> = Vec::new();
    for span in found {
        if chosen.last().is_none_or(|last| span.0 >= last.1) {
            chosen.push(span);
        }
    }
    chosen
}

/// Text paired with, for every byte, the original byte range it stands for.
struct Mapped {
    text: String,
    origin: Vec<(usize, usize)>,
}

impl Mapped {
    fn identity(text: &str) -> Self {
        Self {
            text: text.to_string(),
            origin: (0..text.len()).map(|i| (i, i + 1)).collect(),
        }
    }

    fn origin_of(&self, start: usize, end: usize) -> (usize, usize) {
        (self.origin[start].0, self.origin[end - 1].1)
    }

    /// Replaces each span with one space, then collapses whitespace runs.
    fn remove(&self, spans: &[(usize, usize, RemovalCategory)]) -> Self {
        let mut text = String::with_capacity(self.text.len());
        let mut origin = Vec::with_capacity(self.origin.len());
        let mut push = |c: char, range: (usize, usize), text: &mut String| {
            if c.is_whitespace() {
                if text.is_empty() || text.ends_with(' ') {
                    return;
                }
                text.push(' ');
                origin.push(range);
            } else {
                let before = text.len();
                text.push(c);
                origin.extend(std::iter::repeat_n(range, text.len() - before));
            }
        };
        let mut spans = spans.iter().peekable();
        let mut iter = self.text.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if let Some(&&(s, e, _)) = spans.peek() {
                if i == s {
                    push(' ', self.origin_of(s, e), &mut text);
                    while iter.peek().is_some_and(|&(j, _)| j < e) {
                        iter.next();
                    }
                    spans.next();
                    continue;
                }
            }
            // multi-byte chars keep the range of their first byte through their last
            let range = (self.origin[i].0, self.origin[i + c.len_utf8() - 1].1);
            push(c, range, &mut text);
        }
        if text.ends_with(' ') {
            text.pop();
            origin.pop();
        }
        Self { text, origin }
    }
}

const MAX_PASSES: usize = 8;

/// Removes gazetteer phrases, URLs, emails, domains, CVE ids, version strings
/// and file paths, then normalizes whitespace. Repeats until nothing more
/// matches, so `cleanup(cleanup(x).output).output == cleanup(x).output`.
pub fn cleanup(text: &str, gazetteer: &Gazetteer) -> CleanupReport {
    let mut current = Mapped::identity(text);
    let mut removed: Vec<Removal> = Vec::new();
    let mut passes = 0;
    loop {
        let spans = select(candidates(&current.text, gazetteer));
        let normalized = current.remove(&spans);
        let changed = normalized.text != current.text;
        for &(s, e, category) in &spans {
            let (start, end) = current.origin_of(s, e);
            removed.retain(|r| r.end <= start || r.start >= end);
            removed.push(Removal {
                start,
                end,
                category,
                text: text[start..end].to_string(),
            });
        }
        current = normalized;
        passes += 1;
        if !changed || passes >= MAX_PASSES {
            break;
        }
    }
    removed.sort_by_key(|r| r.start);
    CleanupReport {
        input: text.to_string(),
        output: current.text,
        removed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn removed_texts(report: &CleanupReport) -> Vec<(&str, RemovalCategory)> {
        report
            .removed
            .iter()
            .map(|r| (r.text.as_str(), r.category))
            .collect()
    }

    #[test]
    fn callrail_example() {
        let g = Gazetteer::new(["WordPress", "CallRail"]);
        let r = cleanup(
            "XSS in CallRail plugin <= 0.4.9 at WordPress, see https://x.y",
            &g,
        );
        assert_eq!(
            removed_texts(&r),
            vec![
                ("CallRail", RemovalCategory::Gazetteer),
                ("0.4.9", RemovalCategory::Version),
                ("WordPress", RemovalCategory::Gazetteer),
                ("https://x.y", RemovalCategory::Url),
            ]
        );
        assert_eq!(r.output, "XSS in plugin <= at , see");
    }

    #[test]
    fn mina_example() {
        let g = Gazetteer::new(["Apache Mina SSHD"]);
        let r = cleanup("addressed in Apache Mina SSHD 2.7.0", &g);
        assert_eq!(r.output, "addressed in");
        assert_eq!(r.removed.len(), 2);
    }

    #[test]
    fn untouched_text_is_identity() {
        let text = "The product does not validate input.";
        let r = cleanup(text, &Gazetteer::default());
        assert_eq!(r.output, text);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn empty_input() {
        let r = cleanup("", &Gazetteer::default());
        assert_eq!(r.output, "");
    }

    #[test]
    fn pattern_categories() {
        let g = Gazetteer::empty();
        let r = cleanup(
            "mail admin@example.com about CVE-2021-44228 in /usr/local/bin/x and wp-admin/admin-ajax.php on example.org using 1.4.x or 19.1R3-S9",
            &g,
        );
        assert_eq!(
            removed_texts(&r),
            vec![
                ("admin@example.com", RemovalCategory::Email),
                ("CVE-2021-44228", RemovalCategory::CveId),
                ("/usr/local/bin/x", RemovalCategory::Filepath),
                ("wp-admin/admin-ajax.php", RemovalCategory::Filepath),
                ("example.org", RemovalCategory::Domain),
                ("1.4.x", RemovalCategory::Version),
                ("19.1R3-S9", RemovalCategory::Version),
            ]
        );
        assert_eq!(r.output, "mail about in and on using or");
    }

    #[test]
    fn words_joined_by_slash_survive() {
        let r = cleanup("client/server and TCP/IP stacks", &Gazetteer::empty());
        assert_eq!(r.output, "client/server and TCP/IP stacks");
    }

    #[test]
    fn url_keeps_trailing_punctuation() {
        let r = cleanup("See https://example.com/a?b=1.", &Gazetteer::empty());
        assert_eq!(r.output, "See .");
    }

    #[test]
    fn nested_removal_reaches_fixed_point() {
        // "Foo" is removed first, which joins "Apache Mina" into a phrase
        let g = Gazetteer::new(["Apache Mina", "Foo"]);
        let r = cleanup("x Apache Foo Mina y", &g);
        assert_eq!(r.output, "x y");
        assert_eq!(r.removed.len(), 1);
        assert_eq!(r.removed[0].text, "Apache Foo Mina");
        assert_eq!(cleanup(&r.output, &g).output, r.output);
    }

    #[test]
    fn multibyte_text_is_preserved() {
        let r = cleanup("café über 1.2.3 naïve", &Gazetteer::empty());
        assert_eq!(r.output, "café über naïve");
    }
}
