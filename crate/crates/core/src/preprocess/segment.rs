/// Words that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "co", "corp", "dr", "e.g", "eg", "etc", "fig", "i.e", "ie", "inc",
    "jr", "ltd", "mr", "mrs", "ms", "no", "nos", "resp", "sr", "st", "ver", "vol", "vs", "jan",
    "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}')
}

fn word_before(text: &str, end: usize) -> &str {
    let start = text[..end]
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace() || matches!(c, '(' | '"' | '\''))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    &text[start..end]
}

fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single initials such as "J."
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_alphabetic())
}

/// Rule-based sentence splitter.
///
/// A boundary is sentence-final punctuation (optionally followed by closing
/// quotes or brackets), then whitespace, then an uppercase letter. Blank lines
/// also end a sentence. Periods inside tokens (`1.4.3`, `e.g.`) never split.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len()
                && (is_closer(chars[j].1) || matches!(chars[j].1, '.' | '!' | '?'))
            {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let spaced = k > j;
            let mut m = k;
            while m < chars.len()
                && matches!(chars[m].1, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
            {
                m += 1;
            }
            let capital_next = chars.get(m).is_some_and(|&(_, n)| n.is_uppercase());
            if spaced && capital_next && !(c == '.' && is_abbreviation(word_before(text, pos))) {
                push_trimmed(&mut sentences, &text[start..end]);
                start = end;
                i = k;
                continue;
            }
            i = j;
            continue;
        }
        if c == '\n' {
            let mut k = i + 1;
            while k < chars.len() && chars[k].1 != '\n' && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k < chars.len() && chars[k].1 == '\n' {
                push_trimmed(&mut sentences, &text[start..pos]);
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
