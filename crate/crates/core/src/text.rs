//! Text helpers shared by span validation, ROUGE and sentence splitting.

/// Collapses runs of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Number of whitespace-separated words.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Lowercased alphanumeric tokens; everything else separates tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Splits on terminal punctuation (`.`, `!`, `?`) followed by whitespace or
/// end of text. Empty fragments are dropped.
pub fn split_sentences(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '!' | '?' | '"' | '\'' | ')') {
                end += 1;
            }
            if end == chars.len() || chars[end].is_whitespace() {
                let sentence: String = chars[start..end].iter().collect();
                let sentence = normalize_whitespace(&sentence);
                if !sentence.is_empty() {
                    out.push(sentence);
                }
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    let tail: String = chars[start..].iter().collect();
    let tail = normalize_whitespace(&tail);
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_collapses() {
        assert_eq!(normalize_whitespace("  a \t b\n\nc "), "a b c");
        assert_eq!(normalize_whitespace("   "), "");
    }

    #[test]
    fn tokens_are_lowercase_alnum() {
        assert_eq!(tokenize("Snake-plants, TOLERATE drought!"), ["snake", "plants", "tolerate", "drought"]);
        assert!(tokenize("--- ...").is_empty());
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let s = split_sentences("Snake plants tolerate drought. They need little water! Really? v1.2 is fine");
        assert_eq!(
            s,
            ["Snake plants tolerate drought.", "They need little water!", "Really?", "v1.2 is fine"]
        );
        assert!(split_sentences("  ").is_empty());
    }
}
