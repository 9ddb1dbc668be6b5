//! Whitespace and punctuation tokenizer with a matching detokenizer.

/// Characters that are always split off as single-character tokens.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'];

/// The possessive clitic, kept as one token.
pub const POSSESSIVE: &str = "'s";

fn is_punct(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Splits on whitespace, then detaches punctuation and the possessive `'s`.
///
/// Casing is preserved. Tokens never contain whitespace and concatenating them
/// recovers the input with all whitespace removed.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if !is_punct(c) {
                word.push(c);
                i += 1;
                continue;
            }
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            let possessive = c == '\''
                && chars.get(i + 1) == Some(&'s')
                && chars.get(i + 2).map_or(true, |&n| is_punct(n));
            if possessive {
                tokens.push(POSSESSIVE.to_string());
                i += 2;
            } else {
                tokens.push(c.to_string());
                i += 1;
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

fn attaches_left(token: &str) -> bool {
    matches!(token, "." | "," | "!" | "?" | ";" | ":" | ")") || token == POSSESSIVE
}

/// Joins tokens with single spaces, attaching closing punctuation and `'s` to the
/// preceding token and `(` to the following one.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for token in tokens {
        let token = token.as_ref();
        if let Some(p) = prev {
            if !attaches_left(token) && p != "(" {
                out.push(' ');
            }
        }
        out.push_str(token);
        prev = Some(token);
    }
    out
}
