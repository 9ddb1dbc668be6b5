//! Rule-based sentence segmentation.

/// Abbreviations whose trailing period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &["Mr.", "Dr.", "U.S.", "e.g.", "i.e."];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// True when the word ending at `end` (exclusive byte offset) is a guarded abbreviation.
fn ends_with_abbreviation(text: &str, end: usize) -> bool {
    let head = &text[..end];
    let word_start = head
        .rfind(char::is_whitespace)
        .map(|i| i + head[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = &head[word_start..];
    ABBREVIATIONS.iter().any(|abbr| {
        word == *abbr
            || (word.ends_with(abbr)
                && word[..word.len() - abbr.len()]
                    .chars()
                    .last()
                    .is_some_and(|c| !c.is_alphanumeric()))
    })
}

/// Collapses every whitespace run (including newlines) into a single space and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits a document into sentences.
///
/// A boundary is a `.`, `!` or `?` followed either by the end of the text or by
/// whitespace and then an uppercase letter. Boundaries directly after one of
/// [`ABBREVIATIONS`] are suppressed. Returned sentences are whitespace-normalized
/// and never empty.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !is_terminal(c) {
            continue;
        }
        let end = i + c.len_utf8();
        let rest = &text[end..];
        let boundary = if rest.is_empty() {
            true
        } else if rest.starts_with(char::is_whitespace) {
            let after = rest.trim_start();
            after.is_empty() || after.starts_with(char::is_uppercase)
        } else {
            false
        };
        if boundary && !ends_with_abbreviation(text, end) {
            let sentence = normalize_whitespace(&text[start..end]);
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = end;
        }
    }
    let tail = normalize_whitespace(&text[start..]);
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_two_simple_sentences() {
        assert_eq!(
            split_sentences("Apple grows on the tree. It is red."),
            vec!["Apple grows on the tree.", "It is red."]
        );
    }

    #[test]
    fn empty_text_yields_nothing() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n ").is_empty());
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(split_sentences("It was 3.5 m. long indeed."), vec!["It was 3.5 m. long indeed."]);
    }

    #[test]
    fn abbreviations_are_guarded() {
        assert_eq!(
            split_sentences("Mr. Smith met Dr. Jones in the U.S. Then he left."),
            vec!["Mr. Smith met Dr. Jones in the U.S. Then he left."]
        );
        assert_eq!(
            split_sentences("Use tools, e.g. Hammers are fine. Go!"),
            vec!["Use tools, e.g. Hammers are fine.", "Go!"]
        );
    }

    #[test]
    fn questions_and_exclamations_split() {
        assert_eq!(
            split_sentences("Is it red? Yes! It is."),
            vec!["Is it red?", "Yes!", "It is."]
        );
    }

    #[test]
    fn newlines_inside_document_are_normalized() {
        assert_eq!(
            split_sentences("The dog\nran home.\nThe cat stayed"),
            vec!["The dog ran home.", "The cat stayed"]
        );
    }
}
