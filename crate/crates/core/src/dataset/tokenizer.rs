/// Identifier of the tokenization rules below; reported next to vocabulary
/// counts so that numbers from different rule sets are never compared.
pub const TOKENIZER_VERSION: &str = "lower-ws-punct/1";

/// Lowercases, splits on whitespace, and splits every leading or trailing
/// ASCII punctuation character off as its own token. Punctuation inside a
/// word ("don't", "t-shirt") stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let core_start = word.find(|c: char| !c.is_ascii_punctuation()).unwrap_or(word.len());
        let core_end = word.rfind(|c: char| !c.is_ascii_punctuation()).map_or(core_start, |i| {
            i + word[i..].chars().next().map_or(0, char::len_utf8)
        });
        out.extend(word[..core_start].chars().map(String::from));
        if core_end > core_start {
            out.push(word[core_start..core_end].to_owned());
        }
        out.extend(word[core_end.max(core_start)..].chars().map(String::from));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        // Leaked for terse comparisons in tests only.
        tokenize(s).into_iter().map(|t| &*Box::leak(t.into_boxed_str())).collect()
    }

    #[test]
    fn rules() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t ").is_empty());
        assert_eq!(toks("A dog is running."), ["a", "dog", "is", "running", "."]);
        assert_eq!(toks("\"Hello,\" she said!"), ["\"", "hello", ",", "\"", "she", "said", "!"]);
        assert_eq!(toks("don't wear a t-shirt"), ["don't", "wear", "a", "t-shirt"]);
        assert_eq!(toks("..."), [".", ".", "."]);
        assert_eq!(toks("(Café)"), ["(", "café", ")"]);
        assert_eq!(toks("ÉCOLE"), ["école"]);
    }
}
