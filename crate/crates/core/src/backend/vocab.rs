//! Word-level vocabulary for the synthetic backend.

use std::collections::HashMap;

use super::TokenId;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const YES: &str = "yes";
pub const NO: &str = "no";

/// Fixed head of every synthetic vocabulary: specials, then the words of the
/// probe and caption prompts.
pub const BASE_TOKENS: &[&str] = &[
    UNK, EOS, YES, NO, "is", "there", "a", "an", "in", "the", "image", "?", ".", ",", "please", "help", "me", "describe",
    "detail", "and",
];

pub const MAX_VOCAB: usize = 64;

const PUNCTUATION: &[char] = &['?', '.', ',', '!'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Base tokens followed by `extra` (deduplicated, lowercased, order kept).
    pub fn with_words<'a>(extra: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        let mut words: Vec<String> = BASE_TOKENS.iter().map(|s| s.to_string()).collect();
        for w in extra {
            let w = w.trim().to_lowercase();
            if w.is_empty() {
                return Err("empty vocabulary entry".into());
            }
            if w.split_whitespace().count() > 2 {
                return Err(format!("`{w}`: entries are limited to two words"));
            }
            if !words.contains(&w) {
                words.push(w);
            }
        }
        if words.len() > MAX_VOCAB {
            return Err(format!("vocabulary has {} entries, limit is {MAX_VOCAB}", words.len()));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn unk(&self) -> TokenId {
        0
    }

    pub fn eos(&self) -> TokenId {
        1
    }

    pub fn yes(&self) -> TokenId {
        2
    }

    pub fn no(&self) -> TokenId {
        3
    }

    /// Lowercases, splits off punctuation and matches two-word entries before
    /// single words. Unknown words map to `<unk>`.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut pieces: Vec<String> = Vec::new();
        for raw in text.to_lowercase().split_whitespace() {
            let mut word = raw;
            let mut trailing = Vec::new();
            while let Some(stripped) = word.strip_suffix(PUNCTUATION) {
                trailing.push(word[stripped.len()..].to_string());
                word = stripped;
            }
            if !word.is_empty() {
                pieces.push(word.to_string());
            }
            pieces.extend(trailing.into_iter().rev());
        }
        let mut out = Vec::with_capacity(pieces.len());
        let mut i = 0;
        while i < pieces.len() {
            if i + 1 < pieces.len() {
                if let Some(id) = self.id(&format!("{} {}", pieces[i], pieces[i + 1])) {
                    out.push(id);
                    i += 2;
                    continue;
                }
            }
            out.push(self.id(&pieces[i]).unwrap_or(self.unk()));
            i += 1;
        }
        out
    }

    /// Space-joined words; punctuation attaches to the preceding word and
    /// `<eos>` is dropped.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for &t in tokens {
            if t == self.eos() {
                continue;
            }
            let w = self.word(t).unwrap_or(UNK);
            let is_punct = w.len() == 1 && w.chars().all(|c| PUNCTUATION.contains(&c));
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_probe_prompt() {
        let v = Vocabulary::with_words(["dog", "fire hydrant"]).unwrap();
        let ids = v.tokenize("Is there a fire hydrant in the image?");
        let words: Vec<&str> = ids.iter().map(|&i| v.word(i).unwrap()).collect();
        assert_eq!(words, ["is", "there", "a", "fire hydrant", "in", "the", "image", "?"]);
        assert_eq!(v.detokenize(&ids), "is there a fire hydrant in the image?");
    }

    #[test]
    fn unknown_words_and_eos() {
        let v = Vocabulary::with_words(["dog"]).unwrap();
        assert_eq!(v.tokenize("zebra!"), vec![v.unk(), v.unk()]);
        assert_eq!(v.detokenize(&[v.id("dog").unwrap(), v.eos()]), "dog");
    }

    #[test]
    fn limits() {
        let many: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        assert!(Vocabulary::with_words(many.iter().map(String::as_str)).is_err());
        assert!(Vocabulary::with_words(["a b c"]).is_err());
        assert_eq!(Vocabulary::with_words(["Dog", "dog"]).unwrap().len(), BASE_TOKENS.len() + 1);
    }
}
