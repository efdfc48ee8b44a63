//! Syllable vocabulary for synthetic class names.
//!
//! Id 0 is padding, ids 1..=3 are the template words and the rest are
//! consonant-vowel syllables. Class names are concatenations of
//! syllables ("bako" = "ba" + "ko").

use crate::error::{Result, RpoError};

pub const PAD: usize = 0;
const TEMPLATE_WORDS: [&str; 3] = ["a", "photo", "of"];
/// "a photo of a"
const TEMPLATE_IDS: [usize; 4] = [1, 2, 3, 1];
const FIRST_SYLLABLE: usize = 1 + TEMPLATE_WORDS.len();

const CONSONANTS: &str = "bdfgklmnprstvz";
const VOWELS: &str = "aeiou";

/// Caption token ids right-padded to the word-slot count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Number of non-pad tokens at the front of `ids`.
    pub valid_len: usize,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    syllables: Vec<String>,
}

impl Tokenizer {
    pub fn new(vocab: usize) -> Result<Self> {
        if vocab <= FIRST_SYLLABLE {
            return Err(RpoError::config(format!(
                "vocabulary of {vocab} leaves no room for class syllables"
            )));
        }
        let syllables = CONSONANTS
            .chars()
            .flat_map(|c| VOWELS.chars().map(move |v| format!("{c}{v}")))
            .take(vocab - FIRST_SYLLABLE)
            .collect();
        Ok(Tokenizer { syllables })
    }

    pub fn syllables(&self) -> &[String] {
        &self.syllables
    }

    pub fn template_len(&self) -> usize {
        TEMPLATE_IDS.len()
    }

    pub fn syllable_id(&self, index: usize) -> usize {
        FIRST_SYLLABLE + index
    }

    pub fn tokenize_class(&self, name: &str) -> Result<Vec<usize>> {
        if !name.len().is_multiple_of(2) || !name.is_ascii() {
            return Err(RpoError::config(format!("class name {name:?} is not a syllable string")));
        }
        (0..name.len() / 2)
            .map(|i| {
                let syl = &name[2 * i..2 * i + 2];
                self.syllables
                    .iter()
                    .position(|s| s == syl)
                    .map(|p| FIRST_SYLLABLE + p)
                    .ok_or_else(|| RpoError::config(format!("unknown syllable {syl:?} in {name:?}")))
            })
            .collect()
    }

    /// "a photo of a <class>", padded to `slots` tokens.
    pub fn caption(&self, class_name: &str, slots: usize) -> Result<TokenSequence> {
        let mut ids = TEMPLATE_IDS.to_vec();
        ids.extend(self.tokenize_class(class_name)?);
        if ids.len() > slots {
            return Err(RpoError::Length {
                len: ids.len(),
                max: slots,
            });
        }
        let valid_len = ids.len();
        ids.resize(slots, PAD);
        Ok(TokenSequence { ids, valid_len })
    }
}
