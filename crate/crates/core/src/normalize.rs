//! Surface-form normalization shared by entity linking and answer matching.
//!
//! The pipeline is NFC, trim, collapse internal whitespace runs to a single
//! space, then lowercase. Strict mode skips the lowercase step.

use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Normalizer {
    pub strict: bool,
}

impl Normalizer {
    pub const DEFAULT: Normalizer = Normalizer { strict: false };
    pub const STRICT: Normalizer = Normalizer { strict: true };

    pub fn new(strict: bool) -> Self {
        Self { strict }
    }

    pub fn normalize(&self, surface: &str) -> String {
        let composed: String = surface.nfc().collect();
        let mut out = String::with_capacity(composed.len());
        for word in composed.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            if self.strict {
                out.push_str(word);
            } else {
                out.extend(word.chars().flat_map(char::to_lowercase));
            }
        }
        out
    }

    pub fn eq(&self, a: &str, b: &str) -> bool {
        self.normalize(a) == self.normalize(b)
    }
}

/// Normalize with the default (case-insensitive) pipeline.
pub fn normalize(surface: &str) -> String {
    Normalizer::DEFAULT.normalize(surface)
}
