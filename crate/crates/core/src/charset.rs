//! The fixed 28-symbol character inventory shared by every stage of the
//! workbench: 26 lowercase letters, space, and apostrophe. The CTC blank is
//! not a member; it exists only in the model output layer at index 0.

/// Number of charset symbols (excluding blank).
pub const N_SYMBOLS: usize = 28;

/// Model output dimension: blank at index 0, then the 28 charset symbols.
pub const N_OUTPUTS: usize = N_SYMBOLS + 1;

const SYMBOLS: [char; N_SYMBOLS] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', ' ', '\'',
];

/// Stable symbol <-> index mapping. Index of a symbol never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Charset;

impl Charset {
    pub fn symbols() -> &'static [char] {
        &SYMBOLS
    }

    pub fn index_of(c: char) -> Option<usize> {
        match c {
            'a'..='z' => Some(c as usize - 'a' as usize),
            ' ' => Some(26),
            '\'' => Some(27),
            _ => None,
        }
    }

    pub fn char_at(index: usize) -> char {
        SYMBOLS[index]
    }

    pub fn contains(c: char) -> bool {
        Self::index_of(c).is_some()
    }

    /// True when every character of `s` is a charset member.
    pub fn is_valid(s: &str) -> bool {
        s.chars().all(Self::contains)
    }

    /// Map a string to symbol indices; `None` on the first invalid character.
    pub fn encode(s: &str) -> Option<Vec<u8>> {
        s.chars()
            .map(|c| Self::index_of(c).map(|i| i as u8))
            .collect()
    }

    pub fn decode(indices: &[u8]) -> String {
        indices.iter().map(|&i| SYMBOLS[i as usize]).collect()
    }
}
