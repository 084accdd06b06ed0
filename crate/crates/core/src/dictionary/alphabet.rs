//! The ordered set of code points available to the dictionary.
//!
//! Scalar values ascending from U+0021, skipping the U+007F..=U+00A0 control
//! band and the surrogate block, so every encoded sequence is printable,
//! valid unicode text.

/// Inclusive ranges of the alphabet, in rank order.
pub const SEGMENTS: [(u32, u32); 3] = [(0x21, 0x7E), (0xA1, 0xD7FF), (0xE000, 0x10FFFF)];

/// Number of code points in the alphabet.
pub const ALPHABET_SIZE: u32 = (0x7E - 0x21 + 1) + (0xD7FF - 0xA1 + 1) + (0x10FFFF - 0xE000 + 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("alphabet exhausted: rank {rank} exceeds the {ALPHABET_SIZE} available code points")]
pub struct AlphabetExhausted {
    pub rank: u64,
}

/// The `rank`-th code point of the alphabet.
pub fn code_point_for_rank(rank: u64) -> Result<char, AlphabetExhausted> {
    let mut offset = rank;
    for (lo, hi) in SEGMENTS {
        let len = u64::from(hi - lo + 1);
        if offset < len {
            let cp = lo + offset as u32;
            return Ok(char::from_u32(cp).expect("segments contain only scalar values"));
        }
        offset -= len;
    }
    Err(AlphabetExhausted { rank })
}

/// Inverse of [`code_point_for_rank`]; `None` for characters outside the alphabet.
pub fn rank_of_code_point(ch: char) -> Option<u64> {
    let cp = u32::from(ch);
    let mut base = 0u64;
    for (lo, hi) in SEGMENTS {
        if (lo..=hi).contains(&cp) {
            return Some(base + u64::from(cp - lo));
        }
        base += u64::from(hi - lo + 1);
    }
    None
}
