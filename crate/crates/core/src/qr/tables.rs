use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Error correction level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    pub const ALL: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    fn ordinal(self) -> usize {
        match self {
            EcLevel::L => 0,
            EcLevel::M => 1,
            EcLevel::Q => 2,
            EcLevel::H => 3,
        }
    }

    /// Two-bit field stored in the format information.
    pub fn format_bits(self) -> u8 {
        match self {
            EcLevel::L => 1,
            EcLevel::M => 0,
            EcLevel::Q => 3,
            EcLevel::H => 2,
        }
    }

    pub fn from_format_bits(bits: u8) -> Self {
        match bits & 3 {
            1 => EcLevel::L,
            0 => EcLevel::M,
            3 => EcLevel::Q,
            _ => EcLevel::H,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            EcLevel::L => 'L',
            EcLevel::M => 'M',
            EcLevel::Q => 'Q',
            EcLevel::H => 'H',
        }
    }
}

impl fmt::Display for EcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for EcLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            "H" => Ok(EcLevel::H),
            other => Err(Error::InvalidParameter(format!(
                "unknown error correction level {other:?}"
            ))),
        }
    }
}

/// Symbol version, 1..=40.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Version(u8);

impl Version {
    pub const DEFAULT: Version = Version(5);

    pub fn new(v: u32) -> Result<Self> {
        if (1..=40).contains(&v) {
            Ok(Version(v as u8))
        } else {
            Err(Error::InvalidVersion(v))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Modules per side, 17 + 4·version.
    pub fn size(self) -> usize {
        17 + 4 * self.0 as usize
    }

    pub fn from_size(n: usize) -> Result<Self> {
        if n < 21 || (n - 17) % 4 != 0 {
            return Err(Error::InvalidVersion(n.saturating_sub(17) as u32 / 4));
        }
        Version::new(((n - 17) / 4) as u32)
    }

    /// Centre coordinates shared by both axes of the alignment patterns.
    pub fn alignment_positions(self) -> Vec<usize> {
        let ver = self.0 as usize;
        if ver == 1 {
            return Vec::new();
        }
        let count = ver / 7 + 2;
        let step = (ver * 8 + count * 3 + 5) / (count * 4 - 4) * 2;
        let size = self.size();
        let mut out: Vec<usize> = (0..count - 1).map(|i| size - 7 - i * step).collect();
        out.push(6);
        out.reverse();
        out
    }

    /// Modules available for codeword bits, remainder bits included.
    pub fn raw_data_modules(self) -> usize {
        let ver = self.0 as usize;
        let mut result = (16 * ver + 128) * ver + 64;
        if ver >= 2 {
            let count = ver / 7 + 2;
            result -= (25 * count - 10) * count - 55;
            if ver >= 7 {
                result -= 36;
            }
        }
        result
    }

    pub fn total_codewords(self) -> usize {
        self.raw_data_modules() / 8
    }

    pub fn ecc_per_block(self, level: EcLevel) -> usize {
        ECC_CODEWORDS_PER_BLOCK[level.ordinal()][self.0 as usize] as usize
    }

    pub fn num_blocks(self, level: EcLevel) -> usize {
        NUM_ERROR_CORRECTION_BLOCKS[level.ordinal()][self.0 as usize] as usize
    }

    pub fn data_codewords(self, level: EcLevel) -> usize {
        self.total_codewords() - self.ecc_per_block(level) * self.num_blocks(level)
    }

    /// Width of the byte-mode character count field.
    pub fn byte_count_bits(self) -> usize {
        if self.0 <= 9 {
            8
        } else {
            16
        }
    }

    /// Largest byte-mode payload that fits.
    pub fn byte_capacity(self, level: EcLevel) -> usize {
        let bits = self.data_codewords(level) * 8;
        let header = 4 + self.byte_count_bits();
        bits.saturating_sub(header) / 8
    }

    /// Data-codeword lengths of each block, short blocks first.
    pub fn block_layout(self, level: EcLevel) -> Vec<usize> {
        let blocks = self.num_blocks(level);
        let total = self.total_codewords();
        let ecc = self.ecc_per_block(level);
        let short_blocks = blocks - total % blocks;
        let short_len = total / blocks - ecc;
        (0..blocks)
            .map(|i| short_len + usize::from(i >= short_blocks))
            .collect()
    }
}

impl From<Version> for u32 {
    fn from(v: Version) -> u32 {
        v.0 as u32
    }
}

impl TryFrom<u32> for Version {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        Version::new(v)
    }
}

impl Default for Version {
    fn default() -> Self {
        Version::DEFAULT
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[rustfmt::skip]
static ECC_CODEWORDS_PER_BLOCK: [[i8; 41]; 4] = [
    [-1,  7, 10, 15, 20, 26, 18, 20, 24, 30, 18, 20, 24, 26, 30, 22, 24, 28, 30, 28, 28, 28, 28, 30, 30, 26, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30],
    [-1, 10, 16, 26, 18, 24, 16, 18, 22, 22, 26, 30, 22, 22, 24, 24, 28, 28, 26, 26, 26, 26, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28],
    [-1, 13, 22, 18, 26, 18, 24, 18, 22, 20, 24, 28, 26, 24, 20, 30, 24, 28, 28, 26, 30, 28, 30, 30, 30, 30, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30],
    [-1, 17, 28, 22, 16, 22, 28, 26, 26, 24, 28, 24, 28, 22, 24, 24, 30, 28, 28, 26, 28, 30, 24, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30],
];

#[rustfmt::skip]
static NUM_ERROR_CORRECTION_BLOCKS: [[i8; 41]; 4] = [
    [-1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4,  4,  4,  4,  4,  6,  6,  6,  6,  7,  8,  8,  9,  9, 10, 12, 12, 12, 13, 14, 15, 16, 17, 18, 19, 19, 20, 21, 22, 24, 25],
    [-1, 1, 1, 1, 2, 2, 4, 4, 4, 5, 5,  5,  8,  9,  9, 10, 10, 11, 13, 14, 16, 17, 17, 18, 20, 21, 23, 25, 26, 28, 29, 31, 33, 35, 37, 38, 40, 43, 45, 47, 49],
    [-1, 1, 1, 2, 2, 4, 4, 6, 6, 8, 8,  8, 10, 12, 16, 12, 17, 16, 18, 21, 20, 23, 23, 25, 27, 29, 34, 34, 35, 38, 40, 43, 45, 48, 51, 53, 56, 59, 62, 65, 68],
    [-1, 1, 1, 2, 4, 4, 4, 5, 6, 8, 8, 11, 11, 16, 16, 18, 16, 19, 21, 25, 25, 25, 34, 30, 32, 35, 37, 40, 42, 45, 48, 51, 54, 57, 60, 63, 66, 70, 74, 77, 81],
];

/// 15-bit format word (BCH(15,5) masked with 0x5412).
pub fn format_word(level: EcLevel, mask: u8) -> u16 {
    let data = u32::from(level.format_bits() << 3 | mask);
    let mut rem = data;
    for _ in 0..10 {
        rem = (rem << 1) ^ ((rem >> 9) * 0x537);
    }
    (((data << 10) | rem) ^ 0x5412) as u16
}

/// 18-bit version word (Golay-like BCH(18,6)), versions 7 and up.
pub fn version_word(version: Version) -> u32 {
    let ver = u32::from(version.value());
    let mut rem = ver;
    for _ in 0..12 {
        rem = (rem << 1) ^ ((rem >> 11) * 0x1F25);
    }
    (ver << 12) | rem
}

/// Nearest valid format word; returns (level, mask, hamming distance).
pub fn decode_format_word(word: u16) -> (EcLevel, u8, u32) {
    let mut best = (EcLevel::M, 0u8, u32::MAX);
    for level in EcLevel::ALL {
        for mask in 0..8u8 {
            let d = (format_word(level, mask) ^ word).count_ones();
            if d < best.2 {
                best = (level, mask, d);
            }
        }
    }
    best
}

/// Nearest valid version word; returns (version, hamming distance).
pub fn decode_version_word(word: u32) -> (Version, u32) {
    let mut best = (Version(7), u32::MAX);
    for v in 7..=40u32 {
        let version = Version(v as u8);
        let d = (version_word(version) ^ word).count_ones();
        if d < best.1 {
            best = (version, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_five_geometry() {
        let v = Version::new(5).unwrap();
        assert_eq!(v.size(), 37);
        assert_eq!(v.alignment_positions(), vec![6, 30]);
        assert_eq!(v.total_codewords(), 134);
        assert_eq!(v.raw_data_modules(), 134 * 8 + 7);
        assert_eq!(v.data_codewords(EcLevel::L), 108);
        assert_eq!(v.data_codewords(EcLevel::M), 86);
        assert_eq!(v.data_codewords(EcLevel::Q), 62);
        assert_eq!(v.data_codewords(EcLevel::H), 46);
        assert_eq!(v.block_layout(EcLevel::Q), vec![15, 15, 16, 16]);
        assert_eq!(v.byte_capacity(EcLevel::L), 106);
        assert_eq!(v.byte_capacity(EcLevel::H), 44);
    }

    #[test]
    fn alignment_table_spot_checks() {
        assert_eq!(Version::new(7).unwrap().alignment_positions(), vec![6, 22, 38]);
        assert_eq!(
            Version::new(32).unwrap().alignment_positions(),
            vec![6, 34, 60, 86, 112, 138]
        );
        assert_eq!(
            Version::new(40).unwrap().alignment_positions(),
            vec![6, 30, 58, 86, 114, 142, 170]
        );
    }

    #[test]
    fn format_words_are_known_values() {
        // M with mask 0 and L with mask 4 from the standard's table
        assert_eq!(format_word(EcLevel::M, 0), 0x5412);
        assert_eq!(format_word(EcLevel::L, 4), 0b110011000101111);
        assert_eq!(format_word(EcLevel::L, 0), 0b111011111000100);
        assert_eq!(decode_format_word(format_word(EcLevel::H, 5) ^ 0b101), (EcLevel::H, 5, 2));
    }

    #[test]
    fn version_word_for_seven() {
        assert_eq!(version_word(Version::new(7).unwrap()), 0x07C94);
    }

    #[test]
    fn rejects_out_of_range_versions() {
        assert!(Version::new(0).is_err());
        assert!(Version::new(41).is_err());
        assert!(Version::from_size(38).is_err());
        assert_eq!(Version::from_size(37).unwrap().value(), 5);
    }
}
