//! Standard QR encoding and decoding, plus the GF(2) machinery that lets
//! module patterns be rearranged without changing the decoded message.

mod basis;
mod codec;
mod layout;
mod mask;
mod tables;

use std::sync::OnceLock;

pub use basis::{compute_free_bit_basis, FreeBitBasis};
pub use codec::{decode_dark_modules, encode_message, rs_decode_payload};
pub use layout::{mask_bit, Layout, ModuleRole};
pub use mask::ModuleMask;
pub use tables::{decode_format_word, decode_version_word, format_word, version_word, EcLevel, Version};

use crate::error::{Error, Result};

/// Cached geometry for a version.
pub fn layout(version: Version) -> &'static Layout {
    static LAYOUTS: [OnceLock<Layout>; 40] = [const { OnceLock::new() }; 40];
    LAYOUTS[version.value() as usize - 1].get_or_init(|| Layout::new(version))
}

/// A payload together with the symbol parameters it is encoded under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub bytes: Vec<u8>,
    pub ec_level: EcLevel,
    pub version: Version,
}

impl Message {
    pub fn new(bytes: impl Into<Vec<u8>>, ec_level: EcLevel, version: Version) -> Result<Self> {
        let msg = Message {
            bytes: bytes.into(),
            ec_level,
            version,
        };
        msg.check_capacity()?;
        Ok(msg)
    }

    pub fn check_capacity(&self) -> Result<()> {
        let capacity = self.version.byte_capacity(self.ec_level);
        if self.bytes.len() > capacity {
            return Err(Error::CapacityExceeded {
                len: self.bytes.len(),
                capacity,
                version: self.version.value(),
                level: self.ec_level.as_char(),
            });
        }
        Ok(())
    }

    /// Bits occupied by mode, count, payload and terminator, rounded up to
    /// whole codewords. Everything after this is pad codewords.
    pub fn payload_codewords(&self) -> usize {
        let data_bits = self.version.data_codewords(self.ec_level) * 8;
        let used = 4 + self.version.byte_count_bits() + 8 * self.bytes.len();
        let with_terminator = (used + 4).min(data_bits);
        with_terminator.div_ceil(8)
    }

    /// Number of pad codewords following the terminator.
    pub fn pad_codewords(&self) -> usize {
        self.version.data_codewords(self.ec_level) - self.payload_codewords()
    }
}

/// The ideal module colours of a symbol: `bits[y * n + x]` is 1 for white and
/// 0 for black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeTarget {
    version: Version,
    ec_level: EcLevel,
    mask: u8,
    bits: Vec<u8>,
}

impl CodeTarget {
    /// Wraps an existing module pattern. Bits must be 0 or 1.
    pub fn from_bits(version: Version, ec_level: EcLevel, mask: u8, bits: Vec<u8>) -> Result<Self> {
        let n = version.size();
        if bits.len() != n * n {
            return Err(Error::dims((n, n), (bits.len(), 1)));
        }
        if mask > 7 {
            return Err(Error::InvalidMask(mask));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("module bits must be 0 or 1".into()));
        }
        Ok(CodeTarget {
            version,
            ec_level,
            mask,
            bits,
        })
    }

    pub fn version(&self) -> Version {
        self.version
    }

    pub fn ec_level(&self) -> EcLevel {
        self.ec_level
    }

    pub fn mask(&self) -> u8 {
        self.mask
    }

    pub fn n(&self) -> usize {
        self.version.size()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Module colour at column `x`, row `y`.
    pub fn bit(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.n() + x]
    }

    pub fn roles(&self) -> &'static [ModuleRole] {
        &layout(self.version).roles
    }

    pub fn role(&self, x: usize, y: usize) -> ModuleRole {
        self.roles()[y * self.n() + x]
    }

    /// Dark-module view (true = black) used by the decoder.
    pub fn dark_modules(&self) -> Vec<bool> {
        self.bits.iter().map(|&b| b == 0).collect()
    }

    pub fn to_mask(&self) -> ModuleMask {
        ModuleMask::from_fn(self.n(), |i| self.bits[i] == 1)
    }

    /// Flips every module set in `delta`.
    pub fn xor(&self, delta: &ModuleMask) -> CodeTarget {
        let mut out = self.clone();
        for i in delta.iter_ones() {
            out.bits[i] ^= 1;
        }
        out
    }

    /// Number of data-region modules where `self` and `other` disagree.
    pub fn data_distance(&self, other: &[u8]) -> usize {
        self.bits
            .iter()
            .zip(other)
            .zip(self.roles())
            .filter(|((a, b), r)| r.is_data_region() && a != b)
            .count()
    }

    /// Row-major '0'/'1' string.
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(version: Version, ec_level: EcLevel, mask: u8, s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::InvalidParameter(format!("bad module character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        CodeTarget::from_bits(version, ec_level, mask, bits)
    }
}
