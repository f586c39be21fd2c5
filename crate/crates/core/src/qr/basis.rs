use super::codec::BlockMap;
use super::{layout, CodeTarget, Message, ModuleMask};
use crate::error::{Error, Result};
use crate::gf256::rs_encode;

/// Module flips that leave the decoded message unchanged.
///
/// Each vector toggles one bit of a pad codeword together with the check
/// codeword bits that change with it. Reed-Solomon encoding is linear over
/// GF(2), so any XOR combination of vectors applied to a valid layout is
/// again a valid layout carrying the same payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeBitBasis {
    n: usize,
    vectors: Vec<ModuleMask>,
    /// Module holding the pad bit each vector flips.
    pivots: Vec<usize>,
}

impl FreeBitBasis {
    pub fn empty(n: usize) -> Self {
        FreeBitBasis {
            n,
            vectors: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vectors(&self) -> &[ModuleMask] {
        &self.vectors
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }
}

pub fn compute_free_bit_basis(msg: &Message, target: &CodeTarget) -> Result<FreeBitBasis> {
    if target.version() != msg.version || target.ec_level() != msg.ec_level {
        return Err(Error::InvalidParameter(format!(
            "target is version {} level {}, message is version {} level {}",
            target.version(),
            target.ec_level(),
            msg.version,
            msg.ec_level
        )));
    }
    msg.check_capacity()?;
    let version = msg.version;
    let level = msg.ec_level;
    let layout = layout(version);
    let n = layout.n;
    let map = BlockMap::new(version, level);
    let ecc_len = version.ecc_per_block(level);
    let stream = map.stream_positions();

    let mut vectors = Vec::new();
    let mut pivots = Vec::new();
    for &(block, offset) in &stream[msg.payload_codewords()..] {
        let block_len = map.data[block].len();
        let codeword = map.data[block][offset];
        for bit in 0..8 {
            let mut unit = vec![0u8; block_len];
            unit[offset] = 0x80 >> bit;
            let ecc = rs_encode(&unit, ecc_len);

            let mut v = ModuleMask::new(n);
            let pivot = layout.codeword_bits[codeword * 8 + bit];
            v.set(pivot);
            for (&q, &byte) in map.ecc[block].iter().zip(&ecc) {
                for b in 0..8 {
                    if (byte >> (7 - b)) & 1 == 1 {
                        v.set(layout.codeword_bits[q * 8 + b]);
                    }
                }
            }
            vectors.push(v);
            pivots.push(pivot);
        }
    }
    Ok(FreeBitBasis { n, vectors, pivots })
}
