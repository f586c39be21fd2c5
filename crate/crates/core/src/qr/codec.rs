use super::layout::mask_bit;
use super::{decode_format_word, layout, CodeTarget, EcLevel, Message, Version};
use crate::error::{Error, Result};
use crate::gf256::{rs_correct, rs_encode};

/// Interleaved positions of each block's data and check codewords.
pub(crate) struct BlockMap {
    pub data: Vec<Vec<usize>>,
    pub ecc: Vec<Vec<usize>>,
}

impl BlockMap {
    pub fn new(version: Version, level: EcLevel) -> Self {
        let lens = version.block_layout(level);
        let blocks = lens.len();
        let short_len = lens[0];
        let short_blocks = lens.iter().filter(|&&l| l == short_len).count();
        let data_total: usize = lens.iter().sum();
        let ecc_len = version.ecc_per_block(level);
        let mut data = Vec::with_capacity(blocks);
        let mut ecc = Vec::with_capacity(blocks);
        for (b, &len) in lens.iter().enumerate() {
            data.push(
                (0..len)
                    .map(|j| {
                        if j < short_len {
                            j * blocks + b
                        } else {
                            short_len * blocks + (b - short_blocks)
                        }
                    })
                    .collect(),
            );
            ecc.push((0..ecc_len).map(|j| data_total + j * blocks + b).collect());
        }
        BlockMap { data, ecc }
    }

    /// (block, offset) of each data codeword in stream order.
    pub fn stream_positions(&self) -> Vec<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .flat_map(|(b, d)| (0..d.len()).map(move |j| (b, j)))
            .collect()
    }
}

/// Data codewords of a byte-mode message: header, payload, terminator and
/// alternating 0xEC/0x11 pad codewords.
pub(crate) fn data_codewords(msg: &Message) -> Vec<u8> {
    let capacity_bits = msg.version.data_codewords(msg.ec_level) * 8;
    let mut bits: Vec<bool> = Vec::with_capacity(capacity_bits);
    let mut push = |value: u32, len: usize| {
        for i in (0..len).rev() {
            bits.push((value >> i) & 1 == 1);
        }
    };
    push(0b0100, 4);
    push(msg.bytes.len() as u32, msg.version.byte_count_bits());
    for &b in &msg.bytes {
        push(u32::from(b), 8);
    }
    let terminator = (capacity_bits - bits.len()).min(4);
    bits.extend(std::iter::repeat_n(false, terminator));
    let aligned = bits.len().div_ceil(8) * 8;
    bits.resize(aligned, false);
    let mut out: Vec<u8> = bits
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
        .collect();
    let mut pad = [0xEC, 0x11].into_iter().cycle();
    while out.len() < capacity_bits / 8 {
        out.push(pad.next().unwrap());
    }
    out
}

/// Lays out `msg` as a symbol with the given mask pattern.
pub fn encode_message(msg: &Message, mask: u8) -> Result<CodeTarget> {
    if mask > 7 {
        return Err(Error::InvalidMask(mask));
    }
    msg.check_capacity()?;
    let version = msg.version;
    let level = msg.ec_level;
    let layout = layout(version);
    let data = data_codewords(msg);

    let map = BlockMap::new(version, level);
    let ecc_len = version.ecc_per_block(level);
    let mut codewords = vec![0u8; version.total_codewords()];
    let mut offset = 0;
    for (positions, ecc_positions) in map.data.iter().zip(&map.ecc) {
        let block = &data[offset..offset + positions.len()];
        offset += positions.len();
        for (&p, &c) in positions.iter().zip(block) {
            codewords[p] = c;
        }
        for (&p, c) in ecc_positions.iter().zip(rs_encode(block, ecc_len)) {
            codewords[p] = c;
        }
    }

    let n = layout.n;
    let mut dark = layout.function_dark.clone();
    layout.draw_format(&mut dark, level, mask);
    for (i, &module) in layout.codeword_bits.iter().enumerate() {
        let bit = (codewords[i / 8] >> (7 - i % 8)) & 1 == 1;
        dark[module] = bit ^ mask_bit(mask, module % n, module / n);
    }
    for &module in &layout.remainder_bits {
        dark[module] = mask_bit(mask, module % n, module / n);
    }

    let bits = dark.iter().map(|&d| u8::from(!d)).collect();
    CodeTarget::from_bits(version, level, mask, bits)
}

/// Recovers the message embedded in a module pattern, correcting codeword
/// errors up to the Reed-Solomon capacity.
pub fn rs_decode_payload(target: &CodeTarget) -> Result<Message> {
    decode_dark_modules(target.version(), &target.dark_modules()).map(|(m, _)| m)
}

/// Decodes a dark-module matrix of the given version. Also returns the mask
/// read from the format information.
pub fn decode_dark_modules(version: Version, dark: &[bool]) -> Result<(Message, u8)> {
    let layout = layout(version);
    let n = layout.n;
    if dark.len() != n * n {
        return Err(Error::dims((n, n), (dark.len(), 1)));
    }

    let mut best: Option<(EcLevel, u8, u32)> = None;
    for copy in &layout.format_copies {
        let word = copy
            .iter()
            .enumerate()
            .fold(0u16, |acc, (b, &i)| acc | (u16::from(dark[i]) << b));
        let candidate = decode_format_word(word);
        if best.is_none_or(|b| candidate.2 < b.2) {
            best = Some(candidate);
        }
    }
    let (level, mask, distance) = best.expect("two format copies");
    if distance > 3 {
        return Err(Error::FormatError);
    }

    let mut codewords = vec![0u8; version.total_codewords()];
    for (i, &module) in layout.codeword_bits.iter().enumerate() {
        let bit = dark[module] ^ mask_bit(mask, module % n, module / n);
        if bit {
            codewords[i / 8] |= 1 << (7 - i % 8);
        }
    }

    let map = BlockMap::new(version, level);
    let ecc_len = version.ecc_per_block(level);
    let mut data = Vec::with_capacity(version.data_codewords(level));
    for (b, (positions, ecc_positions)) in map.data.iter().zip(&map.ecc).enumerate() {
        let mut block: Vec<u8> = positions
            .iter()
            .chain(ecc_positions)
            .map(|&p| codewords[p])
            .collect();
        rs_correct(&mut block, ecc_len).ok_or(Error::Unrecoverable { block: b })?;
        data.extend_from_slice(&block[..positions.len()]);
    }

    let bytes = parse_segments(&data, version)?;
    Ok((
        Message {
            bytes,
            ec_level: level,
            version,
        },
        mask,
    ))
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn remaining(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    fn read(&mut self, len: usize) -> Result<u32> {
        if len > self.remaining() {
            return Err(Error::MalformedPayload("segment runs past end of data".into()));
        }
        let mut v = 0u32;
        for _ in 0..len {
            let bit = (self.data[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }
}

const ALPHANUMERIC: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";

fn parse_segments(data: &[u8], version: Version) -> Result<Vec<u8>> {
    let v = version.value();
    let class = if v <= 9 {
        0
    } else if v <= 26 {
        1
    } else {
        2
    };
    let mut reader = BitReader { data, pos: 0 };
    let mut out = Vec::new();
    while reader.remaining() >= 4 {
        match reader.read(4)? {
            0 => break,
            1 => {
                let count = reader.read([10, 12, 14][class])? as usize;
                let mut left = count;
                while left >= 3 {
                    let value = reader.read(10)?;
                    if value > 999 {
                        return Err(Error::MalformedPayload("numeric group out of range".into()));
                    }
                    out.extend(format!("{value:03}").bytes());
                    left -= 3;
                }
                if left == 2 {
                    out.extend(format!("{:02}", reader.read(7)?).bytes());
                } else if left == 1 {
                    out.extend(format!("{}", reader.read(4)?).bytes());
                }
            }
            2 => {
                let count = reader.read([9, 11, 13][class])? as usize;
                let lookup = |i: u32| {
                    ALPHANUMERIC
                        .get(i as usize)
                        .copied()
                        .ok_or_else(|| Error::MalformedPayload("alphanumeric value out of range".into()))
                };
                for _ in 0..count / 2 {
                    let value = reader.read(11)?;
                    out.push(lookup(value / 45)?);
                    out.push(lookup(value % 45)?);
                }
                if count % 2 == 1 {
                    out.push(lookup(reader.read(6)?)?);
                }
            }
            4 => {
                let count = reader.read([8, 16, 16][class])? as usize;
                for _ in 0..count {
                    out.push(reader.read(8)? as u8);
                }
            }
            7 => {
                // ECI designator is accepted but not applied
                let first = reader.read(8)?;
                if first & 0x80 != 0 {
                    let extra = if first & 0x40 == 0 { 8 } else { 16 };
                    reader.read(extra)?;
                }
            }
            mode => {
                return Err(Error::MalformedPayload(format!("unsupported mode {mode:#06b}")));
            }
        }
    }
    Ok(out)
}
