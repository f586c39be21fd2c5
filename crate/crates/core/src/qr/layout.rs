//! Module geometry of a QR symbol: function patterns, module roles and the
//! zigzag order in which codeword bits are placed.

use serde::{Deserialize, Serialize};

use super::tables::{format_word, version_word, EcLevel, Version};

/// What a module is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModuleRole {
    /// Finder pattern including its light separator.
    Finder,
    Alignment,
    Timing,
    /// Format information, version information and the fixed dark module.
    FormatVersion,
    /// Message data or error correction codeword bits.
    Data,
    /// Remainder bits that belong to no codeword.
    Padding,
}

impl ModuleRole {
    /// Fixed structure a scanner relies on for locating the symbol.
    pub fn is_marker(self) -> bool {
        matches!(self, ModuleRole::Finder | ModuleRole::Alignment)
    }

    pub fn is_function(self) -> bool {
        !matches!(self, ModuleRole::Data | ModuleRole::Padding)
    }

    /// Modules counted by the error level: codeword and remainder bits.
    pub fn is_data_region(self) -> bool {
        matches!(self, ModuleRole::Data | ModuleRole::Padding)
    }
}

/// Static geometry of one version. Indices are `y * n + x`.
#[derive(Clone, Debug)]
pub struct Layout {
    pub version: Version,
    pub n: usize,
    pub roles: Vec<ModuleRole>,
    /// Dark/light for function modules other than format bits.
    pub function_dark: Vec<bool>,
    /// Module index of codeword bit `i` (codeword `i / 8`, MSB first).
    pub codeword_bits: Vec<usize>,
    pub remainder_bits: Vec<usize>,
    /// Module indices of format bit `i` in the two copies.
    pub format_copies: [[usize; 15]; 2],
    /// Module indices of version bit `i` in the two copies (v7+).
    pub version_copies: Option<[[usize; 18]; 2]>,
}

impl Layout {
    pub fn new(version: Version) -> Self {
        let n = version.size();
        let mut roles = vec![ModuleRole::Data; n * n];
        let mut dark = vec![false; n * n];
        let idx = |x: usize, y: usize| y * n + x;

        for i in 0..n {
            roles[idx(6, i)] = ModuleRole::Timing;
            dark[idx(6, i)] = i % 2 == 0;
            roles[idx(i, 6)] = ModuleRole::Timing;
            dark[idx(i, 6)] = i % 2 == 0;
        }

        for (cx, cy) in [(3i64, 3i64), (n as i64 - 4, 3), (3, n as i64 - 4)] {
            for dy in -4i64..=4 {
                for dx in -4i64..=4 {
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x >= n as i64 || y >= n as i64 {
                        continue;
                    }
                    let dist = dx.abs().max(dy.abs());
                    let i = idx(x as usize, y as usize);
                    roles[i] = ModuleRole::Finder;
                    dark[i] = dist != 2 && dist != 4;
                }
            }
        }

        let align = version.alignment_positions();
        for (ai, &ay) in align.iter().enumerate() {
            for (aj, &ax) in align.iter().enumerate() {
                let last = align.len() - 1;
                if (ai == 0 && aj == 0) || (ai == 0 && aj == last) || (ai == last && aj == 0) {
                    continue;
                }
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let i = idx((ax as i64 + dx) as usize, (ay as i64 + dy) as usize);
                        roles[i] = ModuleRole::Alignment;
                        dark[i] = dx.abs().max(dy.abs()) != 1;
                    }
                }
            }
        }

        let format_copies = format_positions(n);
        for copy in &format_copies {
            for &i in copy {
                roles[i] = ModuleRole::FormatVersion;
            }
        }
        let dark_module = idx(8, n - 8);
        roles[dark_module] = ModuleRole::FormatVersion;
        dark[dark_module] = true;

        let version_copies = (version.value() >= 7).then(|| {
            let bits = version_word(version);
            let mut copies = [[0usize; 18]; 2];
            for b in 0..18 {
                let a = n - 11 + b % 3;
                let c = b / 3;
                copies[0][b] = idx(a, c);
                copies[1][b] = idx(c, a);
                for &i in &[idx(a, c), idx(c, a)] {
                    roles[i] = ModuleRole::FormatVersion;
                    dark[i] = (bits >> b) & 1 == 1;
                }
            }
            copies
        });

        let mut codeword_bits = Vec::with_capacity(version.raw_data_modules());
        let mut right = n as i64 - 1;
        while right >= 1 {
            if right == 6 {
                right = 5;
            }
            for vert in 0..n {
                for j in 0..2 {
                    let x = (right - j) as usize;
                    let upward = (right + 1) & 2 == 0;
                    let y = if upward { n - 1 - vert } else { vert };
                    if !roles[idx(x, y)].is_function() {
                        codeword_bits.push(idx(x, y));
                    }
                }
            }
            right -= 2;
        }
        let total_bits = version.total_codewords() * 8;
        let remainder_bits = codeword_bits.split_off(total_bits);
        for &i in &remainder_bits {
            roles[i] = ModuleRole::Padding;
        }

        Layout {
            version,
            n,
            roles,
            function_dark: dark,
            codeword_bits,
            remainder_bits,
            format_copies,
            version_copies,
        }
    }

    /// Writes both format copies (dark = true) into `dark`.
    pub fn draw_format(&self, dark: &mut [bool], level: EcLevel, mask: u8) {
        let word = format_word(level, mask);
        for copy in &self.format_copies {
            for (b, &i) in copy.iter().enumerate() {
                dark[i] = (word >> b) & 1 == 1;
            }
        }
    }
}

/// Module indices of the 15 format bits, bit 0 first, for both copies.
fn format_positions(n: usize) -> [[usize; 15]; 2] {
    let idx = |x: usize, y: usize| y * n + x;
    let mut first = [0usize; 15];
    for (i, slot) in first.iter_mut().enumerate().take(6) {
        *slot = idx(8, i);
    }
    first[6] = idx(8, 7);
    first[7] = idx(8, 8);
    first[8] = idx(7, 8);
    for i in 9..15 {
        first[i] = idx(14 - i, 8);
    }
    let mut second = [0usize; 15];
    for (i, slot) in second.iter_mut().enumerate().take(8) {
        *slot = idx(n - 1 - i, 8);
    }
    for i in 8..15 {
        second[i] = idx(8, n - 15 + i);
    }
    [first, second]
}

/// Whether mask pattern `mask` inverts the module at column `x`, row `y`.
pub fn mask_bit(mask: u8, x: usize, y: usize) -> bool {
    match mask {
        0 => (x + y) % 2 == 0,
        1 => y % 2 == 0,
        2 => x % 3 == 0,
        3 => (x + y) % 3 == 0,
        4 => (x / 3 + y / 2) % 2 == 0,
        5 => x * y % 2 + x * y % 3 == 0,
        6 => (x * y % 2 + x * y % 3) % 2 == 0,
        7 => ((x + y) % 2 + x * y % 3) % 2 == 0,
        _ => unreachable!("mask validated by caller"),
    }
}
