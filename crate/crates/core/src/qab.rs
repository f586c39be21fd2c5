//! Blueprint construction: polarize the guidance luminance, steer the free
//! codeword bits toward the picture, then blend with adaptively sized
//! control squares and stamp the locator markers on top.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{DecodeParams, Eta, ModuleGrid};
use crate::error::{Error, Result};
use crate::qr::{compute_free_bit_basis, encode_message, CodeTarget, EcLevel, FreeBitBasis, Message, ModuleMask, Version};
use crate::raster::GrayImage;

const PPM: u128 = 1_000_000;

/// Gray-level lookup table produced by histogram polarization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolarizeMap {
    table: [u8; 256],
}

impl PolarizeMap {
    pub fn table(&self) -> &[u8; 256] {
        &self.table
    }

    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        let data = img.data().iter().map(|&v| self.table[v as usize]).collect();
        GrayImage::from_vec(img.width(), img.height(), data).expect("same dimensions")
    }
}

/// `num / den` rounded half up.
fn round_ratio(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Equalizes the histogram onto [0, L − T_w + T_b] and lifts the upper part
/// past the dead zone, so no output level falls strictly between T_b and T_w.
pub fn histogram_polarize(img: &GrayImage, params: &DecodeParams) -> (GrayImage, PolarizeMap) {
    let mut hist = [0u128; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total: u128 = img.data().len().max(1) as u128;
    let p = u128::from(params.eta.ppm());
    let floor_tb = (128 * (PPM - p) / PPM) as u8;
    let ceil_tw = (128 * (PPM + p)).div_ceil(PPM).min(255) as u8;

    let mut table = [0u8; 256];
    let mut cum = 0u128;
    for (level, &count) in hist.iter().enumerate() {
        cum += count;
        let den = PPM * total;
        // τ̃ < T_b reduces to cdf < 1/2 because both carry the factor 1 − η.
        table[level] = if 2 * cum < total {
            let v = round_ratio(256 * (PPM - p) * cum, den);
            v.min(u128::from(floor_tb)) as u8
        } else {
            let v = round_ratio(256 * ((PPM - p) * cum + p * total), den);
            v.clamp(u128::from(ceil_tw), 255) as u8
        };
    }
    let map = PolarizeMap { table };
    (map.apply(img), map)
}

/// Per-module majority vote of the thresholded pixels. Exact ties keep the
/// bit of `fallback`.
pub fn binarize_per_module(
    hc: &GrayImage,
    grid: &ModuleGrid,
    params: &DecodeParams,
    fallback: &CodeTarget,
) -> Result<Vec<u8>> {
    grid.check_fits(hc.width(), hc.height())?;
    if fallback.n() != grid.n {
        return Err(Error::dims((grid.n, grid.n), (fallback.n(), fallback.n())));
    }
    let mut out = Vec::with_capacity(grid.n * grid.n);
    let mut dead = 0;
    for my in 0..grid.n {
        for mx in 0..grid.n {
            let (x0, y0) = grid.module_origin(mx, my);
            let (mut black, mut white) = (0usize, 0usize);
            for y in y0..y0 + grid.a {
                for x in x0..x0 + grid.a {
                    match params.eta.classify(u64::from(hc.get(x, y)), 1) {
                        0 => black += 1,
                        1 => white += 1,
                        _ => dead += 1,
                    }
                }
            }
            out.push(match white.cmp(&black) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => fallback.bit(mx, my),
            });
        }
    }
    if dead > 0 {
        return Err(Error::DeadZonePixels { count: dead });
    }
    Ok(out)
}

/// Modules of the data region ordered from the symbol centre outward, so
/// the free bits are spent where the picture usually matters most.
fn centre_first(target: &CodeTarget) -> Vec<usize> {
    let n = target.n();
    let c = (n - 1) as i64;
    let mut order: Vec<usize> = (0..n * n).filter(|&i| target.roles()[i].is_data_region()).collect();
    order.sort_by_key(|&i| {
        let (x, y) = ((i % n) as i64 * 2 - c, (i / n) as i64 * 2 - c);
        (x * x + y * y, i)
    });
    order
}

/// Picks the member of `target ⊕ span(basis)` closest to `desired` on the
/// data region. Columns are pinned by Gaussian elimination in centre-first
/// order, then single reduced vectors are applied while any of them still
/// lowers the distance (largest gain first). Never returns a layout farther
/// from `desired` than `target`.
pub fn module_reorganize(target: &CodeTarget, desired: &[u8], basis: &FreeBitBasis) -> Result<CodeTarget> {
    let n = target.n();
    if desired.len() != n * n {
        return Err(Error::dims((n, n), (desired.len(), 1)));
    }
    if basis.rank() == 0 {
        return Ok(target.clone());
    }
    if basis.n() != n {
        return Err(Error::dims((n, n), (basis.n(), basis.n())));
    }
    let want = ModuleMask::from_fn(n, |i| desired[i] == 1);
    let region = ModuleMask::from_fn(n, |i| target.roles()[i].is_data_region());
    let mut cur = target.to_mask();
    let mut rows: Vec<ModuleMask> = basis.vectors().to_vec();
    let mut free: Vec<usize> = (0..rows.len()).collect();

    for col in centre_first(target) {
        if free.is_empty() {
            break;
        }
        let Some(slot) = free.iter().position(|&r| rows[r].get(col)) else {
            continue;
        };
        let pivot = free.swap_remove(slot);
        let pivot_row = rows[pivot].clone();
        for &r in &free {
            if rows[r].get(col) {
                rows[r].xor_assign(&pivot_row);
            }
        }
        if cur.get(col) != want.get(col) {
            cur.xor_assign(&pivot_row);
        }
    }

    loop {
        let mut diff = cur.clone();
        diff.xor_assign(&want);
        let best = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let fixes = r.overlap(&diff) as i64;
                let touched = r.overlap(&region) as i64;
                (2 * fixes - touched, i)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        match best {
            Some((gain, i)) if gain > 0 => cur.xor_assign(&rows[i]),
            _ => break,
        }
    }

    let mut delta = cur;
    delta.xor_assign(&target.to_mask());
    let out = target.xor(&delta);
    if out.data_distance(desired) > target.data_distance(desired) {
        return Ok(target.clone());
    }
    Ok(out)
}

/// The fused image together with everything needed to verify or refine it.
#[derive(Clone, Debug, PartialEq)]
pub struct Blueprint {
    pub image: GrayImage,
    pub grid: ModuleGrid,
    pub reorganized: CodeTarget,
    /// Side of the filled centre square of each module, row-major. Marker
    /// modules, which are stamped whole, record the full module side.
    pub u_map: Vec<usize>,
    pub params: DecodeParams,
}

/// Smallest control square allowed by default: four pixels, and never less
/// than the sampling window so that the sampled centre is always flat.
pub fn default_u_min(params: &DecodeParams, a: usize) -> usize {
    4.max(params.window).min(a)
}

pub fn adaptive_halftone(
    hc: &GrayImage,
    reorganized: &CodeTarget,
    grid: &ModuleGrid,
    params: &DecodeParams,
) -> Result<Blueprint> {
    adaptive_halftone_with(hc, reorganized, grid, params, default_u_min(params, grid.a))
}

/// Chooses, per module, the control-square side u in `u_min..=a` whose
/// simulated module mean lands closest to the module's threshold (T_b for
/// black, T_w for white), and fills that centred square with 0 or 255.
pub fn adaptive_halftone_with(
    hc: &GrayImage,
    reorganized: &CodeTarget,
    grid: &ModuleGrid,
    params: &DecodeParams,
    u_min: usize,
) -> Result<Blueprint> {
    grid.check_fits(hc.width(), hc.height())?;
    if reorganized.n() != grid.n {
        return Err(Error::dims((grid.n, grid.n), (reorganized.n(), reorganized.n())));
    }
    let a = grid.a;
    if u_min > a {
        return Err(Error::InvalidParameter(format!("u_min {u_min} exceeds module size {a}")));
    }
    let n = grid.n;
    let p = i128::from(params.eta.ppm());
    let ppm = PPM as i128;
    let a2 = (a * a) as i128;

    let sizes: Vec<usize> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (mx, my) = (k % n, k / n);
            if reorganized.role(mx, my).is_marker() {
                return a;
            }
            let bit = reorganized.bit(mx, my);
            let fill = 255 * i128::from(bit);
            let goal = if bit == 1 { 128 * (ppm + p) * a2 } else { 128 * (ppm - p) * a2 };
            let (x0, y0) = grid.module_origin(mx, my);
            // prefix sums over the module block
            let mut pre = vec![0i128; (a + 1) * (a + 1)];
            for y in 0..a {
                for x in 0..a {
                    pre[(y + 1) * (a + 1) + x + 1] = i128::from(hc.get(x0 + x, y0 + y)) + pre[y * (a + 1) + x + 1]
                        + pre[(y + 1) * (a + 1) + x]
                        - pre[y * (a + 1) + x];
                }
            }
            let rect = |x: usize, y: usize, s: usize| {
                pre[(y + s) * (a + 1) + x + s] - pre[y * (a + 1) + x + s] - pre[(y + s) * (a + 1) + x] + pre[y * (a + 1) + x]
            };
            let total = rect(0, 0, a);
            let mut best = (i128::MAX, u_min);
            for u in u_min..=a {
                let off = (a - u) / 2;
                let inside = rect(off, off, u);
                let scaled = ppm * ((u * u) as i128 * fill + total - inside);
                let d = (scaled - goal).abs();
                if d < best.0 {
                    best = (d, u);
                }
            }
            best.1
        })
        .collect();

    let mut image = hc.clone();
    for (k, &u) in sizes.iter().enumerate() {
        let (mx, my) = (k % n, k / n);
        if reorganized.role(mx, my).is_marker() {
            continue;
        }
        let fill = 255 * reorganized.bit(mx, my);
        let (x0, y0) = grid.centre_square(mx, my, u);
        for y in y0..y0 + u {
            for x in x0..x0 + u {
                image.set(x, y, fill);
            }
        }
    }
    Ok(Blueprint {
        image,
        grid: *grid,
        reorganized: reorganized.clone(),
        u_map: sizes,
        params: *params,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkerStyle {
    /// Whole finder (with separator) and alignment modules.
    #[default]
    Square,
    /// Only the central arms of each marker.
    CrossCenterOnly,
}

impl std::str::FromStr for MarkerStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(MarkerStyle::Square),
            "cross" | "cross-center" | "cross-center-only" => Ok(MarkerStyle::CrossCenterOnly),
            other => Err(Error::InvalidParameter(format!("unknown marker style {other:?}"))),
        }
    }
}

/// Centres of the alignment patterns, in module coordinates.
pub fn alignment_centres(version: Version) -> Vec<(usize, usize)> {
    let pos = version.alignment_positions();
    let Some((&first, &last)) = pos.first().zip(pos.last()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for &y in &pos {
        for &x in &pos {
            let corner = (x == first && y == first) || (x == last && y == first) || (x == first && y == last);
            if !corner {
                out.push((x, y));
            }
        }
    }
    out
}

/// Pixels on the central arms of the finder and alignment markers: 3-module
/// wide arms spanning each finder, 1-module arms spanning each alignment
/// pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossCenterMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl CrossCenterMask {
    pub fn new(version: Version, grid: &ModuleGrid, width: usize, height: usize) -> Result<Self> {
        grid.check_fits(width, height)?;
        let n = version.size();
        if n != grid.n {
            return Err(Error::dims((n, n), (grid.n, grid.n)));
        }
        let mut modules = vec![false; n * n];
        let mut mark = |x: usize, y: usize| modules[y * n + x] = true;
        for (fx, fy) in [(0, 0), (n - 7, 0), (0, n - 7)] {
            for i in 0..7 {
                for j in 2..5 {
                    mark(fx + i, fy + j);
                    mark(fx + j, fy + i);
                }
            }
        }
        for (cx, cy) in alignment_centres(version) {
            for i in 0..5 {
                mark(cx + i - 2, cy);
                mark(cx, cy + i - 2);
            }
        }
        let data = (0..width * height)
            .map(|i| grid.module_at(i % width, i / width).is_some_and(|(mx, my)| modules[my * n + mx]))
            .collect();
        Ok(CrossCenterMask { width, height, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Stamps the marker template onto the blueprint. Square style writes every
/// finder, separator and alignment module in full; the cross style writes
/// only the cross-centre arms.
pub fn affix_markers(bp: &Blueprint, style: MarkerStyle) -> Result<Blueprint> {
    let mut out = bp.clone();
    let (w, h) = bp.image.dims();
    let target = &bp.reorganized;
    let cross = match style {
        MarkerStyle::Square => None,
        MarkerStyle::CrossCenterOnly => Some(CrossCenterMask::new(target.version(), &bp.grid, w, h)?),
    };
    let e = bp.grid.extent();
    let (ox, oy) = bp.grid.origin;
    for y in oy..oy + e {
        for x in ox..ox + e {
            let (mx, my) = bp.grid.module_at(x, y).expect("inside grid");
            let stamp = match &cross {
                None => target.role(mx, my).is_marker(),
                Some(mask) => mask.get(x, y),
            };
            if stamp {
                out.image.set(x, y, 255 * target.bit(mx, my));
            }
        }
    }
    Ok(out)
}

/// Crops the largest centred square and resamples it to `side` pixels.
pub fn fit_square(img: &GrayImage, side: usize) -> GrayImage {
    let (w, h) = img.dims();
    let s = w.min(h);
    let (x0, y0) = ((w - s) / 2, (h - s) / 2);
    let square = GrayImage::from_fn(s, s, |x, y| img.get(x0 + x, y0 + y));
    square.resized(side, side)
}

/// Everything that shapes a blueprint apart from the picture and message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlueprintOptions {
    pub mask: u8,
    pub module_px: usize,
    pub params: DecodeParams,
    pub u_min: Option<usize>,
    pub style: MarkerStyle,
}

impl Default for BlueprintOptions {
    fn default() -> Self {
        BlueprintOptions {
            mask: 0,
            module_px: 16,
            params: DecodeParams::for_module(Eta::DEFAULT, 16),
            u_min: None,
            style: MarkerStyle::Square,
        }
    }
}

/// The full stage: polarize, encode, reorganize, halftone, affix.
pub fn make_blueprint(guidance: &GrayImage, msg: &Message, opts: &BlueprintOptions) -> Result<Blueprint> {
    let a = opts.module_px;
    if a == 0 || opts.params.window > a {
        return Err(Error::InvalidParameter(format!(
            "window {} must lie in 1..={a}",
            opts.params.window
        )));
    }
    let target = encode_message(msg, opts.mask)?;
    let n = target.n();
    let grid = ModuleGrid::new(n, a, (0, 0))?;
    let fitted = fit_square(guidance, n * a);
    let (hc, _) = histogram_polarize(&fitted, &opts.params);
    let desired = binarize_per_module(&hc, &grid, &opts.params, &target)?;
    let basis = compute_free_bit_basis(msg, &target)?;
    let reorganized = module_reorganize(&target, &desired, &basis)?;
    let u_min = opts.u_min.unwrap_or_else(|| default_u_min(&opts.params, a));
    let bp = adaptive_halftone_with(&hc, &reorganized, &grid, &opts.params, u_min)?;
    log::debug!(
        "blueprint: {} free bits, distance to picture {} -> {}",
        basis.rank(),
        target.data_distance(&desired),
        reorganized.data_distance(&desired)
    );
    affix_markers(&bp, opts.style)
}

/// JSON companion of a blueprint PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: Version,
    pub ec_level: EcLevel,
    pub mask: u8,
    pub n: usize,
    pub a: usize,
    pub origin: (usize, usize),
    pub eta: Eta,
    pub window: usize,
    pub u_map: Vec<usize>,
    /// Row-major module colours of the reorganized target, '1' for white.
    pub bits: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Sidecar {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn target(&self) -> Result<CodeTarget> {
        CodeTarget::from_bit_string(self.version, self.ec_level, self.mask, &self.bits)
    }

    pub fn grid(&self) -> Result<ModuleGrid> {
        ModuleGrid::new(self.n, self.a, self.origin)
    }

    pub fn params(&self) -> Result<DecodeParams> {
        DecodeParams::new(self.eta, self.window)
    }
}

impl Blueprint {
    pub fn sidecar(&self, message: Option<&str>) -> Sidecar {
        Sidecar {
            version: self.reorganized.version(),
            ec_level: self.reorganized.ec_level(),
            mask: self.reorganized.mask(),
            n: self.grid.n,
            a: self.grid.a,
            origin: self.grid.origin,
            eta: self.params.eta,
            window: self.params.window,
            u_map: self.u_map.clone(),
            bits: self.reorganized.bit_string(),
            message: message.map(str::to_owned),
        }
    }

    /// Reassembles a blueprint from its PNG raster and sidecar.
    pub fn from_parts(image: GrayImage, sidecar: &Sidecar) -> Result<Self> {
        let grid = sidecar.grid()?;
        grid.check_fits(image.width(), image.height())?;
        let reorganized = sidecar.target()?;
        if reorganized.n() != grid.n || sidecar.u_map.len() != grid.n * grid.n {
            return Err(Error::dims((grid.n, grid.n), (reorganized.n(), sidecar.u_map.len())));
        }
        Ok(Blueprint {
            image,
            grid,
            reorganized,
            u_map: sidecar.u_map.clone(),
            params: sidecar.params()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{error_level, render_target, sample_decode};
    use crate::qr::{rs_decode_payload, ModuleRole};

    fn params() -> DecodeParams {
        DecodeParams::for_module(Eta::DEFAULT, 16)
    }

    fn v5() -> Version {
        Version::new(5).unwrap()
    }

    #[test]
    fn constant_image_goes_white() {
        let img = GrayImage::filled(8, 8, 100);
        let (out, map) = histogram_polarize(&img, &params());
        assert!(out.data().iter().all(|&v| v == 255));
        assert_eq!(map.table()[100], 255);
    }

    #[test]
    fn ramp_empties_dead_zone() {
        let img = GrayImage::from_fn(256, 1, |x, _| x as u8);
        for eta in [0.1, 0.37, 0.6, 0.9, 0.99] {
            let p = DecodeParams::for_module(Eta::new(eta).unwrap(), 16);
            let (out, map) = histogram_polarize(&img, &p);
            assert!(out.data().iter().all(|&v| !p.eta.in_dead_zone(v)), "eta {eta}");
            assert!(map.table().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn ramp_values_match_hand_evaluation() {
        // cdf(τ) = (τ+1)/256, τ̃ = 102.4·cdf, upper branch adds 153.6
        let img = GrayImage::from_fn(256, 1, |x, _| x as u8);
        let (_, map) = histogram_polarize(&img, &params());
        assert_eq!(map.table()[0], 0); // 0.4
        assert_eq!(map.table()[126], 51); // 50.8
        assert_eq!(map.table()[127], 205); // 51.2 + 153.6 = 204.8
        assert_eq!(map.table()[255], 255); // 256 clamped
    }

    #[test]
    fn module_votes_and_ties() {
        let grid = ModuleGrid::new(21, 2, (0, 0)).unwrap();
        let msg = Message::new("t", EcLevel::L, Version::new(1).unwrap()).unwrap();
        let target = encode_message(&msg, 0).unwrap();
        let img = GrayImage::from_fn(42, 42, |x, y| {
            match (x / 2, y / 2) {
                (0, 0) => 0,
                (1, 0) => 255,
                _ => if x % 2 == 0 { 0 } else { 255 },
            }
        });
        let p = DecodeParams::for_module(Eta::DEFAULT, 2);
        let bits = binarize_per_module(&img, &grid, &p, &target).unwrap();
        assert_eq!(bits[0], 0);
        assert_eq!(bits[1], 1);
        for k in 2..21 * 21 {
            assert_eq!(bits[k], target.bits()[k]);
        }
        let mut bad = img.clone();
        bad.set(0, 0, 128);
        assert!(matches!(
            binarize_per_module(&bad, &grid, &p, &target),
            Err(Error::DeadZonePixels { count: 1 })
        ));
    }

    #[test]
    fn reorganize_keeps_optimal_target() {
        let msg = Message::new("keep", EcLevel::M, v5()).unwrap();
        let target = encode_message(&msg, 0).unwrap();
        let basis = compute_free_bit_basis(&msg, &target).unwrap();
        assert_eq!(module_reorganize(&target, target.bits(), &basis).unwrap(), target);
        let empty = FreeBitBasis::empty(target.n());
        let inverted: Vec<u8> = target.bits().iter().map(|b| 1 - b).collect();
        assert_eq!(module_reorganize(&target, &inverted, &empty).unwrap(), target);
    }

    #[test]
    fn reorganize_moves_toward_desired_and_keeps_message() {
        let msg = Message::new("picture", EcLevel::L, v5()).unwrap();
        let target = encode_message(&msg, 0).unwrap();
        let basis = compute_free_bit_basis(&msg, &target).unwrap();
        let n = target.n();
        let desired: Vec<u8> = (0..n * n).map(|i| u8::from((i / n) < n / 2)).collect();
        let r = module_reorganize(&target, &desired, &basis).unwrap();
        assert!(r.data_distance(&desired) < target.data_distance(&desired));
        assert_eq!(rs_decode_payload(&r).unwrap(), msg);
        for (i, role) in target.roles().iter().enumerate() {
            if role.is_function() {
                assert_eq!(r.bits()[i], target.bits()[i]);
            }
        }
    }

    #[test]
    fn halftone_on_black_patch_picks_fourteen() {
        // u² · 255 / 256 nearest 204.8: u = 14 gives 195.2, u = 15 gives 224.1
        let v = Version::new(1).unwrap();
        let target = CodeTarget::from_bits(v, EcLevel::L, 0, vec![1; 441]).unwrap();
        let grid = ModuleGrid::new(21, 16, (0, 0)).unwrap();
        let img = GrayImage::filled(336, 336, 0);
        let bp = adaptive_halftone_with(&img, &target, &grid, &params(), 0).unwrap();
        let k = 21 * 10 + 10;
        assert_eq!(target.roles()[k], ModuleRole::Data);
        assert_eq!(bp.u_map[k], 14);
        let (x0, y0) = grid.centre_square(10, 10, 14);
        assert_eq!((x0, y0), (161, 161));
        assert_eq!(bp.image.get(160, 161), 0);
        assert_eq!(bp.image.get(161, 161), 255);
        assert_eq!(bp.image.get(174, 174), 255);
        assert_eq!(bp.image.get(175, 174), 0);
    }

    #[test]
    fn halftone_white_on_white_uses_minimum() {
        let v = Version::new(1).unwrap();
        let target = CodeTarget::from_bits(v, EcLevel::L, 0, vec![1; 441]).unwrap();
        let grid = ModuleGrid::new(21, 16, (0, 0)).unwrap();
        let img = GrayImage::filled(336, 336, 255);
        let bp = adaptive_halftone(&img, &target, &grid, &params()).unwrap();
        for (k, role) in target.roles().iter().enumerate() {
            let want = if role.is_marker() { 16 } else { 5 };
            assert_eq!(bp.u_map[k], want);
        }
        // full fill reproduces the module value exactly
        let black = CodeTarget::from_bits(v, EcLevel::L, 0, vec![0; 441]).unwrap();
        let bp = adaptive_halftone_with(&img, &black, &grid, &params(), 16).unwrap();
        assert!(bp.image.data().chunks(336).enumerate().all(|(y, row)| row.iter().enumerate().all(|(x, &p)| {
            let (mx, my) = (x / 16, y / 16);
            black.role(mx, my).is_marker() || p == 0
        })));
    }

    #[test]
    fn markers_are_idempotent_and_ratio_correct() {
        let msg = Message::new("markers", EcLevel::M, v5()).unwrap();
        let target = encode_message(&msg, 0).unwrap();
        let grid = ModuleGrid::new(37, 16, (0, 0)).unwrap();
        let img = GrayImage::filled(592, 592, 128);
        let bp = Blueprint {
            image: img,
            grid,
            reorganized: target.clone(),
            u_map: vec![16; 37 * 37],
            params: params(),
        };
        for style in [MarkerStyle::Square, MarkerStyle::CrossCenterOnly] {
            let once = affix_markers(&bp, style).unwrap();
            let twice = affix_markers(&once, style).unwrap();
            assert_eq!(once, twice);
            // row through the top-left finder centre
            let y = 3 * 16 + 8;
            let row: Vec<u8> = (0..7 * 16).map(|x| once.image.get(x, y)).collect();
            let mut runs = vec![(row[0], 1usize)];
            for &p in &row[1..] {
                if p == runs.last().unwrap().0 {
                    runs.last_mut().unwrap().1 += 1;
                } else {
                    runs.push((p, 1));
                }
            }
            assert_eq!(runs, vec![(0, 16), (255, 16), (0, 48), (255, 16), (0, 16)]);
        }
        assert!(alignment_centres(v5()).contains(&(30, 30)));
        assert_eq!(target.role(30, 30), ModuleRole::Alignment);
    }

    #[test]
    fn blueprint_decodes_at_the_centre() {
        let msg = Message::new("https://example.org", EcLevel::M, v5()).unwrap();
        let guidance = GrayImage::from_fn(300, 300, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let bp = make_blueprint(&guidance, &msg, &BlueprintOptions::default()).unwrap();
        assert_eq!(bp.image.dims(), (592, 592));
        assert_eq!(error_level(&bp.image, &bp.reorganized, &bp.grid, &bp.params).unwrap(), 0.0);
        assert_eq!(rs_decode_payload(&bp.reorganized).unwrap(), msg);
        let tri = sample_decode(&bp.image, &bp.grid, &bp.params).unwrap();
        assert_eq!(tri.dead_count(), 0);
    }

    #[test]
    fn sidecar_round_trip() {
        let msg = Message::new("side", EcLevel::Q, v5()).unwrap();
        let target = encode_message(&msg, 2).unwrap();
        let (img, grid) = render_target(&target, 4, 0);
        let bp = Blueprint {
            image: img.clone(),
            grid,
            reorganized: target,
            u_map: vec![4; 37 * 37],
            params: DecodeParams::for_module(Eta::new(0.5).unwrap(), 4),
        };
        let sc = bp.sidecar(Some("side"));
        let text = serde_json::to_string(&sc).unwrap();
        let back: Sidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(Blueprint::from_parts(img, &back).unwrap(), bp);
    }
}
