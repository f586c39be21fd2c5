//! The scanner model: centre-window sampling with a symmetric dead zone,
//! and the error level of an image against a code target.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::CodeTarget;
use crate::raster::GrayImage;

const PPM: u64 = 1_000_000;

/// Binarization strictness, held as an exact multiple of 10⁻⁶ so that
/// threshold comparisons never depend on float rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Eta {
    ppm: u32,
}

impl Eta {
    /// Largest strictness whose white threshold is still reachable by an
    /// 8-bit pixel (T_w ≤ 255).
    pub const MAX_PPM: u32 = 992_187;

    pub const DEFAULT: Eta = Eta { ppm: 600_000 };

    pub fn new(eta: f64) -> Result<Self> {
        if !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be finite, got {eta}")));
        }
        let ppm = (eta * PPM as f64).round();
        if ppm < 1.0 || ppm > f64::from(Self::MAX_PPM) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0, {}], got {eta}",
                f64::from(Self::MAX_PPM) / PPM as f64
            )));
        }
        Ok(Eta { ppm: ppm as u32 })
    }

    pub fn from_ppm(ppm: u32) -> Result<Self> {
        Eta::new(f64::from(ppm) / PPM as f64)
    }

    pub fn ppm(self) -> u32 {
        self.ppm
    }

    pub fn value(self) -> f64 {
        f64::from(self.ppm) / PPM as f64
    }

    /// T_b = L(1 − η)/2.
    pub fn t_black(self) -> f64 {
        128.0 * (PPM - u64::from(self.ppm)) as f64 / PPM as f64
    }

    /// T_w = L(1 + η)/2.
    pub fn t_white(self) -> f64 {
        128.0 * (PPM + u64::from(self.ppm)) as f64 / PPM as f64
    }

    /// Decodes the mean `sum / count`: 0 at or below T_b, 1 at or above T_w,
    /// −1 in between.
    pub fn classify(self, sum: u64, count: u64) -> i8 {
        let lhs = u128::from(sum) * u128::from(PPM);
        let black = 128 * u128::from(PPM - u64::from(self.ppm)) * u128::from(count);
        let white = 128 * u128::from(PPM + u64::from(self.ppm)) * u128::from(count);
        if lhs <= black {
            0
        } else if lhs >= white {
            1
        } else {
            -1
        }
    }

    /// Whether a single gray level lies strictly inside (T_b, T_w).
    pub fn in_dead_zone(self, level: u8) -> bool {
        self.classify(u64::from(level), 1) == -1
    }
}

impl Default for Eta {
    fn default() -> Self {
        Eta::DEFAULT
    }
}

impl TryFrom<f64> for Eta {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Eta::new(v)
    }
}

impl From<Eta> for f64 {
    fn from(e: Eta) -> f64 {
        e.value()
    }
}

impl fmt::Display for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Strictness and the side of the sampled centre window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub eta: Eta,
    pub window: usize,
}

impl DecodeParams {
    pub fn new(eta: Eta, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("sampling window must be at least 1 pixel".into()));
        }
        Ok(DecodeParams { eta, window })
    }

    /// Window of a third of the module, at least one pixel.
    pub fn for_module(eta: Eta, module_px: usize) -> Self {
        DecodeParams {
            eta,
            window: default_window(module_px),
        }
    }

    pub fn t_black(&self) -> f64 {
        self.eta.t_black()
    }

    pub fn t_white(&self) -> f64 {
        self.eta.t_white()
    }
}

pub fn default_window(module_px: usize) -> usize {
    (module_px / 3).max(1)
}

/// Placement of an n×n module grid inside an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleGrid {
    pub n: usize,
    /// Module side in pixels.
    pub a: usize,
    /// Pixel position of the top-left corner of module (0, 0).
    pub origin: (usize, usize),
}

impl ModuleGrid {
    pub fn new(n: usize, a: usize, origin: (usize, usize)) -> Result<Self> {
        if n == 0 || a == 0 {
            return Err(Error::InvalidParameter(format!("grid needs n ≥ 1 and a ≥ 1, got n={n} a={a}")));
        }
        Ok(ModuleGrid { n, a, origin })
    }

    /// Side of the grid in pixels.
    pub fn extent(&self) -> usize {
        self.n * self.a
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        let e = self.extent();
        if self.n == 0 || self.a == 0 || self.origin.0 + e > width || self.origin.1 + e > height {
            return Err(Error::GridOutOfBounds { width, height });
        }
        Ok(())
    }

    /// Top-left pixel of module (mx, my).
    pub fn module_origin(&self, mx: usize, my: usize) -> (usize, usize) {
        (self.origin.0 + mx * self.a, self.origin.1 + my * self.a)
    }

    /// Top-left pixel of the centred `side`×`side` square of module (mx, my).
    pub fn centre_square(&self, mx: usize, my: usize, side: usize) -> (usize, usize) {
        let (x0, y0) = self.module_origin(mx, my);
        let off = (self.a - side.min(self.a)) / 2;
        (x0 + off, y0 + off)
    }

    /// Module containing pixel (x, y), if any.
    pub fn module_at(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (ox, oy) = self.origin;
        if x < ox || y < oy {
            return None;
        }
        let (mx, my) = ((x - ox) / self.a, (y - oy) / self.a);
        (mx < self.n && my < self.n).then_some((mx, my))
    }
}

/// Per-module decode result: 0 black, 1 white, −1 undecidable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriMatrix {
    n: usize,
    values: Vec<i8>,
}

impl TriMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> i8 {
        self.values[y * self.n + x]
    }

    pub fn dead_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == -1).count()
    }

    /// Plain PBM (P1). Dead-zone modules are written black alongside real
    /// black modules; only decoded whites are left white.
    pub fn write_pbm(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "P1\n{} {}", self.n, self.n)?;
        for row in self.values.chunks(self.n) {
            let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "0" } else { "1" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn save_pbm(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_pbm(std::io::BufWriter::new(file))
    }
}

/// Samples every module's centre window and thresholds its mean.
pub fn sample_decode(img: &GrayImage, grid: &ModuleGrid, params: &DecodeParams) -> Result<TriMatrix> {
    grid.check_fits(img.width(), img.height())?;
    let x = params.window;
    if x == 0 || x > grid.a {
        return Err(Error::InvalidParameter(format!(
            "sampling window {x} must lie in 1..={}",
            grid.a
        )));
    }
    let count = (x * x) as u64;
    let mut values = Vec::with_capacity(grid.n * grid.n);
    for my in 0..grid.n {
        for mx in 0..grid.n {
            let (x0, y0) = grid.centre_square(mx, my, x);
            let sum: u64 = (y0..y0 + x)
                .map(|y| img.data()[y * img.width() + x0..y * img.width() + x0 + x].iter().map(|&v| u64::from(v)).sum::<u64>())
                .sum();
            values.push(params.eta.classify(sum, count));
        }
    }
    Ok(TriMatrix { n: grid.n, values })
}

/// Fraction of data-region modules whose sampled value differs from the
/// target bit. Undecidable modules count as errors.
pub fn error_level(img: &GrayImage, target: &CodeTarget, grid: &ModuleGrid, params: &DecodeParams) -> Result<f64> {
    let (wrong, total) = error_count(img, target, grid, params)?;
    Ok(wrong as f64 / total.max(1) as f64)
}

/// (mismatched, total) data-region modules.
pub fn error_count(
    img: &GrayImage,
    target: &CodeTarget,
    grid: &ModuleGrid,
    params: &DecodeParams,
) -> Result<(usize, usize)> {
    if target.n() != grid.n {
        return Err(Error::dims((target.n(), target.n()), (grid.n, grid.n)));
    }
    let tri = sample_decode(img, grid, params)?;
    let mut wrong = 0;
    let mut total = 0;
    for ((&v, &bit), role) in tri.values.iter().zip(target.bits()).zip(target.roles()) {
        if role.is_data_region() {
            total += 1;
            if v != bit as i8 {
                wrong += 1;
            }
        }
    }
    Ok((wrong, total))
}

/// Renders a target as flat black and white modules of `a` pixels with a
/// white border of `quiet` modules. Returns the image and its grid.
pub fn render_target(target: &CodeTarget, a: usize, quiet: usize) -> (GrayImage, ModuleGrid) {
    let n = target.n();
    let side = (n + 2 * quiet) * a;
    let grid = ModuleGrid {
        n,
        a,
        origin: (quiet * a, quiet * a),
    };
    let img = GrayImage::from_fn(side, side, |x, y| match grid.module_at(x, y) {
        Some((mx, my)) => 255 * target.bit(mx, my),
        None => 255,
    });
    (img, grid)
}
