//! Raster types, luminance extraction and PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Number of gray levels.
pub const LEVELS: f64 = 256.0;

/// 8-bit luminance raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims((width, height), (data.len(), 1)));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Resamples to `width`×`height` with a triangle filter.
    pub fn resized(&self, width: usize, height: usize) -> GrayImage {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions");
        let out = image::imageops::resize(&buf, width as u32, height as u32, image::imageops::FilterType::Triangle);
        GrayImage {
            width,
            height,
            data: out.into_raw(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(())
    }
}

/// 8-bit RGB raster, row-major interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_vec(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims((width, height), (data.len(), 1)));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let flat: Vec<u8> = self.data.iter().flatten().copied().collect();
        image::save_buffer(
            path,
            &flat,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }
}

/// BT.601 luma of one pixel, rounded half up.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Y channel of the YCbCr colour space.
pub fn to_luminance(rgb: &RgbImage) -> GrayImage {
    GrayImage {
        width: rgb.width,
        height: rgb.height,
        data: rgb.data.iter().map(|&p| luma(p)).collect(),
    }
}

/// Chroma planes (Cb, Cr) of an RGB raster, full precision.
pub fn chroma(rgb: &RgbImage) -> Vec<(f64, f64)> {
    rgb.data
        .iter()
        .map(|&[r, g, b]| {
            let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
            let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
            let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
            (cb, cr)
        })
        .collect()
}

/// Recombines a luminance plane with chroma into RGB.
pub fn recombine(y: &GrayImage, chroma: &[(f64, f64)]) -> Result<RgbImage> {
    if chroma.len() != y.data.len() {
        return Err(Error::dims(y.dims(), (chroma.len(), 1)));
    }
    let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let data = y
        .data
        .iter()
        .zip(chroma)
        .map(|(&l, &(cb, cr))| {
            let l = f64::from(l);
            [
                to_u8(l + 1.402 * (cr - 128.0)),
                to_u8(l - 0.344_136 * (cb - 128.0) - 0.714_136 * (cr - 128.0)),
                to_u8(l + 1.772 * (cb - 128.0)),
            ]
        })
        .collect();
    Ok(RgbImage {
        width: y.width,
        height: y.height,
        data,
    })
}

/// A raster loaded from disk, grayscale or colour.
#[derive(Clone, Debug)]
pub enum Raster {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Raster {
    pub fn luminance(&self) -> GrayImage {
        match self {
            Raster::Gray(g) => g.clone(),
            Raster::Rgb(c) => to_luminance(c),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Raster::Gray(g) => g.dims(),
            Raster::Rgb(c) => c.dims(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Raster::Gray(g) => g.save_png(path),
            Raster::Rgb(c) => c.save_png(path),
        }
    }
}

/// Reads a PNG (or any format the decoder recognises). Images with an alpha
/// channel are composited over white; anything without colour loads as gray.
pub fn load(path: impl AsRef<Path>) -> Result<Raster> {
    let img = image::open(path)?;
    let color = img.color();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if !color.has_color() {
        let la = img.to_luma_alpha8();
        let data = la
            .pixels()
            .map(|p| {
                let a = u32::from(p.0[1]);
                ((u32::from(p.0[0]) * a + 255 * (255 - a) + 127) / 255) as u8
            })
            .collect();
        return Ok(Raster::Gray(GrayImage { width: w, height: h, data }));
    }
    let rgba = img.to_rgba8();
    let data = rgba
        .pixels()
        .map(|p| {
            let a = u32::from(p.0[3]);
            let blend = |c: u8| ((u32::from(c) * a + 255 * (255 - a) + 127) / 255) as u8;
            [blend(p.0[0]), blend(p.0[1]), blend(p.0[2])]
        })
        .collect();
    Ok(Raster::Rgb(RgbImage { width: w, height: h, data }))
}

pub fn load_luminance(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(load(path)?.luminance())
}

/// Floating-point luminance raster used by the optimiser and loss functions.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims((width, height), (data.len(), 1)));
        }
        Ok(Plane { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Rounds half up and clamps to [0, 255].
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
