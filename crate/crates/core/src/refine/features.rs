//! Fixed multi-scale feature bank and the harmonizing loss built on it.
//!
//! Each scale of a 2×2-average pyramid contributes four channels at every
//! interior pixel: intensity, central horizontal and vertical differences,
//! and the 3×3 local standard deviation.

use nalgebra::{DMatrix, DVector};

use super::w2::{gaussian_w2, gaussian_w2_grad, GaussStats};
use crate::error::{Error, Result};
use crate::raster::Plane;

pub const CHANNELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureBank {
    pub scales: usize,
    /// Added to the local variance before the square root, in gray levels².
    pub std_eps: f64,
    /// Ridge added to each covariance so it is never singular.
    pub cov_reg: f64,
}

impl Default for FeatureBank {
    fn default() -> Self {
        FeatureBank {
            scales: 4,
            std_eps: 1.0,
            cov_reg: 1e-6,
        }
    }
}

fn downsample(p: &Plane) -> Plane {
    let (w, h) = (p.width() / 2, p.height() / 2);
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let s = p.get(2 * x, 2 * y) + p.get(2 * x + 1, 2 * y) + p.get(2 * x, 2 * y + 1) + p.get(2 * x + 1, 2 * y + 1);
            out.set(x, y, s / 4.0);
        }
    }
    out
}

fn pyramid(img: &Plane, scales: usize) -> Vec<Plane> {
    let mut levels = vec![img.clone()];
    while levels.len() < scales {
        let next = downsample(levels.last().unwrap());
        if next.width() < 3 || next.height() < 3 {
            break;
        }
        levels.push(next);
    }
    levels
}

/// Feature vectors at the interior pixels of one level.
fn features(p: &Plane, std_eps: f64) -> Vec<[f64; CHANNELS]> {
    let (w, h) = p.dims();
    let mut out = Vec::with_capacity(w.saturating_sub(2) * h.saturating_sub(2));
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let (mut s, mut s2) = (0.0, 0.0);
            for j in y - 1..=y + 1 {
                for i in x - 1..=x + 1 {
                    let v = p.get(i, j);
                    s += v;
                    s2 += v * v;
                }
            }
            let mean = s / 9.0;
            let var = (s2 / 9.0 - mean * mean).max(0.0);
            out.push([
                p.get(x, y),
                (p.get(x + 1, y) - p.get(x - 1, y)) / 2.0,
                (p.get(x, y + 1) - p.get(x, y - 1)) / 2.0,
                (var + std_eps).sqrt(),
            ]);
        }
    }
    out
}

fn stats_of(f: &[[f64; CHANNELS]], reg: f64) -> GaussStats {
    let n = f.len() as f64;
    let mut mean = DVector::zeros(CHANNELS);
    for v in f {
        for c in 0..CHANNELS {
            mean[c] += v[c];
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(CHANNELS, CHANNELS);
    for v in f {
        for i in 0..CHANNELS {
            let di = v[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..CHANNELS {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov /= n;
    for i in 0..CHANNELS {
        cov[(i, i)] += reg;
    }
    GaussStats { mean, cov }
}

/// Per-scale Gaussian summaries of an image under the bank.
pub fn feature_stats(img: &Plane, bank: &FeatureBank) -> Vec<GaussStats> {
    pyramid(img, bank.scales)
        .iter()
        .map(|level| stats_of(&features(level, bank.std_eps), bank.cov_reg))
        .collect()
}

/// Pushes feature gradients back onto the pixels of one level.
fn backprop_level(p: &Plane, grads: &[[f64; CHANNELS]], std_eps: f64) -> Plane {
    let (w, h) = p.dims();
    let mut g = Plane::new(w, h);
    let mut k = 0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let d = grads[k];
            k += 1;
            let add = |g: &mut Plane, i: usize, j: usize, v: f64| g.set(i, j, g.get(i, j) + v);
            add(&mut g, x, y, d[0]);
            add(&mut g, x + 1, y, d[1] / 2.0);
            add(&mut g, x - 1, y, -d[1] / 2.0);
            add(&mut g, x, y + 1, d[2] / 2.0);
            add(&mut g, x, y - 1, -d[2] / 2.0);
            if d[3] != 0.0 {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for j in y - 1..=y + 1 {
                    for i in x - 1..=x + 1 {
                        let v = p.get(i, j);
                        s += v;
                        s2 += v * v;
                    }
                }
                let mean = s / 9.0;
                let raw = s2 / 9.0 - mean * mean;
                if raw > 0.0 {
                    let std = (raw + std_eps).sqrt();
                    // d var / d v = 2 (v − mean) / 9
                    for j in y - 1..=y + 1 {
                        for i in x - 1..=x + 1 {
                            add(&mut g, i, j, d[3] * (p.get(i, j) - mean) / (9.0 * std));
                        }
                    }
                }
            }
        }
    }
    g
}

/// Sum over scales of W2 between feature summaries, with reference
/// summaries computed once.
#[derive(Clone, Debug)]
pub struct Harmonizer {
    bank: FeatureBank,
    dims: (usize, usize),
    reference: Vec<GaussStats>,
}

impl Harmonizer {
    pub fn new(reference: &Plane, bank: FeatureBank) -> Result<Self> {
        if reference.width() < 3 || reference.height() < 3 {
            return Err(Error::InvalidParameter("harmonizing loss needs images of at least 3×3".into()));
        }
        Ok(Harmonizer {
            bank,
            dims: reference.dims(),
            reference: feature_stats(reference, &bank),
        })
    }

    pub fn loss(&self, img: &Plane) -> Result<f64> {
        self.check(img)?;
        let stats = feature_stats(img, &self.bank);
        stats.iter().zip(&self.reference).map(|(a, b)| gaussian_w2(a, b)).sum()
    }

    pub fn loss_and_grad(&self, img: &Plane) -> Result<(f64, Plane)> {
        self.check(img)?;
        let levels = pyramid(img, self.bank.scales);
        let mut level_grads = Vec::with_capacity(levels.len());
        let mut total = 0.0;
        for (level, reference) in levels.iter().zip(&self.reference) {
            let f = features(level, self.bank.std_eps);
            let stats = stats_of(&f, self.bank.cov_reg);
            let (value, g_mean, g_cov) = gaussian_w2_grad(&stats, reference)?;
            total += value;
            let n = f.len() as f64;
            let g_cov = (&g_cov + g_cov.transpose()) * (1.0 / n);
            let g_mean = g_mean / n;
            let grads: Vec<[f64; CHANNELS]> = f
                .iter()
                .map(|v| {
                    let mut out = [0.0; CHANNELS];
                    for i in 0..CHANNELS {
                        let mut acc = g_mean[i];
                        for j in 0..CHANNELS {
                            acc += g_cov[(i, j)] * (v[j] - stats.mean[j]);
                        }
                        out[i] = acc;
                    }
                    out
                })
                .collect();
            level_grads.push(backprop_level(level, &grads, self.bank.std_eps));
        }
        // fold coarse gradients back through the 2×2 averaging
        let mut acc = level_grads.pop().expect("at least one level");
        while let Some(mut finer) = level_grads.pop() {
            for y in 0..acc.height() {
                for x in 0..acc.width() {
                    let v = acc.get(x, y) / 4.0;
                    for (i, j) in [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)] {
                        finer.set(i, j, finer.get(i, j) + v);
                    }
                }
            }
            acc = finer;
        }
        Ok((total, acc))
    }

    fn check(&self, img: &Plane) -> Result<()> {
        if img.dims() != self.dims {
            return Err(Error::dims(self.dims, img.dims()));
        }
        Ok(())
    }
}

/// One-shot form of [`Harmonizer`].
pub fn harmonizing_loss(img: &Plane, reference: &Plane, bank: &FeatureBank) -> Result<(f64, Plane)> {
    if img.dims() != reference.dims() {
        return Err(Error::dims(reference.dims(), img.dims()));
    }
    Harmonizer::new(reference, *bank)?.loss_and_grad(img)
}
