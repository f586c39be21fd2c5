//! Code and marker losses with their analytic pixel gradients.

use crate::decode::{DecodeParams, ModuleGrid};
use crate::error::{Error, Result};
use crate::qab::CrossCenterMask;
use crate::qr::CodeTarget;
use crate::raster::{Plane, LEVELS};

/// Normalized Gaussian weights over an x×x window, σ = x/2.
pub fn window_weights(x: usize) -> Vec<f64> {
    let sigma = x as f64 / 2.0;
    let c = (x as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..x * x)
        .map(|k| {
            let (i, j) = ((k % x) as f64 - c, (k / x) as f64 - c);
            (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Hinge penalty on modules whose soft-sampled value sits on the wrong side
/// of their threshold. Thresholds are pushed outward by `margin` gray
/// levels; modules already past them contribute nothing. Finder and
/// alignment modules are left to the marker loss.
pub fn code_loss_with_margin(
    img: &Plane,
    target: &CodeTarget,
    grid: &ModuleGrid,
    params: &DecodeParams,
    margin: f64,
) -> Result<(f64, Plane)> {
    grid.check_fits(img.width(), img.height())?;
    if target.n() != grid.n {
        return Err(Error::dims((grid.n, grid.n), (target.n(), target.n())));
    }
    let x = params.window;
    if x == 0 || x > grid.a {
        return Err(Error::InvalidParameter(format!("sampling window {x} must lie in 1..={}", grid.a)));
    }
    let weights = window_weights(x);
    let t_black = params.t_black() - margin;
    let t_white = params.t_white() + margin;
    let l2 = LEVELS * LEVELS;
    let mut grad = Plane::new(img.width(), img.height());
    let mut loss = 0.0;
    for my in 0..grid.n {
        for mx in 0..grid.n {
            if target.role(mx, my).is_marker() {
                continue;
            }
            let (x0, y0) = grid.centre_square(mx, my, x);
            let mut v = 0.0;
            for (k, w) in weights.iter().enumerate() {
                v += w * img.get(x0 + k % x, y0 + k / x);
            }
            // signed shortfall: positive when the module is on the wrong side
            let (short, sign) = if target.bit(mx, my) == 1 { (t_white - v, -1.0) } else { (v - t_black, 1.0) };
            if short <= 0.0 {
                continue;
            }
            loss += short * short / l2;
            let scale = sign * 2.0 * short / l2;
            for (k, w) in weights.iter().enumerate() {
                let (px, py) = (x0 + k % x, y0 + k / x);
                grad.set(px, py, grad.get(px, py) + scale * w);
            }
        }
    }
    Ok((loss, grad))
}

pub fn code_loss(img: &Plane, target: &CodeTarget, grid: &ModuleGrid, params: &DecodeParams) -> Result<(f64, Plane)> {
    code_loss_with_margin(img, target, grid, params, 0.0)
}

/// Mean squared luminance difference to the blueprint over the masked
/// pixels.
pub fn marker_loss(img: &Plane, blueprint: &Plane, mask: &CrossCenterMask) -> Result<(f64, Plane)> {
    if img.dims() != blueprint.dims() {
        return Err(Error::dims(blueprint.dims(), img.dims()));
    }
    if img.dims() != mask.dims() {
        return Err(Error::dims(mask.dims(), img.dims()));
    }
    let count = mask.count().max(1) as f64;
    let mut grad = Plane::new(img.width(), img.height());
    let mut loss = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m {
            let d = img.data()[i] - blueprint.data()[i];
            loss += d * d;
            grad.data_mut()[i] = 2.0 * d / count;
        }
    }
    Ok((loss / count, grad))
}
