//! Scannability refinement: gradient descent on the stylized image's
//! luminance under a weighted sum of marker, code and harmonizing losses.

mod features;
mod loss;
mod w2;

use std::io::Write;
use std::path::Path;

pub use features::{feature_stats, harmonizing_loss, FeatureBank, Harmonizer, CHANNELS};
pub use loss::{code_loss, code_loss_with_margin, marker_loss, window_weights};
pub use w2::{gaussian_w2, gaussian_w2_grad, sqrt_psd, GaussStats};

use crate::decode::error_count;
use crate::error::{Error, Result};
use crate::qab::{Blueprint, CrossCenterMask};
use crate::raster::{chroma, recombine, to_luminance, GrayImage, Plane, Raster};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Marker loss.
    pub lambda1: f64,
    /// Code loss.
    pub lambda2: f64,
    /// Harmonizing loss.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    pub iterations: usize,
    /// Step size on luminance normalized to [0, 1].
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Extra gray levels the code loss demands beyond each threshold, so the
    /// hard centre mean lands safely past it rather than on it.
    pub code_margin: f64,
    pub bank: FeatureBank,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 400,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            code_margin: 12.0,
            bank: FeatureBank::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("moment decay rates must lie in [0, 1) and epsilon be positive".into()));
        }
        if !(self.code_margin >= 0.0) {
            return Err(Error::InvalidParameter("code margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// First-order optimizer with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Losses of one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Error level of the quantized output on data modules.
    pub error: f64,
    pub marker: f64,
    pub code: f64,
    pub harmonizing: f64,
    pub total: f64,
    /// Lowest total loss seen up to this iteration.
    pub best_total: f64,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    /// The best iterate, in the colour model of the input.
    pub image: Raster,
    /// Luminance of `image`.
    pub luminance: GrayImage,
    pub best_iteration: usize,
    pub best_error: f64,
    /// Iterations actually evaluated (including iteration 0).
    pub iterations_run: usize,
    /// Iteration at which the error level first reached zero.
    pub first_zero_error: Option<usize>,
    pub trace: Vec<TraceRow>,
}

impl RefineOutcome {
    pub fn write_trace_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "iteration,e,L_m,L_c,L_h,total")?;
        for r in &self.trace {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration, r.error, r.marker, r.code, r.harmonizing, r.total
            )?;
        }
        Ok(())
    }

    pub fn save_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_trace_csv(std::io::BufWriter::new(file))
    }
}

/// Replaces every finder, separator and alignment module with the
/// blueprint's pixels.
pub fn composite_markers(y: &GrayImage, bp: &Blueprint) -> GrayImage {
    let mut out = y.clone();
    let e = bp.grid.extent();
    let (ox, oy) = bp.grid.origin;
    for py in oy..oy + e {
        for px in ox..ox + e {
            let (mx, my) = bp.grid.module_at(px, py).expect("inside grid");
            if bp.reorganized.role(mx, my).is_marker() {
                out.set(px, py, bp.image.get(px, py));
            }
        }
    }
    out
}

/// Turns luminance into the output colour model.
struct Output {
    chroma: Option<Vec<(f64, f64)>>,
}

impl Output {
    fn render(&self, y: &GrayImage) -> Result<(Raster, GrayImage)> {
        match &self.chroma {
            None => Ok((Raster::Gray(y.clone()), y.clone())),
            Some(c) => {
                let rgb = recombine(y, c)?;
                let luma = to_luminance(&rgb);
                Ok((Raster::Rgb(rgb), luma))
            }
        }
    }
}

const STALL_WINDOW: usize = 20;
const STALL_TOLERANCE: f64 = 1e-6;
const TRACE_EVERY: usize = 10;

/// Refines `stylized` toward a scannable image that still resembles it.
/// Returns the iterate with the lowest (error level, total loss).
pub fn refine_image(stylized: &Raster, bp: &Blueprint, weights: &LossWeights, cfg: &RefineConfig) -> Result<RefineOutcome> {
    weights.validate()?;
    cfg.validate()?;
    let dims = bp.image.dims();
    if stylized.dims() != dims {
        return Err(Error::dims(dims, stylized.dims()));
    }
    let output = Output {
        chroma: match stylized {
            Raster::Gray(_) => None,
            Raster::Rgb(rgb) => Some(chroma(rgb)),
        },
    };
    let original = stylized.luminance();
    let start = composite_markers(&original, bp);

    let target = &bp.reorganized;
    let mask = CrossCenterMask::new(target.version(), &bp.grid, dims.0, dims.1)?;
    let blueprint = bp.image.to_plane();
    let harmonizer = Harmonizer::new(&original.to_plane(), cfg.bank)?;

    let mut theta: Vec<f64> = start.data().iter().map(|&v| f64::from(v) / 255.0).collect();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut totals: Vec<f64> = Vec::with_capacity(cfg.iterations + 1);
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, f64, Raster, GrayImage)> = None;
    let mut best_total = f64::INFINITY;
    let mut first_zero = None;
    let mut iterations_run = 0;

    for it in 0..=cfg.iterations {
        iterations_run = it + 1;
        let q = Plane::from_vec(dims.0, dims.1, theta.iter().map(|t| t * 255.0).collect())?;
        let (lm, gm) = marker_loss(&q, &blueprint, &mask)?;
        let (lc, gc) = code_loss_with_margin(&q, target, &bp.grid, &bp.params, cfg.code_margin)?;
        let (lh, gh) = if weights.lambda3 > 0.0 {
            harmonizer.loss_and_grad(&q)?
        } else {
            (harmonizer.loss(&q)?, Plane::new(dims.0, dims.1))
        };
        let total = weights.lambda1 * lm + weights.lambda2 * lc + weights.lambda3 * lh;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!("marker {lm}, code {lc}, harmonizing {lh}"),
            });
        }

        let (raster, luma) = output.render(&q.to_gray())?;
        let (wrong, count) = error_count(&luma, target, &bp.grid, &bp.params)?;
        let e = wrong as f64 / count.max(1) as f64;
        if wrong == 0 && first_zero.is_none() {
            first_zero = Some(it);
        }
        best_total = best_total.min(total);
        let better = match &best {
            None => true,
            Some((_, be, bt, _, _)) => (e, total) < (*be, *bt),
        };
        if better {
            best = Some((it, e, total, raster, luma));
        }
        totals.push(total);
        let row = TraceRow {
            iteration: it,
            error: e,
            marker: lm,
            code: lc,
            harmonizing: lh,
            total,
            best_total,
        };

        let grad: Vec<f64> = (0..theta.len())
            .map(|i| {
                255.0
                    * (weights.lambda1 * gm.data()[i] + weights.lambda2 * gc.data()[i] + weights.lambda3 * gh.data()[i])
            })
            .collect();
        let settled = wrong == 0
            && (grad.iter().all(|&g| g == 0.0)
                || (it >= STALL_WINDOW && (total - totals[it - STALL_WINDOW]).abs() < STALL_TOLERANCE));
        let last = settled || it == cfg.iterations;
        if it % TRACE_EVERY == 0 || last {
            trace.push(row);
        }
        if last {
            break;
        }
        adam.step(&mut theta, &grad);
        theta.iter_mut().for_each(|t| *t = t.clamp(0.0, 1.0));
    }

    let (best_iteration, best_error, _, image, luminance) = best.expect("at least one iterate");
    log::info!(
        "refine: best iterate {best_iteration} with e = {best_error:.4} after {iterations_run} evaluations"
    );
    Ok(RefineOutcome {
        image,
        luminance,
        best_iteration,
        best_error,
        iterations_run,
        first_zero_error: first_zero,
        trace,
    })
}
