//! Synthetic scanning campaigns: a printed code of a given physical size is
//! viewed by a pinhole camera at a given angle, resampled, blurred and
//! corrupted with sensor noise, then handed to the standard decoder.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::DecodeParams;
use crate::detect::standard_decode;
use crate::error::{Error, Result};
use crate::geometry::{bilinear, gaussian_blur, Homography};
use crate::qr::Message;
use crate::raster::{GrayImage, Plane};

/// Camera distance from the code plane.
pub const VIEW_DISTANCE_CM: f64 = 20.0;
/// White border around the projected code, as a fraction of its printed
/// size in pixels.
const MARGIN_FRACTION: f64 = 0.1;

fn default_dpi() -> f64 {
    300.0
}

fn default_trials() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Printed side length of the whole image.
    pub display_size_cm: f64,
    /// 90 is fronto-parallel.
    pub angle_deg: f64,
    #[serde(default = "default_dpi")]
    pub dpi: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Standard deviation of the optical blur, in sensor pixels.
    #[serde(default)]
    pub blur_radius: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn new(display_size_cm: f64, angle_deg: f64) -> Self {
        Scenario {
            display_size_cm,
            angle_deg,
            dpi: default_dpi(),
            noise_sigma: 0.0,
            blur_radius: 0.0,
            trials: default_trials(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("scenario {what}: {self:?}")));
        if !(self.angle_deg > 0.0 && self.angle_deg <= 90.0) {
            return bad("angle must lie in (0, 90]");
        }
        if !(self.dpi > 0.0 && self.dpi.is_finite()) {
            return bad("dpi must be positive");
        }
        if !(self.display_size_cm > 0.0 && self.display_size_cm.is_finite()) {
            return bad("display size must be positive");
        }
        if self.trials == 0 {
            return bad("needs at least one trial");
        }
        if !(self.noise_sigma >= 0.0) || !(self.blur_radius >= 0.0) {
            return bad("noise and blur must be non-negative");
        }
        Ok(())
    }

    /// Sensor pixels per centimetre of the code plane at the viewing
    /// distance.
    pub fn pixels_per_cm(&self) -> f64 {
        self.dpi / 2.54
    }

    /// Every combination of sizes and angles, sharing the other fields.
    pub fn grid(sizes_cm: &[f64], angles_deg: &[f64], base: &Scenario) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &s in sizes_cm {
            for &a in angles_deg {
                out.push(Scenario {
                    display_size_cm: s,
                    angle_deg: a,
                    ..base.clone()
                });
            }
        }
        out
    }

    pub fn load_list(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
        let list: Vec<Scenario> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for sc in &list {
            sc.validate()?;
        }
        Ok(list)
    }
}

/// Pinhole view of the printed image: maps source pixel coordinates to
/// sensor pixel coordinates, and gives the sensor size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraView {
    pub homography: Homography,
    pub width: usize,
    pub height: usize,
}

impl CameraView {
    pub fn new(src_width: usize, src_height: usize, sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let k = sc.pixels_per_cm();
        let side = sc.display_size_cm;
        let (sw, sh) = (src_width as f64, src_height as f64);
        // source pixels to centred plane coordinates in cm, keeping aspect
        let cm_per_px = side / sw.max(sh);
        let to_plane = Matrix3::new(cm_per_px, 0.0, -sw * cm_per_px / 2.0, 0.0, cm_per_px, -sh * cm_per_px / 2.0, 0.0, 0.0, 1.0);
        // plane turned about its vertical axis, pushed to the viewing distance
        let phi = (90.0 - sc.angle_deg).to_radians();
        let to_camera = Matrix3::new(phi.cos(), 0.0, 0.0, 0.0, 1.0, 0.0, phi.sin(), 0.0, VIEW_DISTANCE_CM);
        let f = k * VIEW_DISTANCE_CM;
        let project = Matrix3::new(f, 0.0, 0.0, 0.0, f, 0.0, 0.0, 0.0, 1.0);
        let raw = Homography(project * to_camera * to_plane);

        let corners = [(0.0, 0.0), (sw, 0.0), (sw, sh), (0.0, sh)].map(|p| raw.apply(p));
        let (min_x, max_x) = corners.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p.0), h.max(p.0)));
        let (min_y, max_y) = corners.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p.1), h.max(p.1)));
        let margin = (MARGIN_FRACTION * side * k).ceil();
        let shift = Matrix3::new(1.0, 0.0, margin - min_x.floor(), 0.0, 1.0, margin - min_y.floor(), 0.0, 0.0, 1.0);
        let width = (max_x.ceil() - min_x.floor() + 2.0 * margin) as usize;
        let height = (max_y.ceil() - min_y.floor() + 2.0 * margin) as usize;
        Ok(CameraView {
            homography: Homography(shift * raw.0),
            width,
            height,
        })
    }
}

/// One synthetic capture of `img` under the scenario.
pub fn distort<R: Rng + ?Sized>(img: &GrayImage, sc: &Scenario, rng: &mut R) -> Result<GrayImage> {
    let view = CameraView::new(img.width(), img.height(), sc)?;
    let inv = view.homography.inverse().ok_or_else(|| Error::InvalidParameter("singular camera view".into()))?;
    // supersample when the print is shrunk onto the sensor
    let k = sc.pixels_per_cm();
    let src_px_per_cm = img.width().max(img.height()) as f64 / sc.display_size_cm;
    let ss = (src_px_per_cm / k).ceil().clamp(1.0, 4.0) as usize;
    let offsets: Vec<f64> = (0..ss).map(|i| (i as f64 + 0.5) / ss as f64).collect();

    let mut data = vec![0.0; view.width * view.height];
    let norm = 1.0 / (ss * ss) as f64;
    data.par_chunks_mut(view.width).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &oy in &offsets {
                for &ox in &offsets {
                    let (sx, sy) = inv.apply((x as f64 + ox, y as f64 + oy));
                    acc += bilinear(img, sx, sy, 255.0);
                }
            }
            *v = acc * norm;
        }
    });
    let plane = Plane::from_vec(view.width, view.height, data)?;
    let mut plane = gaussian_blur(&plane, sc.blur_radius);
    if sc.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, sc.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in plane.data_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(plane.to_gray())
}

/// Independent, reproducible random stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub scenario: Scenario,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub rows: Vec<CampaignRow>,
}

impl CampaignReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>9} {:>7} {:>6} {:>6} {:>6} {:>9} {:>7}",
            "size_cm", "angle", "dpi", "noise", "blur", "success", "rate"
        );
        for r in &self.rows {
            let sc = &r.scenario;
            let _ = writeln!(
                s,
                "{:>9.2} {:>7.1} {:>6.0} {:>6.2} {:>6.2} {:>4}/{:<4} {:>7.3}",
                sc.display_size_cm, sc.angle_deg, sc.dpi, sc.noise_sigma, sc.blur_radius, r.successes, r.trials, r.rate
            );
        }
        s
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Runs every scenario's trials through capture and decoding. Failed
/// decodes count against the rate rather than aborting the campaign.
pub fn run_campaign(img: &GrayImage, expected: &Message, scenarios: &[Scenario], params: &DecodeParams) -> Result<CampaignReport> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("campaign needs at least one scenario".into()));
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        sc.validate()?;
        let outcomes: Vec<Result<bool>> = (0..sc.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(sc.seed, t as u64);
                let shot = distort(img, sc, &mut rng)?;
                Ok(matches!(standard_decode(&shot, params), Ok(m) if &m == expected))
            })
            .collect();
        let mut successes = 0;
        for o in outcomes {
            successes += usize::from(o?);
        }
        log::debug!("scenario {sc:?}: {successes}/{}", sc.trials);
        rows.push(CampaignRow {
            scenario: sc.clone(),
            successes,
            trials: sc.trials,
            rate: successes as f64 / sc.trials as f64,
        });
    }
    Ok(CampaignReport { rows })
}
