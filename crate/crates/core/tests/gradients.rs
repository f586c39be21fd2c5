//! Analytic loss gradients against central finite differences, plus the
//! directional and closed-form checks on each loss.

use artqr::decode::{DecodeParams, Eta, ModuleGrid};
use artqr::qab::CrossCenterMask;
use artqr::qr::{encode_message, CodeTarget, EcLevel, Message, Version};
use artqr::raster::Plane;
use artqr::refine::{code_loss, marker_loss, window_weights, FeatureBank, Harmonizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROBES: usize = 1000;
const H: f64 = 0.5;
const TOLERANCE: f64 = 1e-4;

fn random_plane(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    Plane::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()
}

fn small_code() -> (CodeTarget, ModuleGrid, DecodeParams) {
    let msg = Message::new("grad", EcLevel::L, Version::new(1).unwrap()).unwrap();
    let target = encode_message(&msg, 3).unwrap();
    let grid = ModuleGrid::new(21, 3, (0, 0)).unwrap();
    let params = DecodeParams::new(Eta::DEFAULT, 3).unwrap();
    (target, grid, params)
}

/// Central difference at one pixel.
fn central(img: &Plane, i: usize, h: f64, f: &dyn Fn(&Plane) -> f64) -> f64 {
    let mut p = img.clone();
    p.data_mut()[i] += h;
    let up = f(&p);
    p.data_mut()[i] -= 2.0 * h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Largest relative error over the probes. Each error is divided by the
/// larger of the two values, floored at `floor` times the largest gradient
/// component so near-zero components are not judged on their own scale.
fn worst_error(img: &Plane, grad: &Plane, probes: &[usize], h: f64, floor: f64, f: &dyn Fn(&Plane) -> f64) -> f64 {
    let scale = grad.max_abs();
    assert!(scale > 0.0, "gradient vanishes everywhere");
    probes
        .iter()
        .map(|&i| {
            let (a, n) = (grad.data()[i], central(img, i, h, f));
            (a - n).abs() / a.abs().max(n.abs()).max(floor * scale)
        })
        .fold(0.0, f64::max)
}

fn check(img: &Plane, grad: &Plane, probes: &[usize], f: &dyn Fn(&Plane) -> f64) -> f64 {
    worst_error(img, grad, probes, H, 1e-3, f)
}

#[test]
fn code_loss_gradient_matches_finite_differences() {
    let (target, grid, params) = small_code();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = random_plane(&mut rng, 64, 64);
    let (_, grad) = code_loss(&img, &target, &grid, &params).unwrap();
    let weights = window_weights(3);

    // the hinge has a kink at each threshold; keep probes whose module mean
    // stays clear of it under the ±h step
    let module_mean = |mx: usize, my: usize| -> f64 {
        let (x0, y0) = grid.centre_square(mx, my, 3);
        weights.iter().enumerate().map(|(k, w)| w * img.get(x0 + k % 3, y0 + k / 3)).sum()
    };
    let mut probes = Vec::new();
    while probes.len() < PROBES {
        let (x, y) = (rng.random_range(0..63), rng.random_range(0..63));
        let v = module_mean(x / 3, y / 3);
        if (v - params.t_black()).abs() > 1.0 && (v - params.t_white()).abs() > 1.0 {
            probes.push(y * 64 + x);
        }
    }
    let f = |p: &Plane| code_loss(p, &target, &grid, &params).unwrap().0;
    let worst = check(&img, &grad, &probes, &f);
    assert!(worst < TOLERANCE, "worst relative error {worst}");
}

#[test]
fn marker_loss_gradient_matches_finite_differences() {
    let (_, grid, _) = small_code();
    let mask = CrossCenterMask::new(Version::new(1).unwrap(), &grid, 64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let img = random_plane(&mut rng, 64, 64);
    let bp = random_plane(&mut rng, 64, 64);
    let (_, grad) = marker_loss(&img, &bp, &mask).unwrap();
    // half the probes on the mask, half anywhere
    let on: Vec<usize> = (0..64 * 64).filter(|&i| mask.data()[i]).collect();
    let probes: Vec<usize> = (0..PROBES)
        .map(|k| if k % 2 == 0 { on[rng.random_range(0..on.len())] } else { rng.random_range(0..64 * 64) })
        .collect();
    let f = |p: &Plane| marker_loss(p, &bp, &mask).unwrap().0;
    let worst = check(&img, &grad, &probes, &f);
    assert!(worst < TOLERANCE, "worst relative error {worst}");
}

#[test]
fn harmonizing_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let img = random_plane(&mut rng, 64, 64);
    let reference = Plane::from_vec(64, 64, (0..64 * 64).map(|i| ((i % 64) * 3 + (i / 64)) as f64 % 256.0).collect()).unwrap();
    let h = Harmonizer::new(&reference, FeatureBank::default()).unwrap();
    let (_, grad) = h.loss_and_grad(&img).unwrap();
    let probes: Vec<usize> = (0..PROBES).map(|_| rng.random_range(0..64 * 64)).collect();
    let f = |p: &Plane| h.loss(p).unwrap();
    let worst = check(&img, &grad, &probes, &f);
    assert!(worst < TOLERANCE, "worst relative error {worst}");
    // a finer step removes the curvature term, so every component must
    // agree on its own scale
    let fine = worst_error(&img, &grad, &probes[..200], 0.05, 1e-6, &f);
    assert!(fine < TOLERANCE, "worst pointwise relative error {fine} at h = 0.05");
}

#[test]
fn darkening_a_wrongly_white_module_lowers_code_loss() {
    let (target, grid, params) = small_code();
    // every module mid-gray: dark-target modules are on the wrong side
    let img = Plane::from_vec(64, 64, vec![200.0; 64 * 64]).unwrap();
    let (mx, my) = (0..21 * 21)
        .map(|k| (k % 21, k / 21))
        .find(|&(x, y)| target.bit(x, y) == 0 && !target.role(x, y).is_marker())
        .unwrap();
    let (before, _) = code_loss(&img, &target, &grid, &params).unwrap();
    let mut darker = img.clone();
    let (cx, cy) = (mx * 3 + 1, my * 3 + 1);
    darker.set(cx, cy, 150.0);
    let (after, _) = code_loss(&darker, &target, &grid, &params).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn unit_perturbation_on_mask_gives_count_over_mask_size() {
    let (_, grid, _) = small_code();
    let mask = CrossCenterMask::new(Version::new(1).unwrap(), &grid, 64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let bp = random_plane(&mut rng, 64, 64);
    let on: Vec<usize> = (0..64 * 64).filter(|&i| mask.data()[i]).collect();
    for m in [1, 7, on.len() / 2, on.len()] {
        let mut img = bp.clone();
        for &i in on.iter().take(m) {
            img.data_mut()[i] += 1.0;
        }
        let (loss, _) = marker_loss(&img, &bp, &mask).unwrap();
        let expected = m as f64 / mask.count() as f64;
        assert!((loss - expected).abs() < 1e-12, "m={m}: {loss} vs {expected}");
    }
}

#[test]
fn harmonizing_loss_grows_with_brightness_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let reference = Plane::from_vec(64, 64, (0..64 * 64).map(|_| rng.random_range(60.0..190.0)).collect()).unwrap();
    let h = Harmonizer::new(&reference, FeatureBank::default()).unwrap();
    let shifted = |d: f64| {
        let mut p = reference.clone();
        p.data_mut().iter_mut().for_each(|v| *v += d);
        h.loss(&p).unwrap()
    };
    assert!(h.loss(&reference).unwrap() < 1e-6);
    let values: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&d| shifted(d)).collect();
    assert!(values[0] < values[1] && values[1] < values[2], "{values:?}");
}
