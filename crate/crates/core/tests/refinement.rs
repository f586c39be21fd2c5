//! Behaviour of the refinement loop on small stand-ins.

use artqr::decode::{error_level, DecodeParams, Eta};
use artqr::detect::standard_decode;
use artqr::qab::{make_blueprint, Blueprint, BlueprintOptions, CrossCenterMask};
use artqr::qr::{EcLevel, Message, Version};
use artqr::raster::{GrayImage, Plane, Raster, RgbImage};
use artqr::refine::{marker_loss, refine_image, Adam, LossWeights, RefineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blueprint() -> (Message, Blueprint) {
    let msg = Message::new("refine me", EcLevel::M, Version::new(2).unwrap()).unwrap();
    let guidance = GrayImage::from_fn(250, 250, |x, y| ((x + 2 * y) % 256) as u8);
    let opts = BlueprintOptions {
        module_px: 10,
        params: DecodeParams::for_module(Eta::DEFAULT, 10),
        ..BlueprintOptions::default()
    };
    let bp = make_blueprint(&guidance, &msg, &opts).unwrap();
    (msg, bp)
}

/// The blueprint pulled 40% of the way toward a smooth unrelated picture.
fn blended(bp: &Blueprint) -> GrayImage {
    let (w, h) = bp.image.dims();
    GrayImage::from_fn(w, h, |x, y| {
        let other = 128.0 + 100.0 * ((x as f64 / 17.0).sin() * (y as f64 / 23.0).cos());
        (0.6 * f64::from(bp.image.get(x, y)) + 0.4 * other).round() as u8
    })
}

fn config(iterations: usize) -> RefineConfig {
    RefineConfig {
        iterations,
        ..RefineConfig::default()
    }
}

#[test]
fn refinement_repairs_a_blend_and_keeps_its_shape() {
    let (msg, bp) = blueprint();
    let stylized = blended(&bp);
    assert!(error_level(&stylized, &bp.reorganized, &bp.grid, &bp.params).unwrap() > 0.0);
    let out = refine_image(&Raster::Gray(stylized.clone()), &bp, &LossWeights::default(), &config(400)).unwrap();
    assert_eq!(out.image.dims(), stylized.dims());
    assert_eq!(out.best_error, 0.0);
    assert!(out.first_zero_error.unwrap() <= 400);
    assert_eq!(error_level(&out.luminance, &bp.reorganized, &bp.grid, &bp.params).unwrap(), 0.0);
    assert_eq!(standard_decode(&out.luminance, &bp.params).unwrap(), msg);

    // best-so-far total never rises
    assert!(out.trace.windows(2).all(|w| w[1].best_total <= w[0].best_total));
    assert!(out.trace.iter().all(|r| r.best_total <= r.total));

    // the cross-centre pixels end far closer to the blueprint than they began
    let mask = CrossCenterMask::new(bp.reorganized.version(), &bp.grid, stylized.width(), stylized.height()).unwrap();
    let (before, _) = marker_loss(&stylized.to_plane(), &bp.image.to_plane(), &mask).unwrap();
    let (after, _) = marker_loss(&out.luminance.to_plane(), &bp.image.to_plane(), &mask).unwrap();
    assert!(after < before / 10.0, "marker loss {before} -> {after}");
}

#[test]
fn colour_inputs_keep_dimensions_and_colour() {
    let (_, bp) = blueprint();
    let (w, h) = bp.image.dims();
    let grey = blended(&bp);
    let rgb = RgbImage::from_vec(
        w,
        h,
        grey.data().iter().map(|&v| [v, v.saturating_sub(30), v.saturating_add(20)]).collect(),
    )
    .unwrap();
    let out = refine_image(&Raster::Rgb(rgb), &bp, &LossWeights::default(), &config(60)).unwrap();
    assert!(matches!(out.image, Raster::Rgb(_)));
    assert_eq!(out.image.dims(), (w, h));
}

#[test]
fn dropping_the_harmonizing_term_does_not_slow_convergence() {
    let (_, bp) = blueprint();
    let stylized = Raster::Gray(blended(&bp));
    let with = refine_image(&stylized, &bp, &LossWeights::default(), &config(400)).unwrap();
    let without = LossWeights {
        lambda3: 0.0,
        ..LossWeights::default()
    };
    let without = refine_image(&stylized, &bp, &without, &config(400)).unwrap();
    let (a, b) = (without.first_zero_error.unwrap(), with.first_zero_error.unwrap());
    assert!(a <= b, "without harmonizing {a}, with {b}");
}

#[test]
fn marker_steps_move_masked_pixels_toward_the_blueprint() {
    let (_, bp) = blueprint();
    let (w, h) = bp.image.dims();
    let mask = CrossCenterMask::new(bp.reorganized.version(), &bp.grid, w, h).unwrap();
    let target = bp.image.to_plane();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // offsets of at least 20 levels: 30 steps of at most 0.5 cannot overshoot
    let mut img: Vec<f64> = target
        .data()
        .iter()
        .map(|&v| {
            let d = rng.random_range(20.0..60.0);
            if v > 127.0 { v - d } else { v + d }
        })
        .collect();
    let mut adam = Adam::new(img.len(), 0.5, 0.9, 0.999, 1e-8);
    let mut dist: Vec<f64> = img.iter().zip(target.data()).map(|(a, b)| (a - b).abs()).collect();
    for _ in 0..30 {
        let plane = Plane::from_vec(w, h, img.clone()).unwrap();
        let (_, g) = marker_loss(&plane, &target, &mask).unwrap();
        adam.step(&mut img, g.data());
        for (i, &m) in mask.data().iter().enumerate() {
            let d = (img[i] - target.data()[i]).abs();
            if m {
                assert!(d <= dist[i] + 1e-12, "pixel {i} moved away: {} -> {d}", dist[i]);
            } else {
                assert_eq!(d, dist[i]);
            }
            dist[i] = d;
        }
    }
}

#[test]
fn rejects_mismatched_input_size() {
    let (_, bp) = blueprint();
    let small = Raster::Gray(GrayImage::filled(10, 10, 128));
    assert!(refine_image(&small, &bp, &LossWeights::default(), &config(5)).is_err());
}
