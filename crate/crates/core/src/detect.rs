//! Locating and reading a symbol in an arbitrary raster: finder patterns by
//! their 1:1:3:1:1 run signature, an alignment pattern by template search,
//! then a projective module grid sampled at module centres.

use crate::decode::DecodeParams;
use crate::error::{Error, Result};
use crate::geometry::{bilinear, Homography, Point};
use crate::qr::{decode_dark_modules, Message, Version};
use crate::raster::GrayImage;

/// Thresholded view of a raster. Everything off the image reads light, which
/// stands in for a missing quiet zone.
struct Binary {
    w: usize,
    h: usize,
    dark: Vec<bool>,
}

impl Binary {
    fn new(img: &GrayImage, threshold: f64) -> Self {
        Binary {
            w: img.width(),
            h: img.height(),
            dark: img.data().iter().map(|&v| f64::from(v) < threshold).collect(),
        }
    }

    fn at(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h && self.dark[y as usize * self.w + x as usize]
    }

    fn at_point(&self, (x, y): Point) -> bool {
        self.at(x.floor() as isize, y.floor() as isize)
    }
}

#[derive(Clone, Copy, Debug)]
struct Finder {
    x: f64,
    y: f64,
    module: f64,
    hits: usize,
}

fn ratio_ok(runs: &[usize; 5]) -> bool {
    let total: usize = runs.iter().sum();
    if total < 7 {
        return false;
    }
    let m = total as f64 / 7.0;
    let tol = m * 0.5;
    (runs[0] as f64 - m).abs() < tol
        && (runs[1] as f64 - m).abs() < tol
        && (runs[2] as f64 - 3.0 * m).abs() < 3.0 * tol
        && (runs[3] as f64 - m).abs() < tol
        && (runs[4] as f64 - m).abs() < tol
}

/// Walks from a dark pixel at `pos` along one axis and measures the five
/// runs around it. Returns the continuous centre of the middle run and the
/// pattern length.
fn cross_check(dark: impl Fn(isize) -> bool, pos: isize, max_run: usize) -> Option<(f64, usize)> {
    if !dark(pos) {
        return None;
    }
    let mut runs = [0usize; 5];
    let mut p = pos;
    while dark(p) && runs[2] <= 3 * max_run {
        runs[2] += 1;
        p -= 1;
    }
    let centre_start = p + 1;
    for (idx, want_dark) in [(1usize, false), (0, true)] {
        while dark(p) == want_dark && runs[idx] <= max_run {
            runs[idx] += 1;
            p -= 1;
        }
        if runs[idx] == 0 || runs[idx] > max_run {
            return None;
        }
    }
    let mut p = pos + 1;
    while dark(p) && runs[2] <= 3 * max_run {
        runs[2] += 1;
        p += 1;
    }
    for (idx, want_dark) in [(3usize, false), (4, true)] {
        while dark(p) == want_dark && runs[idx] <= max_run {
            runs[idx] += 1;
            p += 1;
        }
        if runs[idx] == 0 || runs[idx] > max_run {
            return None;
        }
    }
    ratio_ok(&runs).then(|| (centre_start as f64 + runs[2] as f64 / 2.0, runs.iter().sum()))
}

fn find_finders(bin: &Binary) -> Vec<Finder> {
    let mut found: Vec<Finder> = Vec::new();
    for y in 0..bin.h {
        let row = &bin.dark[y * bin.w..(y + 1) * bin.w];
        let mut runs: Vec<(bool, usize, usize)> = Vec::new();
        for (x, &d) in row.iter().enumerate() {
            match runs.last_mut() {
                Some((c, _, len)) if *c == d => *len += 1,
                _ => runs.push((d, x, 1)),
            }
        }
        for i in 0..runs.len().saturating_sub(4) {
            if !runs[i].0 {
                continue;
            }
            let window = [runs[i].2, runs[i + 1].2, runs[i + 2].2, runs[i + 3].2, runs[i + 4].2];
            if !ratio_ok(&window) {
                continue;
            }
            let total: usize = window.iter().sum();
            let cx = runs[i + 2].1 as f64 + runs[i + 2].2 as f64 / 2.0;
            if let Some(f) = confirm(bin, cx, y as f64 + 0.5, total) {
                merge(&mut found, f);
            }
        }
    }
    found
}

/// Vertical then horizontal cross-check through a row candidate.
fn confirm(bin: &Binary, cx: f64, cy: f64, row_total: usize) -> Option<Finder> {
    let max_run = row_total;
    let col = cx.floor() as isize;
    let (vy, vtotal) = cross_check(|y| bin.at(col, y), cy.floor() as isize, max_run)?;
    let ratio = vtotal as f64 / row_total as f64;
    if !(0.5..=2.0).contains(&ratio) {
        return None;
    }
    let row = vy.floor() as isize;
    let (hx, htotal) = cross_check(|x| bin.at(x, row), col, max_run)?;
    Some(Finder {
        x: hx,
        y: vy,
        module: (htotal + vtotal) as f64 / 14.0,
        hits: 1,
    })
}

fn merge(found: &mut Vec<Finder>, f: Finder) {
    for g in found.iter_mut() {
        let close = (g.x - f.x).hypot(g.y - f.y) <= 2.0 * g.module.max(f.module);
        let similar = (0.6..=1.6).contains(&(f.module / g.module));
        if close && similar {
            let k = g.hits as f64;
            g.x = (g.x * k + f.x) / (k + 1.0);
            g.y = (g.y * k + f.y) / (k + 1.0);
            g.module = (g.module * k + f.module) / (k + 1.0);
            g.hits += 1;
            return;
        }
    }
    found.push(f);
}

/// Candidate (top-left, top-right, bottom-left) triples, best first.
fn triads(finders: &[Finder]) -> Vec<[Finder; 3]> {
    let mut pool: Vec<Finder> = finders.iter().copied().filter(|f| f.hits >= 2).collect();
    if pool.len() < 3 {
        pool = finders.to_vec();
    }
    pool.sort_by(|a, b| b.hits.cmp(&a.hits));
    pool.truncate(10);

    let mut scored = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            for k in j + 1..pool.len() {
                if let Some(t) = orient([pool[i], pool[j], pool[k]]) {
                    scored.push(t);
                }
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().map(|(_, t)| t).collect()
}

fn dist(a: &Finder, b: &Finder) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Picks the corner finder and orders the triple clockwise. Returns a
/// plausibility score (lower is better) or `None` for shapes far from an
/// isosceles right triangle.
fn orient(t: [Finder; 3]) -> Option<(f64, [Finder; 3])> {
    let sizes = t.map(|f| f.module);
    let (lo, hi) = sizes.iter().fold((f64::MAX, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
    if hi / lo > 1.8 {
        return None;
    }
    let d = [dist(&t[1], &t[2]), dist(&t[0], &t[2]), dist(&t[0], &t[1])];
    let corner = (0..3).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let c = t[corner];
    let (mut p, mut q) = (t[(corner + 1) % 3], t[(corner + 2) % 3]);
    let (ux, uy) = (p.x - c.x, p.y - c.y);
    let (vx, vy) = (q.x - c.x, q.y - c.y);
    if ux * vy - uy * vx < 0.0 {
        std::mem::swap(&mut p, &mut q);
    }
    let (lp, lq) = (dist(&c, &p), dist(&c, &q));
    if lp < 7.0 * lo || lq < 7.0 * lo {
        return None;
    }
    let cos = (ux * vx + uy * vy).abs() / (lp * lq);
    let legs = (lp / lq).max(lq / lp);
    if cos > 0.5 || legs > 2.0 {
        return None;
    }
    Some((cos + (legs - 1.0) + (hi / lo - 1.0), [c, p, q]))
}

/// Distance from a finder centre along `dir` to the outer edge of the
/// pattern (three colour changes), in pixels.
fn run_out(bin: &Binary, from: &Finder, dir: Point, limit: f64) -> Option<f64> {
    let norm = dir.0.hypot(dir.1);
    let (dx, dy) = (dir.0 / norm, dir.1 / norm);
    let mut changes = 0;
    let mut prev = true;
    let mut t = 0.0;
    while t < limit {
        let d = bin.at_point((from.x + dx * t, from.y + dy * t));
        if d != prev {
            changes += 1;
            prev = d;
            if changes == 3 {
                return Some(t);
            }
        }
        t += 0.5;
    }
    None
}

/// Module pitch along the line joining two finders.
fn pitch(bin: &Binary, a: &Finder, b: &Finder) -> f64 {
    let limit = 8.0 * a.module.max(b.module);
    let ab = (b.x - a.x, b.y - a.y);
    let ba = (-ab.0, -ab.1);
    let runs = [
        run_out(bin, a, ab, limit),
        run_out(bin, a, ba, limit),
        run_out(bin, b, ba, limit),
        run_out(bin, b, ab, limit),
    ];
    let good: Vec<f64> = runs.iter().flatten().copied().collect();
    if good.is_empty() {
        (a.module + b.module) / 2.0
    } else {
        good.iter().sum::<f64>() / (3.5 * good.len() as f64)
    }
}

/// Plausible symbol sizes for a triad, nearest first.
fn dimensions(bin: &Binary, t: &[Finder; 3]) -> Vec<usize> {
    let top = dist(&t[0], &t[1]) / pitch(bin, &t[0], &t[1]);
    let left = dist(&t[0], &t[2]) / pitch(bin, &t[0], &t[2]);
    let est = (top + left) / 2.0 + 7.0;
    let mut sizes: Vec<usize> = (1..=40u32).map(|v| 17 + 4 * v as usize).collect();
    sizes.sort_by(|a, b| (*a as f64 - est).abs().total_cmp(&(*b as f64 - est).abs()));
    sizes.truncate(3);
    sizes
}

/// Searches around the predicted position for the 5×5 alignment template,
/// widening the search when nothing matches nearby: under strong
/// perspective the affine prediction can miss by several modules.
fn locate_alignment(bin: &Binary, affine: &Homography, n: usize) -> Option<Point> {
    let centre = n as f64 - 6.5;
    let p = affine.apply((centre, centre));
    let o = affine.apply((0.0, 0.0));
    let ex = {
        let q = affine.apply((1.0, 0.0));
        (q.0 - o.0, q.1 - o.1)
    };
    let ey = {
        let q = affine.apply((0.0, 1.0));
        (q.0 - o.0, q.1 - o.1)
    };
    let module = (ex.0.hypot(ex.1) + ey.0.hypot(ey.1)) / 2.0;
    let score_at = |c: Point| {
        let mut score = 0;
        for j in -2i32..=2 {
            for i in -2i32..=2 {
                let want_dark = i.abs().max(j.abs()) != 1;
                let q = (
                    c.0 + f64::from(i) * ex.0 + f64::from(j) * ey.0,
                    c.1 + f64::from(i) * ex.1 + f64::from(j) * ey.1,
                );
                if bin.at_point(q) == want_dark {
                    score += 1;
                }
            }
        }
        score
    };
    for modules in [4.0, 8.0, 12.0] {
        let radius = (modules * module).ceil() as isize;
        let mut best: Option<(usize, f64, Point)> = None;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let c = (p.0 + dx as f64, p.1 + dy as f64);
                let score = score_at(c);
                let off = (dx as f64).hypot(dy as f64);
                let better = match best {
                    None => true,
                    Some((s, o, _)) => score > s || (score == s && off < o),
                };
                if better {
                    best = Some((score, off, c));
                }
            }
        }
        if let Some((s, _, c)) = best.filter(|&(s, _, _)| s >= 23) {
            // the template matches on a plateau about a module wide; its
            // centroid is a sub-pixel estimate of the pattern centre
            let reach = (module / 2.0).ceil().max(1.0) as isize;
            let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let q = (c.0 + dx as f64, c.1 + dy as f64);
                    if score_at(q) == s {
                        sx += q.0;
                        sy += q.1;
                        k += 1.0;
                    }
                }
            }
            return Some((sx / k, sy / k));
        }
    }
    None
}

fn grid_transforms(bin: &Binary, t: &[Finder; 3], n: usize) -> Vec<Homography> {
    let nf = n as f64;
    let src = [(3.5, 3.5), (nf - 3.5, 3.5), (3.5, nf - 3.5)];
    let dst = [(t[0].x, t[0].y), (t[1].x, t[1].y), (t[2].x, t[2].y)];
    let Some(affine) = Homography::affine(&src, &dst) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    if n > 21 {
        if let Some(a) = locate_alignment(bin, &affine, n) {
            let src4 = [src[0], src[1], src[2], (nf - 6.5, nf - 6.5)];
            let dst4 = [dst[0], dst[1], dst[2], a];
            if let Some(h) = Homography::from_points(&src4, &dst4) {
                out.push(h);
            }
        }
    }
    out.push(affine);
    out
}

fn sample_modules(img: &GrayImage, h: &Homography, n: usize, threshold: f64) -> Vec<bool> {
    let mut dark = Vec::with_capacity(n * n);
    for my in 0..n {
        for mx in 0..n {
            let (x, y) = h.apply((mx as f64 + 0.5, my as f64 + 0.5));
            dark.push(bilinear(img, x, y, 255.0) < threshold);
        }
    }
    dark
}

/// Otsu's between-class variance threshold.
pub fn otsu_threshold(img: &GrayImage) -> f64 {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.data().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 128.0);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_t = t as f64 + 0.5;
        }
    }
    best_t
}

/// Locates and decodes the symbol in `img`, the way a phone scanner would.
/// A successful read: the decoded message together with the module
/// colours the scanner saw and the mask named by the format information.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub message: Message,
    pub mask: u8,
    /// Row-major, true for dark.
    pub dark: Vec<bool>,
}

impl Detection {
    pub fn n(&self) -> usize {
        self.message.version.size()
    }
}

/// Locates, samples and decodes a code anywhere in the image. Tries the
/// midpoint of the decoder thresholds first and Otsu's threshold second.
pub fn detect(img: &GrayImage, params: &DecodeParams) -> Result<Detection> {
    let mid = (params.t_black() + params.t_white()) / 2.0;
    let mut thresholds = vec![mid];
    let otsu = otsu_threshold(img);
    if (otsu - mid).abs() > 2.0 {
        thresholds.push(otsu);
    }

    let mut last_err = Error::NotFound;
    for &threshold in &thresholds {
        let bin = Binary::new(img, threshold);
        let finders = find_finders(&bin);
        for triad in triads(&finders).into_iter().take(6) {
            for n in dimensions(&bin, &triad) {
                let version = Version::new(((n - 17) / 4) as u32)?;
                for h in grid_transforms(&bin, &triad, n) {
                    let dark = sample_modules(img, &h, n, threshold);
                    match decode_dark_modules(version, &dark) {
                        Ok((message, mask)) => return Ok(Detection { message, mask, dark }),
                        Err(e) => last_err = e,
                    }
                }
            }
        }
    }
    Err(last_err)
}

pub fn standard_decode(img: &GrayImage, params: &DecodeParams) -> Result<Message> {
    detect(img, params).map(|d| d.message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{render_target, Eta};
    use crate::qr::{encode_message, EcLevel};

    fn params() -> DecodeParams {
        DecodeParams::for_module(Eta::DEFAULT, 16)
    }

    fn rotate90(img: &GrayImage) -> GrayImage {
        let (w, h) = img.dims();
        GrayImage::from_fn(h, w, |x, y| img.get(y, h - 1 - x))
    }

    #[test]
    fn reads_plain_renders() {
        for (text, v, level) in [("HELLO", 5, EcLevel::H), ("short", 1, EcLevel::L), ("a longer payload for version ten", 10, EcLevel::Q)] {
            let msg = Message::new(text, level, Version::new(v).unwrap()).unwrap();
            let target = encode_message(&msg, 3).unwrap();
            for quiet in [0, 4] {
                let (img, _) = render_target(&target, 6, quiet);
                assert_eq!(standard_decode(&img, &params()).unwrap(), msg, "v{v} quiet {quiet}");
            }
        }
    }

    #[test]
    fn handles_quarter_turns() {
        let msg = Message::new("rotate me", EcLevel::M, Version::new(5).unwrap()).unwrap();
        let (mut img, _) = render_target(&encode_message(&msg, 0).unwrap(), 8, 2);
        for _ in 0..4 {
            img = rotate90(&img);
            assert_eq!(standard_decode(&img, &params()).unwrap(), msg);
        }
    }

    #[test]
    fn blank_image_is_not_found() {
        for level in [0u8, 255] {
            let img = GrayImage::filled(200, 200, level);
            assert!(matches!(standard_decode(&img, &params()), Err(Error::NotFound)));
        }
    }

    #[test]
    fn finder_ratio_check() {
        assert!(ratio_ok(&[2, 2, 6, 2, 2]));
        assert!(ratio_ok(&[3, 2, 7, 2, 2]));
        assert!(!ratio_ok(&[2, 2, 2, 2, 2]));
        assert!(!ratio_ok(&[1, 1, 1, 1, 1]));
    }

    #[test]
    fn otsu_splits_two_levels() {
        let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 40 } else { 200 });
        let t = otsu_threshold(&img);
        assert!(t > 40.0 && t < 200.0);
    }
}
