//! Projective maps, bilinear sampling and Gaussian blur.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::raster::{GrayImage, Plane};

pub type Point = (f64, f64);

/// A plane-to-plane projective transform acting on (x, y, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    /// Exact fit through four correspondences `src[i] → dst[i]`. Returns
    /// `None` for degenerate configurations.
    pub fn from_points(src: &[Point; 4], dst: &[Point; 4]) -> Option<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for (i, (&(x, y), &(u, v))) in src.iter().zip(dst).enumerate() {
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b)?;
        if h.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Homography(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)))
    }

    /// Affine map through three correspondences.
    pub fn affine(src: &[Point; 3], dst: &[Point; 3]) -> Option<Self> {
        let m = Matrix3::new(
            src[0].0, src[1].0, src[2].0, //
            src[0].1, src[1].1, src[2].1, //
            1.0, 1.0, 1.0,
        );
        let d = Matrix3::new(
            dst[0].0, dst[1].0, dst[2].0, //
            dst[0].1, dst[1].1, dst[2].1, //
            1.0, 1.0, 1.0,
        );
        Some(Homography(d * m.try_inverse()?))
    }

    pub fn apply(&self, (x, y): Point) -> Point {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.try_inverse().map(Homography)
    }

    pub fn then(&self, next: &Homography) -> Homography {
        Homography(next.0 * self.0)
    }
}

/// Bilinear sample at continuous pixel coordinates, where pixel (i, j)
/// covers [i, i+1)×[j, j+1) and is centred at (i+0.5, j+0.5). Points off the
/// image read `outside`; the border half-pixel replicates the edge.
pub fn bilinear(img: &GrayImage, x: f64, y: f64, outside: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
        return outside;
    }
    let fx = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let at = |i: usize, j: usize| f64::from(img.get(i, j));
    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Separable Gaussian blur with standard deviation `sigma` pixels and edge
/// replication. A non-positive sigma returns the input unchanged.
pub fn gaussian_blur(img: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (w, h) = img.dims();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let src = img.data();

    let r = radius as usize;
    let mut padded = vec![0.0; w + 2 * r];
    let mut tmp = vec![0.0; w * h];
    for (row, dst) in src.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[clamp(i as isize - radius, w)];
        }
        for (d, taps) in dst.iter_mut().zip(padded.windows(kernel.len())) {
            *d = kernel.iter().zip(taps).map(|(&kv, &t)| kv * t).sum();
        }
    }
    // vertical pass a whole row at a time, same summation order per pixel
    let mut out = vec![0.0; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - radius, h);
            for (d, &t) in dst.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *d += kv * t;
            }
        }
    }
    Plane::from_vec(w, h, out).expect("dimensions match")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point) -> bool {
        (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9
    }

    #[test]
    fn four_point_fit_reproduces_correspondences() {
        let src = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        let dst = [(3.0, 4.0), (20.0, 2.0), (25.0, 30.0), (1.0, 18.0)];
        let h = Homography::from_points(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!(close(h.apply(*s), *d));
        }
        let inv = h.inverse().unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!(close(inv.apply(*d), *s));
        }
    }

    #[test]
    fn degenerate_points_are_rejected() {
        let src = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        assert!(Homography::from_points(&src, &src).is_none());
    }

    #[test]
    fn affine_through_three_points() {
        let src = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let dst = [(5.0, 5.0), (5.0, 7.0), (3.0, 5.0)];
        let h = Homography::affine(&src, &dst).unwrap();
        assert!(close(h.apply((1.0, 1.0)), (3.0, 7.0)));
    }

    #[test]
    fn bilinear_hits_pixel_centres_and_interpolates() {
        let img = GrayImage::from_vec(2, 1, vec![0, 100]).unwrap();
        assert_eq!(bilinear(&img, 0.5, 0.5, 255.0), 0.0);
        assert_eq!(bilinear(&img, 1.5, 0.5, 255.0), 100.0);
        assert_eq!(bilinear(&img, 1.0, 0.5, 255.0), 50.0);
        assert_eq!(bilinear(&img, 10.0, 0.5, 255.0), 255.0);
        assert_eq!(bilinear(&img, 1.9, 0.5, 255.0), 100.0);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let flat = Plane::from_vec(5, 5, vec![7.0; 25]).unwrap();
        let b = gaussian_blur(&flat, 1.0);
        assert!(b.data().iter().all(|v| (v - 7.0).abs() < 1e-12));

        let mut spike = Plane::new(21, 21);
        spike.set(10, 10, 1.0);
        let b = gaussian_blur(&spike, 1.5);
        let total: f64 = b.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(b.get(10, 10) > b.get(11, 10));
    }
}
