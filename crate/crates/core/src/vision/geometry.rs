//! Small planar transforms and polygon helpers.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// `p -> A p + t`, stored row-major as `[a, b, tx, c, d, ty]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2(pub [f64; 6]);

impl Affine2 {
    pub fn apply(&self, p: Point) -> Point {
        let [a, b, tx, c, d, ty] = self.0;
        [a * p[0] + b * p[1] + tx, c * p[0] + d * p[1] + ty]
    }

    /// Least-squares fit of `dst ≈ T(src)`; `None` when the points are collinear.
    pub fn fit(src: &[Point], dst: &[Point]) -> Option<Self> {
        let mut ata = SMatrix::<f64, 3, 3>::zeros();
        let mut atx = SVector::<f64, 3>::zeros();
        let mut aty = SVector::<f64, 3>::zeros();
        for (s, d) in src.iter().zip(dst) {
            let row = SVector::<f64, 3>::new(s[0], s[1], 1.0);
            ata += row * row.transpose();
            atx += row * d[0];
            aty += row * d[1];
        }
        let inv = ata.try_inverse()?;
        let x = inv * atx;
        let y = inv * aty;
        Some(Self([x[0], x[1], x[2], y[0], y[1], y[2]]))
    }

    /// Mean linear scale, the square root of the determinant.
    pub fn scale(&self) -> f64 {
        let [a, b, _, c, d, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }
}

/// Projective map of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    /// Exact map taking `src[i]` to `dst[i]` for four points in general position.
    pub fn from_points(src: &[Point; 4], dst: &[Point; 4]) -> Option<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let ([x, y], [u, v]) = (src[i], dst[i]);
            let r = 2 * i;
            a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
            a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b)?;
        Some(Self(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)))
    }

    pub fn apply(&self, p: Point) -> Point {
        let q = self.0 * Vector3::new(p[0], p[1], 1.0);
        [q[0] / q[2], q[1] / q[2]]
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Signed area by the shoelace formula; positive for clockwise corners in
/// image coordinates (y pointing down).
pub fn polygon_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i][0] * pts[(i + 1) % n][1] - pts[(i + 1) % n][0] * pts[i][1]).sum::<f64>() / 2.0
}

pub fn is_convex(quad: &[Point; 4]) -> bool {
    let cross = |i: usize| {
        let (a, b, c) = (quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]);
        (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
    };
    let signs: Vec<f64> = (0..4).map(cross).collect();
    signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)
}

/// Whether `p` lies inside the convex polygon `poly`.
pub fn contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let c = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// Intersection of the lines through `(p, p + d)` and `(q, q + e)`.
pub fn intersect(p: Point, d: Point, q: Point, e: Point) -> Option<Point> {
    let den = d[0] * e[1] - d[1] * e[0];
    if den.abs() < 1e-12 {
        return None;
    }
    let t = ((q[0] - p[0]) * e[1] - (q[1] - p[1]) * e[0]) / den;
    Some([p[0] + t * d[0], p[1] + t * d[1]])
}
