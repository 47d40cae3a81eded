//! Fitting the 8×12 well lattice to detected circles.

use super::circles::Circle;
use super::geometry::{contains, Affine2, Point};
use super::{PlateRegion, VisionError};
use crate::scene::{SceneConfig, PLATE_COLS, PLATE_ROWS, WELL_COUNT};
use serde::{Deserialize, Serialize};

/// Fewest circles from which a grid is fitted.
pub const MIN_CIRCLES: usize = 8;
/// Largest distance between a circle and its lattice node still counted as a detection.
const INLIER_PX: f64 = 2.5;

/// Every center equals `origin + col · col_step + row · row_step` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellGrid {
    pub origin: Point,
    pub col_step: Point,
    pub row_step: Point,
    /// Row-major, A1 first.
    pub centers: Vec<Point>,
    /// Whether a detected circle supports each center; the rest are predicted only.
    pub detected: Vec<bool>,
}

impl WellGrid {
    pub fn from_basis(origin: Point, col_step: Point, row_step: Point, detected: Vec<bool>) -> Self {
        let centers = (0..WELL_COUNT)
            .map(|i| {
                let (r, c) = ((i / PLATE_COLS) as f64, (i % PLATE_COLS) as f64);
                [origin[0] + c * col_step[0] + r * row_step[0], origin[1] + c * col_step[1] + r * row_step[1]]
            })
            .collect();
        Self { origin, col_step, row_step, centers, detected }
    }

    pub fn pitch_px(&self) -> f64 {
        (self.col_step[0].hypot(self.col_step[1]) + self.row_step[0].hypot(self.row_step[1])) / 2.0
    }

    pub fn detected_count(&self) -> usize {
        self.detected.iter().filter(|d| **d).count()
    }
}

fn wrap45(deg: f64) -> f64 {
    (deg + 45.0).rem_euclid(90.0) - 45.0
}

/// Lattice direction modulo 90° from a histogram of nearest-neighbour
/// directions, plus the median nearest-neighbour spacing.
fn lattice_angle_and_pitch(pts: &[Point]) -> (f64, f64) {
    let mut angles = Vec::with_capacity(pts.len());
    let mut dists = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let nearest = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| ([q[0] - p[0], q[1] - p[1]], (q[0] - p[0]).hypot(q[1] - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((d, len)) = nearest {
            angles.push(d[1].atan2(d[0]).to_degrees().rem_euclid(90.0));
            dists.push(len);
        }
    }
    let mut hist = [0usize; 90];
    for a in &angles {
        hist[(*a as usize).min(89)] += 1;
    }
    let peak = (0..90).max_by_key(|&b| (hist[(b + 89) % 90] + hist[b] + hist[(b + 1) % 90], usize::MAX - b)).unwrap_or(0);
    let center = peak as f64 + 0.5;
    let near: Vec<f64> = angles.iter().map(|a| wrap45(a - center)).filter(|d| d.abs() <= 3.0).collect();
    let angle = wrap45(center + near.iter().sum::<f64>() / near.len().max(1) as f64);
    dists.sort_by(f64::total_cmp);
    (angle, dists[dists.len() / 2])
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

struct Assignment {
    node: (usize, usize),
    center: Point,
}

/// Nearest lattice node of every circle, keeping the closest circle per node.
fn assign(pts: &[Point], origin: Point, u: Point, v: Point, tolerance: f64) -> Vec<Assignment> {
    let det = u[0] * v[1] - u[1] * v[0];
    let mut best: Vec<Option<(f64, Point)>> = vec![None; WELL_COUNT];
    for p in pts {
        let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
        let col = ((dx * v[1] - dy * v[0]) / det).round();
        let row = ((u[0] * dy - u[1] * dx) / det).round();
        if !(0.0..PLATE_COLS as f64).contains(&col) || !(0.0..PLATE_ROWS as f64).contains(&row) {
            continue;
        }
        let q = [origin[0] + col * u[0] + row * v[0], origin[1] + col * u[1] + row * v[1]];
        let err = (p[0] - q[0]).hypot(p[1] - q[1]);
        let idx = row as usize * PLATE_COLS + col as usize;
        if err < tolerance && best[idx].is_none_or(|(e, _)| err < e) {
            best[idx] = Some((err, *p));
        }
    }
    best.iter()
        .enumerate()
        .filter_map(|(i, b)| b.map(|(_, center)| Assignment { node: (i % PLATE_COLS, i / PLATE_COLS), center }))
        .collect()
}

fn least_squares(assigned: &[Assignment]) -> Option<(Point, Point, Point)> {
    let src: Vec<Point> = assigned.iter().map(|a| [a.node.0 as f64, a.node.1 as f64]).collect();
    let dst: Vec<Point> = assigned.iter().map(|a| a.center).collect();
    let Affine2([ux, vx, ox, uy, vy, oy]) = Affine2::fit(&src, &dst)?;
    Some(([ox, oy], [ux, uy], [vx, vy]))
}

/// Fits the lattice to the circles lying inside the plate region and
/// predicts all 96 well centers, including wells with no detected circle.
pub fn fit_grid(circles: &[Circle], region: &PlateRegion, scene: &SceneConfig) -> Result<WellGrid, VisionError> {
    let pts: Vec<Point> = circles.iter().map(|c| c.center).filter(|p| contains(&region.corners, *p)).collect();
    if pts.len() < MIN_CIRCLES {
        return Err(VisionError::TooFewCircles { found: pts.len() });
    }
    let (angle, pitch) = lattice_angle_and_pitch(&pts);
    let (s, c) = angle.to_radians().sin_cos();
    let axis = [c * pitch, s * pitch];
    let perp = [-s * pitch, c * pitch];

    // orient the lattice like the plate: columns along the plate's x axis
    let x_axis = region.mm_to_px.apply([1.0, 0.0]);
    let y_axis = region.mm_to_px.apply([0.0, 1.0]);
    let o = region.mm_to_px.apply([0.0, 0.0]);
    let ex = [x_axis[0] - o[0], x_axis[1] - o[1]];
    let ey = [y_axis[0] - o[0], y_axis[1] - o[1]];
    let candidates = [axis, perp, [-axis[0], -axis[1]], [-perp[0], -perp[1]]];
    let u = *candidates.iter().max_by(|a, b| dot(**a, ex).total_cmp(&dot(**b, ex))).expect("four candidates");
    let v = if dot([-u[1], u[0]], ey) >= 0.0 { [-u[1], u[0]] } else { [u[1], -u[0]] };

    let anchor = region.mm_to_px.apply(scene.well_center_mm(0));
    let (mut origin, mut u, mut v) = (anchor, u, v);
    let mut tolerance = 0.35 * pitch;
    for _ in 0..3 {
        let assigned = assign(&pts, origin, u, v, tolerance);
        if assigned.len() < MIN_CIRCLES {
            return Err(VisionError::TooFewCircles { found: assigned.len() });
        }
        (origin, u, v) = least_squares(&assigned).ok_or(VisionError::DegenerateGrid)?;
        tolerance = INLIER_PX;
    }
    if (u[0] * v[1] - u[1] * v[0]).abs() < 1e-6 * pitch * pitch {
        return Err(VisionError::DegenerateGrid);
    }
    let mut detected = vec![false; WELL_COUNT];
    for a in assign(&pts, origin, u, v, INLIER_PX) {
        detected[a.node.1 * PLATE_COLS + a.node.0] = true;
    }
    Ok(WellGrid::from_basis(origin, u, v, detected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CameraPose, Perturbation};
    use crate::vision::approximate_plate_region;
    use crate::vision::MarkerDetection;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Region and true centers for a perturbed scene, with the marker taken as perfectly detected.
    fn setup(p: Perturbation) -> (PlateRegion, Vec<Point>, SceneConfig) {
        let scene = SceneConfig::default();
        let pose = CameraPose::new(&scene, &p);
        let marker = MarkerDetection {
            corners: scene.marker_corners_mm().map(|q| pose.to_pixels(q)),
            id: 0,
            side_px: 160.0,
            rotation: 0,
            contrast: 200.0,
        };
        let region = approximate_plate_region(&marker, &scene);
        let truth = (0..WELL_COUNT).map(|i| pose.to_pixels(scene.well_center_mm(i))).collect();
        (region, truth, scene)
    }

    fn circles(pts: &[Point]) -> Vec<Circle> {
        pts.iter().map(|p| Circle { center: *p, radius: 27.0, score: 100.0, support: 1.0 }).collect()
    }

    #[test]
    fn all_detected_wells_are_reproduced() {
        let (region, truth, scene) = setup(Perturbation { dx: 2.0, dy: -1.0, angle_deg: 1.3 });
        // half-pixel jitter on the detections
        let jittered: Vec<Point> =
            truth.iter().enumerate().map(|(i, p)| [p[0] + 0.4 * ((i % 3) as f64 - 1.0), p[1] - 0.3 * ((i % 2) as f64)]).collect();
        let grid = fit_grid(&circles(&jittered), &region, &scene).unwrap();
        assert_eq!(grid.centers.len(), 96);
        assert_eq!(grid.detected_count(), 96);
        for (a, b) in grid.centers.iter().zip(&jittered) {
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1.0);
        }
    }

    #[test]
    fn missing_circles_are_predicted() {
        let (region, truth, scene) = setup(Perturbation { dx: -4.0, dy: 4.5, angle_deg: -1.9 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut kept = truth.clone();
            kept.shuffle(&mut rng);
            kept.truncate(67);
            let grid = fit_grid(&circles(&kept), &region, &scene).unwrap();
            for (a, b) in grid.centers.iter().zip(&truth) {
                assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 3.0);
            }
            assert_eq!(grid.detected_count(), 67);
        }
    }

    #[test]
    fn seven_circles_are_not_enough() {
        let (region, truth, scene) = setup(Perturbation::default());
        let err = fit_grid(&circles(&truth[..7]), &region, &scene).unwrap_err();
        assert_eq!(err, VisionError::TooFewCircles { found: 7 });
    }

    #[test]
    fn spurious_circles_are_ignored() {
        let (region, truth, scene) = setup(Perturbation::default());
        let mut pts = truth.clone();
        pts.push([truth[0][0] + 30.0, truth[0][1] + 40.0]);
        pts.push([truth[50][0] + 36.0, truth[50][1] + 36.0]);
        let grid = fit_grid(&circles(&pts), &region, &scene).unwrap();
        for (a, b) in grid.centers.iter().zip(&truth) {
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 0.01);
        }
    }
}
