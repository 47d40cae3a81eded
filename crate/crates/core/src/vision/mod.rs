//! Reads well colors from a camera image of the plate.
//!
//! The chain is: locate the fiducial marker, project the plate outline from
//! the marker's known offset, detect well rims with a circular Hough
//! transform, fit the 8×12 lattice to the detections, and average the pixels
//! near every lattice node.

mod circles;
pub mod geometry;
mod grid;
mod marker;

pub use circles::{detect_circles, Circle, Rect};
pub use geometry::{Affine2, Point};
pub use grid::{fit_grid, WellGrid, MIN_CIRCLES};
pub use marker::{adaptive_threshold, connected_components, detect_marker, MarkerDetection};

use crate::color::{round_half_up, ColorRgb};
use crate::imaging::RgbImage;
use crate::scene::{well_name, SceneConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("no decodable marker in the image")]
    NoMarker,
    #[error("too few well circles to fit a grid: {found} (need {MIN_CIRCLES})")]
    TooFewCircles { found: usize },
    #[error("detected circles do not span a two-dimensional grid")]
    DegenerateGrid,
}

/// Fraction of the well radius averaged when reading a color.
pub const SAMPLE_RADIUS_FRACTION: f64 = 0.6;

/// Estimated plate outline together with the scene-to-image map it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateRegion {
    /// TL, TR, BR, BL.
    pub corners: [Point; 4],
    /// Scene millimetres to image pixels.
    pub mm_to_px: Affine2,
    pub px_per_mm: f64,
}

/// Projects the configured plate outline through the map that takes the
/// configured marker square onto the detected one.
pub fn approximate_plate_region(marker: &MarkerDetection, scene: &SceneConfig) -> PlateRegion {
    let mm_to_px =
        Affine2::fit(&scene.marker_corners_mm(), &marker.corners).expect("marker corners are never collinear");
    PlateRegion {
        corners: scene.plate_corners_mm().map(|p| mm_to_px.apply(p)),
        px_per_mm: mm_to_px.scale(),
        mm_to_px,
    }
}

/// Mean color over a disk at every grid center; `None` where the disk leaves
/// the image.
pub fn read_well_colors(image: &RgbImage, grid: &WellGrid, sample_radius_px: f64) -> Vec<Option<ColorRgb>> {
    grid.centers.iter().map(|c| read_disk(image, *c, sample_radius_px)).collect()
}

fn read_disk(image: &RgbImage, center: Point, radius: f64) -> Option<ColorRgb> {
    let [cx, cy] = center;
    if cx - radius < 0.0 || cy - radius < 0.0 || cx + radius > image.width() as f64 || cy + radius > image.height() as f64
    {
        return None;
    }
    let (x0, x1) = ((cx - radius).floor() as usize, ((cx + radius).ceil() as usize).min(image.width()));
    let (y0, y1) = ((cy - radius).floor() as usize, ((cy + radius).ceil() as usize).min(image.height()));
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= radius * radius {
                for (s, v) in sum.iter_mut().zip(image.get(x, y).channels()) {
                    *s += u64::from(v);
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    let [r, g, b] = sum.map(|s| round_half_up(s as f64 / n as f64));
    Some(ColorRgb::new(r, g, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellReading {
    pub well: String,
    pub color: Option<ColorRgb>,
    pub center: Point,
    pub detected: bool,
}

/// Full result of analysing one plate image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateAnalysis {
    pub marker: MarkerDetection,
    pub region: PlateRegion,
    pub circles_found: usize,
    pub grid: WellGrid,
    pub wells: Vec<WellReading>,
}

impl PlateAnalysis {
    pub fn colors(&self) -> Vec<Option<ColorRgb>> {
        self.wells.iter().map(|w| w.color).collect()
    }
}

pub fn analyze(image: &RgbImage, scene: &SceneConfig) -> Result<PlateAnalysis, VisionError> {
    let gray = image.to_gray();
    let marker = detect_marker(&gray)?;
    let region = approximate_plate_region(&marker, scene);
    let expected_radius = scene.well_radius_mm * region.px_per_mm;
    let rect = Rect::around(&region.corners, 0.0, &gray);
    let circles = detect_circles(&gray, rect, expected_radius);
    let grid = fit_grid(&circles, &region, scene)?;
    let well_radius = scene.well_radius_mm * grid.pitch_px() / scene.well_pitch_mm;
    let colors = read_well_colors(image, &grid, SAMPLE_RADIUS_FRACTION * well_radius);
    let wells = colors
        .into_iter()
        .enumerate()
        .map(|(i, color)| WellReading { well: well_name(i), color, center: grid.centers[i], detected: grid.detected[i] })
        .collect();
    Ok(PlateAnalysis { marker, region, circles_found: circles.len(), grid, wells })
}

#[cfg(test)]
mod tests {
    use super::geometry::{contains, distance};
    use super::*;
    use crate::devices::render::render_plate;
    use crate::scene::{Perturbation, WELL_COUNT};

    fn quad_iou(a: &[Point; 4], b: &[Point; 4]) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for y in 0..960 {
            for x in 0..1280 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let (ia, ib) = (contains(a, p), contains(b, p));
                inter += usize::from(ia && ib);
                union += usize::from(ia || ib);
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn plate_region_overlaps_the_true_plate() {
        let scene = SceneConfig::default();
        let r = render_plate(&[], &scene, Perturbation { dx: 0.0, dy: 0.0, angle_deg: 0.0 }, 2.0, 4);
        let marker = detect_marker(&r.image.to_gray()).unwrap();
        let region = approximate_plate_region(&marker, &scene);
        assert!(quad_iou(&region.corners, &r.truth.plate_corners) > 0.9);
        assert!((region.px_per_mm - 8.0).abs() < 0.05);
    }

    #[test]
    fn plate_region_is_similarity_equivariant() {
        let scene = SceneConfig::default();
        let base = MarkerDetection {
            corners: [[560.0, 32.0], [720.0, 32.0], [720.0, 192.0], [560.0, 192.0]],
            id: 0,
            side_px: 160.0,
            rotation: 0,
            contrast: 1.0,
        };
        let a = approximate_plate_region(&base, &scene);
        let shifted = MarkerDetection { corners: base.corners.map(|p| [p[0] + 7.0, p[1] - 3.0]), ..base.clone() };
        let b = approximate_plate_region(&shifted, &scene);
        for (p, q) in a.corners.iter().zip(&b.corners) {
            assert!((q[0] - p[0] - 7.0).abs() < 1e-9 && (q[1] - p[1] + 3.0).abs() < 1e-9);
        }
        // doubling the marker about its TL corner doubles every offset from it
        let doubled = MarkerDetection { corners: base.corners.map(|p| [560.0 + 2.0 * (p[0] - 560.0), 32.0 + 2.0 * (p[1] - 32.0)]), ..base };
        let c = approximate_plate_region(&doubled, &scene);
        for (p, q) in a.corners.iter().zip(&c.corners) {
            assert!((q[0] - 560.0 - 2.0 * (p[0] - 560.0)).abs() < 1e-9);
            assert!((q[1] - 32.0 - 2.0 * (p[1] - 32.0)).abs() < 1e-9);
        }
        assert!((c.px_per_mm - 16.0).abs() < 1e-9);
    }

    #[test]
    fn noise_free_gray_well_reads_exactly() {
        let scene = SceneConfig::default();
        let mut wells = vec![None; WELL_COUNT];
        wells[17] = Some(ColorRgb::new(120, 120, 120));
        let r = render_plate(&wells, &scene, Perturbation { dx: 1.0, dy: 3.0, angle_deg: -0.5 }, 0.0, 0);
        let a = analyze(&r.image, &scene).unwrap();
        assert_eq!(a.wells[17].color, Some(ColorRgb::new(120, 120, 120)));
        assert_eq!(a.wells[18].color, Some(scene.empty_well));
        for (c, t) in a.grid.centers.iter().zip(&r.truth.well_centers) {
            assert!(distance(*c, *t) < 1.0, "{c:?} vs {t:?}");
        }
    }

    #[test]
    fn translation_moves_every_center_equally() {
        let scene = SceneConfig::default();
        let a = render_plate(&[], &scene, Perturbation { dx: 0.0, dy: 0.0, angle_deg: 1.0 }, 2.0, 1);
        let b = render_plate(&[], &scene, Perturbation { dx: 4.0, dy: -3.0, angle_deg: 1.0 }, 2.0, 2);
        let ga = analyze(&a.image, &scene).unwrap().grid;
        let gb = analyze(&b.image, &scene).unwrap().grid;
        for (p, q) in ga.centers.iter().zip(&gb.centers) {
            assert!(distance([p[0] + 4.0, p[1] - 3.0], *q) < 1.0);
        }
    }

    #[test]
    fn disk_leaving_the_image_is_flagged() {
        let img = RgbImage::filled(50, 50, ColorRgb::WHITE);
        let grid = WellGrid::from_basis([5.0, 5.0], [10.0, 0.0], [0.0, 10.0], vec![true; WELL_COUNT]);
        let read = read_well_colors(&img, &grid, 4.0);
        assert_eq!(read[0], Some(ColorRgb::WHITE));
        assert_eq!(read[95], None);
    }
}
