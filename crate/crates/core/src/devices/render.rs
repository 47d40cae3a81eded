//! Synthetic camera images of a plate next to its fiducial marker.

use crate::color::ColorRgb;
use crate::imaging::RgbImage;
use crate::scene::{CameraPose, Perturbation, SceneConfig, MARKER_CELLS, PAYLOAD_CELLS, PLATE_COLS, PLATE_ROWS, WELL_COUNT};
use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

/// Exact pixel positions of the rendered features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub perturbation: Perturbation,
    pub well_centers: Vec<[f64; 2]>,
    pub well_radius_px: f64,
    /// Outer marker corners in the marker's own TL, TR, BR, BL order.
    pub marker_corners: [[f64; 2]; 4],
    pub plate_corners: [[f64; 2]; 4],
    pub marker_id: usize,
}

#[derive(Debug, Clone)]
pub struct RenderedPlate {
    pub image: RgbImage,
    pub truth: GroundTruth,
}

/// Whether marker cell `(row, col)` is dark.
fn marker_cell_dark(code: u16, row: usize, col: usize) -> bool {
    if row == 0 || col == 0 || row == MARKER_CELLS - 1 || col == MARKER_CELLS - 1 {
        return true;
    }
    let (r, c) = (row - 1, col - 1);
    (code >> (15 - (r * PAYLOAD_CELLS + c))) & 1 == 1
}

/// Scene colors by position, with every derived constant precomputed.
struct Shader {
    marker: [f64; 2],
    side: f64,
    inv_cell: f64,
    quiet: f64,
    plate: [f64; 2],
    plate_size: [f64; 2],
    a1: [f64; 2],
    pitch: f64,
    inv_pitch: f64,
    r2: f64,
    inner2: f64,
    code: u16,
    wells: [ColorRgb; WELL_COUNT],
    scene: SceneConfig,
}

impl Shader {
    fn new(scene: &SceneConfig, wells: &[Option<ColorRgb>]) -> Self {
        let inner = scene.well_radius_mm - scene.rim_mm;
        Self {
            marker: scene.marker_origin_mm,
            side: scene.marker_side_mm,
            inv_cell: MARKER_CELLS as f64 / scene.marker_side_mm,
            quiet: scene.quiet_zone_mm,
            plate: scene.plate_origin_mm,
            plate_size: scene.plate_size_mm,
            a1: scene.a1_offset_mm,
            pitch: scene.well_pitch_mm,
            inv_pitch: 1.0 / scene.well_pitch_mm,
            r2: scene.well_radius_mm * scene.well_radius_mm,
            inner2: inner * inner,
            code: scene.marker_code(),
            wells: std::array::from_fn(|i| wells.get(i).copied().flatten().unwrap_or(scene.empty_well)),
            scene: scene.clone(),
        }
    }

    /// Color at a point given in scene millimetres.
    #[inline]
    fn shade(&self, p: [f64; 2]) -> ColorRgb {
        let scene = &self.scene;
        let (u, v) = (p[0] - self.marker[0], p[1] - self.marker[1]);
        let (q, side) = (self.quiet, self.side);
        if u >= -q && v >= -q && u < side + q && v < side + q {
            if u >= 0.0 && v >= 0.0 && u < side && v < side {
                let col = ((u * self.inv_cell) as usize).min(MARKER_CELLS - 1);
                let row = ((v * self.inv_cell) as usize).min(MARKER_CELLS - 1);
                return if marker_cell_dark(self.code, row, col) { scene.ink_color } else { scene.label_color };
            }
            return scene.label_color;
        }
        let (x, y) = (p[0] - self.plate[0], p[1] - self.plate[1]);
        if !(x >= 0.0 && y >= 0.0 && x < self.plate_size[0] && y < self.plate_size[1]) {
            return scene.background;
        }
        // nearest lattice node; truncation is floor because both are >= 0 when in range
        let fc = (x - self.a1[0]) * self.inv_pitch + 0.5;
        let fr = (y - self.a1[1]) * self.inv_pitch + 0.5;
        if fc >= 0.0 && fr >= 0.0 && fc < PLATE_COLS as f64 && fr < PLATE_ROWS as f64 {
            let (col, row) = (fc as usize, fr as usize);
            let dx = x - (self.a1[0] + col as f64 * self.pitch);
            let dy = y - (self.a1[1] + row as f64 * self.pitch);
            let d2 = dx * dx + dy * dy;
            if d2 < self.r2 {
                return if d2 < self.inner2 { self.wells[row * PLATE_COLS + col] } else { scene.rim_color };
            }
        }
        scene.plate_color
    }
}

/// Sensor noise lookup: a 16-bit uniform index maps to the integer offset
/// `floor(σ·n + 0.5)`, `n` standard normal, by inverse CDF. Adding the offset
/// to an integer channel equals rounding the channel plus Gaussian noise half
/// up; tail probabilities below 2^-16 are dropped.
fn noise_table(sigma: f64) -> Vec<i16> {
    const N: usize = 1 << 16;
    let phi = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    let mut table = Vec::with_capacity(N);
    let mut k = -256i32;
    let mut cdf = phi((f64::from(k) + 0.5) / sigma);
    for u in 0..N {
        let p = (u as f64 + 0.5) / N as f64;
        while cdf < p && k < 256 {
            k += 1;
            cdf = phi((f64::from(k) + 0.5) / sigma);
        }
        table.push(k as i16);
    }
    table
}

fn add_noise(raw: &mut [u8], sigma: f64, seed: u64) {
    let table = noise_table(sigma);
    // a fast generator: the stream is several megabytes per image
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let narrow: Option<Vec<i8>> = table.iter().map(|&o| i8::try_from(o).ok()).collect();
    match narrow {
        // saturating add of an in-range offset is the clamped sum
        Some(t) => {
            let t: &[i8; 1 << 16] = t.as_slice().try_into().expect("table size");
            for chunk in raw.chunks_mut(4) {
                let mut bits = rng.next_u64();
                for v in chunk {
                    *v = v.saturating_add_signed(t[(bits & 0xFFFF) as usize]);
                    bits >>= 16;
                }
            }
        }
        None => {
            for chunk in raw.chunks_mut(4) {
                let mut bits = rng.next_u64();
                for v in chunk {
                    let offset = table[(bits & 0xFFFF) as usize];
                    bits >>= 16;
                    *v = (i16::from(*v) + offset).clamp(0, 255) as u8;
                }
            }
        }
    }
}

/// Renders `wells` (row-major, `None` = empty) as seen through a camera with
/// the given pose perturbation, then adds i.i.d. Gaussian noise of standard
/// deviation `noise_sigma` to every channel.
pub fn render_plate(
    wells: &[Option<ColorRgb>],
    scene: &SceneConfig,
    perturbation: Perturbation,
    noise_sigma: f64,
    seed: u64,
) -> RenderedPlate {
    let pose = CameraPose::new(scene, &perturbation);
    let shader = Shader::new(scene, wells);
    let (w, h) = (scene.width_px, scene.height_px);
    let mut image = RgbImage::filled(w, h, scene.background);

    // only the plate and the marker label differ from the background
    let q = scene.quiet_zone_mm;
    let [mx, my] = scene.marker_origin_mm;
    let side = scene.marker_side_mm;
    let label = [[mx - q, my - q], [mx + side + q, my - q], [mx + side + q, my + side + q], [mx - q, my + side + q]];
    let corners: Vec<[f64; 2]> = scene.plate_corners_mm().iter().chain(&label).map(|p| pose.to_pixels(*p)).collect();
    let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
    let x0 = clip(corners.iter().map(|p| p[0]).fold(f64::MAX, f64::min).floor() - 1.0, w);
    let x1 = clip(corners.iter().map(|p| p[0]).fold(f64::MIN, f64::max).ceil() + 1.0, w);
    let y0 = clip(corners.iter().map(|p| p[1]).fold(f64::MAX, f64::min).floor() - 1.0, h);
    let y1 = clip(corners.iter().map(|p| p[1]).fold(f64::MIN, f64::max).ceil() + 1.0, h);

    let origin = pose.to_mm([0.5, 0.5]);
    let ex = pose.to_mm([1.5, 0.5]);
    let ey = pose.to_mm([0.5, 1.5]);
    let step_x = [ex[0] - origin[0], ex[1] - origin[1]];
    let step_y = [ey[0] - origin[0], ey[1] - origin[1]];
    let raw = image.raw_mut();
    for y in y0..y1 {
        let fy = y as f64;
        let row = &mut raw[(y * w + x0) * 3..(y * w + x1) * 3];
        for (k, px) in row.chunks_exact_mut(3).enumerate() {
            let fx = (x0 + k) as f64;
            let mm = [
                origin[0] + fx * step_x[0] + fy * step_y[0],
                origin[1] + fx * step_x[1] + fy * step_y[1],
            ];
            px.copy_from_slice(&shader.shade(mm).channels());
        }
    }
    if noise_sigma > 0.0 {
        add_noise(raw, noise_sigma, seed);
    }
    let truth = GroundTruth {
        perturbation,
        well_centers: (0..WELL_COUNT).map(|i| pose.to_pixels(scene.well_center_mm(i))).collect(),
        well_radius_px: scene.well_radius_px(),
        marker_corners: scene.marker_corners_mm().map(|p| pose.to_pixels(p)),
        plate_corners: scene.plate_corners_mm().map(|p| pose.to_pixels(p)),
        marker_id: scene.marker_id,
    };
    RenderedPlate { image, truth }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wells_with(idx: usize, c: ColorRgb) -> Vec<Option<ColorRgb>> {
        let mut w = vec![None; WELL_COUNT];
        w[idx] = Some(c);
        w
    }

    #[test]
    fn unperturbed_geometry_is_analytic() {
        let scene = SceneConfig::default();
        let r = render_plate(&[], &scene, Perturbation::default(), 0.0, 0);
        // A1 center: (16.12 + 14.38, 29 + 11.24) mm * 8 px/mm
        let [x, y] = r.truth.well_centers[0];
        assert!((x - 244.0).abs() < 1e-9 && (y - 321.92).abs() < 1e-9);
        let [x, y] = r.truth.well_centers[95];
        assert!((x - (244.0 + 11.0 * 72.0)).abs() < 1e-9 && (y - (321.92 + 7.0 * 72.0)).abs() < 1e-9);
        assert_eq!(r.truth.marker_corners[0], [560.0, 32.0]);
    }

    #[test]
    fn filled_well_center_carries_its_color() {
        let scene = SceneConfig::default();
        let c = ColorRgb::new(120, 60, 200);
        let r = render_plate(&wells_with(13, c), &scene, Perturbation { dx: 2.0, dy: -3.0, angle_deg: 1.0 }, 0.0, 0);
        let [x, y] = r.truth.well_centers[13];
        assert_eq!(r.image.get(x as usize, y as usize), c);
        let [x, y] = r.truth.well_centers[14];
        assert_eq!(r.image.get(x as usize, y as usize), scene.empty_well);
    }

    #[test]
    fn noisy_well_averages_to_its_color() {
        let scene = SceneConfig::default();
        let c = ColorRgb::new(120, 120, 120);
        let r = render_plate(&wells_with(40, c), &scene, Perturbation::default(), 2.0, 9);
        let [cx, cy] = r.truth.well_centers[40];
        let (mut sum, mut n) = (0.0, 0.0);
        for y in (cy as usize - 5)..(cy as usize + 5) {
            for x in (cx as usize - 5)..(cx as usize + 5) {
                sum += f64::from(r.image.get(x, y).g);
                n += 1.0;
            }
        }
        assert!((sum / n - 120.0).abs() < 1.0);
    }

    #[test]
    fn noise_offsets_follow_the_rounded_normal() {
        let table = noise_table(2.0);
        let n = table.len() as f64;
        let mean: f64 = table.iter().map(|&k| f64::from(k)).sum::<f64>() / n;
        let var: f64 = table.iter().map(|&k| (f64::from(k) - mean).powi(2)).sum::<f64>() / n;
        // rounding to integers adds 1/12 to the variance
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - (4.0 + 1.0 / 12.0)).abs() < 0.02, "{var}");
        let zero = table.iter().filter(|&&k| k == 0).count() as f64 / n;
        // P(|2n| < 0.5) = erf(0.25 / sqrt 2)
        assert!((zero - 0.197413).abs() < 1e-4, "{zero}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let scene = SceneConfig::default();
        let w = wells_with(3, ColorRgb::new(1, 2, 3));
        let a = render_plate(&w, &scene, Perturbation::default(), 0.0, 1);
        let b = render_plate(&w, &scene, Perturbation::default(), 0.0, 2);
        assert_eq!(a.image, b.image);
        let a = render_plate(&w, &scene, Perturbation::default(), 2.0, 5);
        let b = render_plate(&w, &scene, Perturbation::default(), 2.0, 5);
        assert_eq!(a.image, b.image);
    }
}
