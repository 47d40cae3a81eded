//! Physical layout of the camera scene: plate, wells and fiducial marker.
//!
//! Lengths are in millimetres in the unperturbed scene frame, whose origin is
//! the top-left corner of the image. The camera maps millimetres to pixels by
//! a uniform scale and then applies a rigid perturbation about the image
//! center.

use crate::color::ColorRgb;
use serde::{Deserialize, Serialize};

pub const PLATE_ROWS: usize = 8;
pub const PLATE_COLS: usize = 12;
pub const WELL_COUNT: usize = PLATE_ROWS * PLATE_COLS;

/// Cells per side of a marker, border included.
pub const MARKER_CELLS: usize = 6;
/// Cells per side of the payload inside the border.
pub const PAYLOAD_CELLS: usize = 4;

/// Payload codes, row-major from the marker's top-left cell; bit 15 is the
/// first cell and a set bit is a dark cell. None of them is rotationally
/// symmetric, so a decoded code also fixes the marker orientation. Any two
/// codes, in any rotation, differ in at least four cells.
pub const MARKER_DICTIONARY: [u16; 4] = [
    0b0101_1011_1100_1000,
    0b1100_1011_1001_0001,
    0b1011_0000_1100_0001,
    0b1111_0001_0100_0100,
];

/// Rotates a payload code a quarter turn clockwise.
pub fn rotate_code(code: u16) -> u16 {
    let mut out = 0u16;
    for r in 0..PAYLOAD_CELLS {
        for c in 0..PAYLOAD_CELLS {
            let bit = (code >> (15 - (r * PAYLOAD_CELLS + c))) & 1;
            // cell (r, c) moves to (c, n-1-r)
            let (nr, nc) = (c, PAYLOAD_CELLS - 1 - r);
            out |= bit << (15 - (nr * PAYLOAD_CELLS + nc));
        }
    }
    out
}

/// Row-major well index of `(row, col)`.
pub fn well_index(row: usize, col: usize) -> usize {
    row * PLATE_COLS + col
}

/// Conventional well name, `A1` through `H12`.
pub fn well_name(index: usize) -> String {
    let (row, col) = (index / PLATE_COLS, index % PLATE_COLS);
    format!("{}{}", (b'A' + row as u8) as char, col + 1)
}

pub fn parse_well_name(name: &str) -> Option<usize> {
    let mut chars = name.chars();
    let row = chars.next()?.to_ascii_uppercase();
    if !('A'..='H').contains(&row) {
        return None;
    }
    let col: usize = chars.as_str().parse().ok()?;
    if !(1..=PLATE_COLS).contains(&col) {
        return None;
    }
    Some(well_index(row as usize - 'A' as usize, col - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width_px: usize,
    pub height_px: usize,
    pub px_per_mm: f64,
    /// Top-left corner of the plate.
    pub plate_origin_mm: [f64; 2],
    pub plate_size_mm: [f64; 2],
    /// Center of well A1 relative to the plate corner.
    pub a1_offset_mm: [f64; 2],
    pub well_pitch_mm: f64,
    pub well_radius_mm: f64,
    /// Width of the dark rim at the outside of every well.
    pub rim_mm: f64,
    /// Top-left corner of the marker's outer black border.
    pub marker_origin_mm: [f64; 2],
    pub marker_side_mm: f64,
    /// White margin printed around the marker.
    pub quiet_zone_mm: f64,
    /// Index into [`MARKER_DICTIONARY`].
    pub marker_id: usize,
    pub background: ColorRgb,
    pub plate_color: ColorRgb,
    pub rim_color: ColorRgb,
    pub empty_well: ColorRgb,
    pub label_color: ColorRgb,
    pub ink_color: ColorRgb,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width_px: 1280,
            height_px: 960,
            px_per_mm: 8.0,
            plate_origin_mm: [16.12, 29.0],
            plate_size_mm: [127.76, 85.48],
            a1_offset_mm: [14.38, 11.24],
            well_pitch_mm: 9.0,
            well_radius_mm: 3.4,
            rim_mm: 0.4,
            marker_origin_mm: [70.0, 4.0],
            marker_side_mm: 20.0,
            quiet_zone_mm: 2.5,
            marker_id: 0,
            background: ColorRgb::new(30, 30, 30),
            plate_color: ColorRgb::new(225, 225, 220),
            rim_color: ColorRgb::new(45, 45, 45),
            empty_well: ColorRgb::new(200, 200, 200),
            label_color: ColorRgb::new(245, 245, 245),
            ink_color: ColorRgb::new(15, 15, 15),
        }
    }
}

impl SceneConfig {
    pub fn marker_code(&self) -> u16 {
        MARKER_DICTIONARY[self.marker_id % MARKER_DICTIONARY.len()]
    }

    pub fn well_radius_px(&self) -> f64 {
        self.well_radius_mm * self.px_per_mm
    }

    /// Center of a well in scene millimetres.
    pub fn well_center_mm(&self, index: usize) -> [f64; 2] {
        let (row, col) = (index / PLATE_COLS, index % PLATE_COLS);
        [
            self.plate_origin_mm[0] + self.a1_offset_mm[0] + col as f64 * self.well_pitch_mm,
            self.plate_origin_mm[1] + self.a1_offset_mm[1] + row as f64 * self.well_pitch_mm,
        ]
    }

    /// Plate corners (TL, TR, BR, BL) in scene millimetres.
    pub fn plate_corners_mm(&self) -> [[f64; 2]; 4] {
        let [x, y] = self.plate_origin_mm;
        let [w, h] = self.plate_size_mm;
        [[x, y], [x + w, y], [x + w, y + h], [x, y + h]]
    }

    /// Marker corners (TL, TR, BR, BL) in scene millimetres.
    pub fn marker_corners_mm(&self) -> [[f64; 2]; 4] {
        let [x, y] = self.marker_origin_mm;
        let s = self.marker_side_mm;
        [[x, y], [x + s, y], [x + s, y + s], [x, y + s]]
    }
}

/// Rigid camera shift: rotation about the image center, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    pub dx: f64,
    pub dy: f64,
    pub angle_deg: f64,
}

/// Maps scene millimetres to image pixels and back.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    scale: f64,
    center: [f64; 2],
    cos: f64,
    sin: f64,
    shift: [f64; 2],
}

impl CameraPose {
    pub fn new(scene: &SceneConfig, p: &Perturbation) -> Self {
        let a = p.angle_deg.to_radians();
        Self {
            scale: scene.px_per_mm,
            center: [scene.width_px as f64 / 2.0, scene.height_px as f64 / 2.0],
            cos: a.cos(),
            sin: a.sin(),
            shift: [p.dx, p.dy],
        }
    }

    pub fn to_pixels(&self, mm: [f64; 2]) -> [f64; 2] {
        let (x, y) = (mm[0] * self.scale - self.center[0], mm[1] * self.scale - self.center[1]);
        [
            self.cos * x - self.sin * y + self.center[0] + self.shift[0],
            self.sin * x + self.cos * y + self.center[1] + self.shift[1],
        ]
    }

    pub fn to_mm(&self, px: [f64; 2]) -> [f64; 2] {
        let (x, y) = (px[0] - self.center[0] - self.shift[0], px[1] - self.center[1] - self.shift[1]);
        [
            (self.cos * x + self.sin * y + self.center[0]) / self.scale,
            (-self.sin * x + self.cos * y + self.center[1]) / self.scale,
        ]
    }
}
