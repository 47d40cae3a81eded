//! Color representation, distances and the dye-mixing forward model.
//!
//! Mixing follows a Beer–Lambert style law: every dye attenuates each RGB
//! channel by its transmittance raised to the dye's volume fraction, and the
//! remainder of the well is water. The result is quantized once, half-up.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Number of dyes in a mix, in `c, m, y, k` order.
pub const DYE_COUNT: usize = 4;

/// Names of the dyes, indexed like [`RatioVector`] components.
pub const DYE_NAMES: [&str; DYE_COUNT] = ["cyan", "magenta", "yellow", "black"];

/// Ratios may overshoot 1 by this much after floating point renormalization.
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("ratio component {index} is invalid: {value}")]
    InvalidComponent { index: usize, value: f64 },
    #[error("ratios sum to {0}, which exceeds 1")]
    SumExceedsOne(f64),
    #[error("transmittance {value} of {dye} is outside (0, 1]")]
    InvalidTransmittance { dye: &'static str, value: f64 },
}

/// An 8-bit sRGB color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u8; 3]", into = "[u8; 3]")]
pub struct ColorRgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorRgb {
    pub const WHITE: ColorRgb = ColorRgb::new(255, 255, 255);
    pub const BLACK: ColorRgb = ColorRgb::new(0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub fn channels(&self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

impl From<[u8; 3]> for ColorRgb {
    fn from(c: [u8; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }
}

impl From<ColorRgb> for [u8; 3] {
    fn from(c: ColorRgb) -> Self {
        c.channels()
    }
}

impl fmt::Display for ColorRgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.r, self.g, self.b)
    }
}

/// CIE L*a*b* under the D65 white point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorLab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// Volume fractions of cyan, magenta, yellow and black dye in one well.
///
/// Components are non-negative and sum to at most one; whatever is left is
/// water.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RatioVector([f64; DYE_COUNT]);

impl RatioVector {
    pub const WATER: RatioVector = RatioVector([0.0; DYE_COUNT]);

    pub fn new(c: f64, m: f64, y: f64, k: f64) -> Result<Self, ColorError> {
        Self::from_array([c, m, y, k])
    }

    pub fn from_array(values: [f64; DYE_COUNT]) -> Result<Self, ColorError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ColorError::InvalidComponent { index, value });
            }
        }
        let sum: f64 = values.iter().sum();
        if sum > 1.0 + SUM_TOLERANCE {
            return Err(ColorError::SumExceedsOne(sum));
        }
        Ok(Self(values))
    }

    /// Clamps negatives to zero and rescales onto the simplex when the sum
    /// exceeds one. Sums below one are left alone.
    pub fn clamped(values: [f64; DYE_COUNT]) -> Self {
        let mut v = values.map(|x| if x.is_finite() { x.max(0.0) } else { 0.0 });
        let sum: f64 = v.iter().sum();
        if sum > 1.0 {
            for x in &mut v {
                *x /= sum;
            }
        }
        Self(v)
    }

    pub fn as_array(&self) -> [f64; DYE_COUNT] {
        self.0
    }

    pub fn cyan(&self) -> f64 {
        self.0[0]
    }
    pub fn magenta(&self) -> f64 {
        self.0[1]
    }
    pub fn yellow(&self) -> f64 {
        self.0[2]
    }
    pub fn black(&self) -> f64 {
        self.0[3]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Component-wise mean of two mixes.
    pub fn midpoint(&self, other: &RatioVector) -> RatioVector {
        let mut out = [0.0; DYE_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            *o = 0.5 * (self.0[i] + other.0[i]);
        }
        RatioVector(out)
    }
}

impl TryFrom<[f64; DYE_COUNT]> for RatioVector {
    type Error = ColorError;
    fn try_from(v: [f64; DYE_COUNT]) -> Result<Self, Self::Error> {
        Self::from_array(v)
    }
}

impl From<RatioVector> for [f64; DYE_COUNT] {
    fn from(r: RatioVector) -> Self {
        r.0
    }
}

/// Per-channel RGB transmittance of one dye at full concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transmittance(pub [f64; 3]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyeSet {
    pub cyan: Transmittance,
    pub magenta: Transmittance,
    pub yellow: Transmittance,
    pub black: Transmittance,
}

impl Default for DyeSet {
    fn default() -> Self {
        Self {
            cyan: Transmittance([0.10, 0.65, 0.90]),
            magenta: Transmittance([0.90, 0.10, 0.55]),
            yellow: Transmittance([0.95, 0.90, 0.10]),
            black: Transmittance([0.08, 0.08, 0.08]),
        }
    }
}

impl DyeSet {
    pub fn as_array(&self) -> [Transmittance; DYE_COUNT] {
        [self.cyan, self.magenta, self.yellow, self.black]
    }

    pub fn validate(&self) -> Result<(), ColorError> {
        for (dye, t) in DYE_NAMES.iter().zip(self.as_array()) {
            for value in t.0 {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(ColorError::InvalidTransmittance { dye, value });
                }
            }
        }
        Ok(())
    }
}

/// Rounds to the nearest integer with halves going up, clamped to a channel.
pub fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// The dye-mixing forward model.
pub fn mix(ratios: &RatioVector, dyes: &DyeSet) -> ColorRgb {
    let mut channels = [255.0f64; 3];
    for (ratio, t) in ratios.0.iter().zip(dyes.as_array()) {
        if *ratio == 0.0 {
            continue;
        }
        for (c, tc) in channels.iter_mut().zip(t.0) {
            *c *= tc.powf(*ratio);
        }
    }
    ColorRgb::new(
        round_half_up(channels[0]),
        round_half_up(channels[1]),
        round_half_up(channels[2]),
    )
}

pub fn dist_euclidean(a: &ColorRgb, b: &ColorRgb) -> f64 {
    let d = |x: u8, y: u8| f64::from(x) - f64::from(y);
    let (dr, dg, db) = (d(a.r, b.r), d(a.g, b.g), d(a.b, b.b));
    (dr * dr + dg * dg + db * db).sqrt()
}

/// CIE76 color difference.
pub fn dist_delta_e(a: &ColorRgb, b: &ColorRgb) -> f64 {
    let (la, lb) = (srgb_to_lab(a), srgb_to_lab(b));
    let (dl, da, db) = (la.l - lb.l, la.a - lb.a, la.b - lb.b);
    (dl * dl + da * da + db * db).sqrt()
}

// D65 reference white, normalized so Y = 1.
const WHITE_X: f64 = 0.95047;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.08883;

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240481, -1.537151, -0.498536],
    [-0.969255, 1.875990, 0.041556],
    [0.055647, -0.204041, 1.057311],
];

const LAB_EPSILON: f64 = 216.0 / 24389.0; // (6/29)^3

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        t / (3.0 * (6.0f64 / 29.0).powi(2)) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > 6.0 / 29.0 {
        t * t * t
    } else {
        3.0 * (6.0f64 / 29.0).powi(2) * (t - 4.0 / 29.0)
    }
}

fn mat_mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn srgb_to_lab(c: &ColorRgb) -> ColorLab {
    let linear = c.channels().map(|v| srgb_decode(f64::from(v) / 255.0));
    let [x, y, z] = mat_mul(&SRGB_TO_XYZ, linear);
    let (fx, fy, fz) = (lab_f(x / WHITE_X), lab_f(y / WHITE_Y), lab_f(z / WHITE_Z));
    ColorLab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Inverse of [`srgb_to_lab`], rounding half-up and clamping out-of-gamut values.
pub fn lab_to_srgb(lab: &ColorLab) -> ColorRgb {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        WHITE_X * lab_f_inv(fx),
        WHITE_Y * lab_f_inv(fy),
        WHITE_Z * lab_f_inv(fz),
    ];
    let rgb = mat_mul(&XYZ_TO_SRGB, xyz).map(|v| round_half_up(255.0 * srgb_encode(v.max(0.0))));
    ColorRgb::from(rgb)
}

/// Distance used to score a measured color against the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    DeltaE,
}

impl Metric {
    pub fn distance(&self, a: &ColorRgb, b: &ColorRgb) -> f64 {
        match self {
            Metric::Euclidean => dist_euclidean(a, b),
            Metric::DeltaE => dist_delta_e(a, b),
        }
    }
}
