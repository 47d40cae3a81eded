//! Square binary fiducial detection.

use super::geometry::{distance, intersect, is_convex, polygon_area, Homography, Point};
use super::VisionError;
use super::circles::Rect;
use crate::imaging::GrayImage;
use crate::scene::{rotate_code, MARKER_CELLS, MARKER_DICTIONARY, PAYLOAD_CELLS};
use serde::{Deserialize, Serialize};

pub const THRESHOLD_WINDOW: usize = 31;
pub const THRESHOLD_OFFSET: f32 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    /// Outer corners in the marker's own TL, TR, BR, BL order.
    pub corners: [Point; 4],
    pub id: usize,
    /// Mean length of the four sides.
    pub side_px: f64,
    /// Quarter turns (clockwise) of the marker relative to the image axes.
    pub rotation: usize,
    /// Mean gray level of light cells minus that of dark cells.
    pub contrast: f64,
}

/// Pixels darker than their neighbourhood mean by more than `offset`.
pub fn adaptive_threshold(gray: &GrayImage, window: usize, offset: f32) -> Vec<bool> {
    threshold_rect(gray, Rect::full(gray), window, offset)
}

/// [`adaptive_threshold`] restricted to `rect`; neighbourhoods are clipped
/// to the rectangle and the mask is indexed relative to it.
fn threshold_rect(gray: &GrayImage, rect: Rect, window: usize, offset: f32) -> Vec<bool> {
    let (w, h) = (rect.x1 - rect.x0, rect.y1 - rect.y0);
    let stride = w + 1;
    let src = gray.as_slice();
    let mut integral = vec![0f64; stride * (h + 1)];
    for y in 0..h {
        let line = &src[(rect.y0 + y) * gray.width() + rect.x0..][..w];
        let mut row = 0f64;
        for (x, v) in line.iter().enumerate() {
            row += f64::from(*v);
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let half = window / 2;
    let xs: Vec<(usize, usize)> = (0..w).map(|x| (x.saturating_sub(half), (x + half + 1).min(w))).collect();
    let offset = f64::from(offset);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(half), (y + half + 1).min(h));
        let top = &integral[y0 * stride..(y0 + 1) * stride];
        let bottom = &integral[y1 * stride..(y1 + 1) * stride];
        let rows = (y1 - y0) as f64;
        let line = &src[(rect.y0 + y) * gray.width() + rect.x0..][..w];
        let out = &mut mask[y * w..(y + 1) * w];
        for ((m, &(x0, x1)), v) in out.iter_mut().zip(&xs).zip(line) {
            let sum = bottom[x1] - top[x1] - bottom[x0] + top[x0];
            let area = rows * (x1 - x0) as f64;
            // v < mean - offset, without the division
            *m = (f64::from(*v) + offset) * area < sum;
        }
    }
    mask
}

/// 8-connected components of `mask`: a label per pixel (0 = background) and
/// the pixel list of every component.
pub fn connected_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, Vec<Vec<(u32, u32)>>) {
    let mut labels = vec![0u32; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        let mut pixels = Vec::new();
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            pixels.push((x as u32, y as u32));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        components.push(pixels);
    }
    (labels, components)
}

struct Candidate<'a> {
    label: u32,
    pixels: &'a [(u32, u32)],
}

/// Corners of a roughly axis-aligned square blob, refined by fitting a line
/// to the boundary pixels of each side.
fn fit_quad(c: &Candidate, labels: &[u32], width: usize, height: usize) -> Option<[Point; 4]> {
    let center = |&(x, y): &(u32, u32)| [f64::from(x) + 0.5, f64::from(y) + 0.5];
    let extreme = |key: fn(Point) -> f64| {
        c.pixels.iter().map(center).max_by(|a, b| key(*a).total_cmp(&key(*b))).expect("non-empty component")
    };
    let rough = [
        extreme(|p| -(p[0] + p[1])),
        extreme(|p| p[0] - p[1]),
        extreme(|p| p[0] + p[1]),
        extreme(|p| p[1] - p[0]),
    ];
    let area = polygon_area(&rough);
    if !is_convex(&rough) || area < 100.0 {
        return None;
    }
    let xs = c.pixels.iter().map(|p| p.0);
    let ys = c.pixels.iter().map(|p| p.1);
    let bbox_w = f64::from(xs.clone().max()? - xs.min()? + 1);
    let bbox_h = f64::from(ys.clone().max()? - ys.min()? + 1);
    // a square fills its bounding box; a circle's diagonal extremes span half of it
    if area < 0.75 * bbox_w * bbox_h {
        return None;
    }

    let boundary: Vec<Point> = c
        .pixels
        .iter()
        .filter(|&&(x, y)| {
            let (x, y) = (x as usize, y as usize);
            let outside = |nx: usize, ny: usize| labels[ny * width + nx] != c.label;
            x == 0 || y == 0 || x + 1 == width || y + 1 == height
                || outside(x - 1, y) || outside(x + 1, y) || outside(x, y - 1) || outside(x, y + 1)
        })
        .map(center)
        .collect();

    let centroid = [rough.iter().map(|p| p[0]).sum::<f64>() / 4.0, rough.iter().map(|p| p[1]).sum::<f64>() / 4.0];
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let (a, b) = (rough[i], rough[(i + 1) % 4]);
        let len = distance(a, b);
        let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let normal = [-dir[1], dir[0]];
        let side: Vec<Point> = boundary
            .iter()
            .copied()
            .filter(|p| {
                let (u, v) = (p[0] - a[0], p[1] - a[1]);
                let t = (u * dir[0] + v * dir[1]) / len;
                (u * normal[0] + v * normal[1]).abs() < 3.0 && (0.1..=0.9).contains(&t)
            })
            .collect();
        if side.len() < 5 {
            return None;
        }
        let n = side.len() as f64;
        let m = [side.iter().map(|p| p[0]).sum::<f64>() / n, side.iter().map(|p| p[1]).sum::<f64>() / n];
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &side {
            let (u, v) = (p[0] - m[0], p[1] - m[1]);
            sxx += u * u;
            sxy += u * v;
            syy += v * v;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let d = [theta.cos(), theta.sin()];
        // boundary pixel centers sit half a pixel inside the true edge
        let mut nrm = [-d[1], d[0]];
        if (m[0] - centroid[0]) * nrm[0] + (m[1] - centroid[1]) * nrm[1] < 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        lines.push(([m[0] + 0.5 * nrm[0], m[1] + 0.5 * nrm[1]], d));
    }
    let mut quad = [[0.0; 2]; 4];
    for i in 0..4 {
        let (p, d) = lines[(i + 3) % 4];
        let (q, e) = lines[i];
        quad[i] = intersect(p, d, q, e)?;
    }
    (is_convex(&quad) && distance(quad[0], rough[0]) < 4.0).then_some(quad)
}

/// Samples the 6×6 cell grid inside `quad` and decodes the payload.
fn decode(gray: &GrayImage, quad: &[Point; 4]) -> Option<MarkerDetection> {
    let n = MARKER_CELLS as f64;
    let h = Homography::from_points(&[[0.0, 0.0], [n, 0.0], [n, n], [0.0, n]], quad)?;
    let mut cells = [[0f64; MARKER_CELLS]; MARKER_CELLS];
    for (r, row) in cells.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut sum = 0.0;
            for dy in [0.3, 0.5, 0.7] {
                for dx in [0.3, 0.5, 0.7] {
                    let p = h.apply([c as f64 + dx, r as f64 + dy]);
                    if p[0] < 0.0 || p[1] < 0.0 || p[0] >= gray.width() as f64 || p[1] >= gray.height() as f64 {
                        return None;
                    }
                    sum += f64::from(gray.sample(p[0], p[1]));
                }
            }
            *cell = sum / 9.0;
        }
    }
    let flat = cells.iter().flatten();
    let (lo, hi) = flat.clone().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo < 40.0 {
        return None;
    }
    let thr = (lo + hi) / 2.0;
    let last = MARKER_CELLS - 1;
    let (mut dark_sum, mut dark_n, mut light_sum, mut light_n) = (0.0, 0, 0.0, 0);
    let mut observed = 0u16;
    for (r, row) in cells.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let dark = v < thr;
            if dark {
                dark_sum += v;
                dark_n += 1;
            } else {
                light_sum += v;
                light_n += 1;
            }
            if r == 0 || c == 0 || r == last || c == last {
                if !dark {
                    return None;
                }
            } else if dark {
                observed |= 1 << (15 - ((r - 1) * PAYLOAD_CELLS + (c - 1)));
            }
        }
    }
    if light_n == 0 {
        return None;
    }
    // codes differ by at least four cells in any rotation, so one flipped cell is still unambiguous
    let mut best: Option<(u32, usize, usize)> = None;
    for (id, &code) in MARKER_DICTIONARY.iter().enumerate() {
        let mut rotated = code;
        for k in 0..4 {
            let d = (rotated ^ observed).count_ones();
            if d <= 1 && best.is_none_or(|b| d < b.0) {
                best = Some((d, id, k));
            }
            rotated = rotate_code(rotated);
        }
    }
    let (_, id, k) = best?;
    let corners = std::array::from_fn(|i| quad[(i + k) % 4]);
    let side_px = (0..4).map(|i| distance(quad[i], quad[(i + 1) % 4])).sum::<f64>() / 4.0;
    Some(MarkerDetection {
        corners,
        id,
        side_px,
        rotation: k,
        contrast: light_sum / light_n as f64 - dark_sum / dark_n as f64,
    })
}

/// Blob shape test shared by both resolutions: a roughly square component
/// that does not touch the border of the searched area.
fn plausible(pixels: &[(u32, u32)], width: usize, height: usize, min_side: u32) -> Option<(u32, u32, u32, u32)> {
    let (x0, x1) = pixels.iter().fold((u32::MAX, 0), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y0, y1) = pixels.iter().fold((u32::MAX, 0), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let touches = x0 == 0 || y0 == 0 || x1 as usize + 1 == width || y1 as usize + 1 == height;
    let squarish = bw >= min_side && bh >= min_side && bw <= 2 * bh && bh <= 2 * bw;
    (!touches && squarish).then_some((x0, y0, x1, y1))
}

/// Full-resolution quad fit and decode of the blob found near `rect`.
fn refine(gray: &GrayImage, rect: Rect) -> Option<MarkerDetection> {
    let (w, h) = (rect.x1 - rect.x0, rect.y1 - rect.y0);
    let mask = threshold_rect(gray, rect, THRESHOLD_WINDOW, THRESHOLD_OFFSET);
    let (labels, components) = connected_components(&mask, w, h);
    let (i, pixels) = components.iter().enumerate().max_by_key(|(_, p)| p.len())?;
    plausible(pixels, w, h, 2 * MARKER_CELLS as u32)?;
    let cand = Candidate { label: i as u32 + 1, pixels };
    let local = fit_quad(&cand, &labels, w, h)?;
    let quad = local.map(|p| [p[0] + rect.x0 as f64, p[1] + rect.y0 as f64]);
    decode(gray, &quad)
}

/// Finds the highest-contrast decodable marker in the image.
///
/// Candidates come from thresholding a half-resolution copy; each one is
/// then thresholded again at full resolution in a window around it, where
/// the corners are fitted and the cells read.
pub fn detect_marker(gray: &GrayImage) -> Result<MarkerDetection, VisionError> {
    let small = gray.downsample2();
    let (sw, sh) = (small.width(), small.height());
    let mask = adaptive_threshold(&small, THRESHOLD_WINDOW / 2, THRESHOLD_OFFSET);
    let (labels, components) = connected_components(&mask, sw, sh);
    let margin = THRESHOLD_WINDOW / 2 + 2;
    let mut best: Option<MarkerDetection> = None;
    for (i, pixels) in components.iter().enumerate() {
        if pixels.len() < MARKER_CELLS * MARKER_CELLS {
            continue;
        }
        let Some((x0, y0, x1, y1)) = plausible(pixels, sw, sh, MARKER_CELLS as u32) else { continue };
        let cand = Candidate { label: i as u32 + 1, pixels };
        if fit_quad(&cand, &labels, sw, sh).is_none() {
            continue;
        }
        let rect = Rect {
            x0: (2 * x0 as usize).saturating_sub(margin),
            y0: (2 * y0 as usize).saturating_sub(margin),
            x1: (2 * x1 as usize + 2 + margin).min(gray.width()),
            y1: (2 * y1 as usize + 2 + margin).min(gray.height()),
        };
        if let Some(m) = refine(gray, rect) {
            if best.as_ref().is_none_or(|b| m.contrast > b.contrast) {
                best = Some(m);
            }
        }
    }
    best.ok_or(VisionError::NoMarker)
}
