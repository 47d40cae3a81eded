//! Circular Hough transform over Sobel gradients.

use super::geometry::Point;
use crate::imaging::GrayImage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
    /// Smoothed accumulator value at the peak.
    pub score: f64,
    /// Fraction of angular sectors with a rim edge at `radius`.
    pub support: f64,
}

/// Pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn full(gray: &GrayImage) -> Self {
        Self { x0: 0, y0: 0, x1: gray.width(), y1: gray.height() }
    }

    /// Bounding box of `pts` grown by `margin`, clipped to the image.
    pub fn around(pts: &[Point], margin: f64, gray: &GrayImage) -> Self {
        let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
        let (mut lx, mut ly, mut hx, mut hy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            lx = lx.min(p[0]);
            ly = ly.min(p[1]);
            hx = hx.max(p[0]);
            hy = hy.max(p[1]);
        }
        Self {
            x0: clip(lx - margin, gray.width()),
            y0: clip(ly - margin, gray.height()),
            x1: clip((hx + margin).ceil(), gray.width()),
            y1: clip((hy + margin).ceil(), gray.height()),
        }
    }

    fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }
}

/// Sobel response for a step of this many gray levels is `4 × step`.
const EDGE_STEP: f32 = 25.0;
const RADIUS_BAND: (f64, f64) = (0.8, 1.2);
/// Peak threshold as a fraction of the circumference at the expected radius.
const PEAK_FRACTION: f64 = 0.6;
/// Angular sectors checked for rim support, and the fraction that must have it.
const SECTORS: usize = 32;
const MIN_COVERAGE: f64 = 0.85;

struct Edge {
    x: f64,
    y: f64,
    ux: f64,
    uy: f64,
}

/// Sobel edges thinned to one pixel by non-maximum suppression along the
/// gradient direction.
fn sobel_edges(gray: &GrayImage, rect: Rect) -> Vec<Edge> {
    let mut edges = Vec::new();
    if rect.width() < 5 || rect.height() < 5 {
        return edges;
    }
    let (w, px) = (gray.width(), gray.as_slice());
    let (rw, rh) = (rect.width(), rect.height());
    let sobel = |x: usize, y: usize| {
        let (iy, ix) = (rect.y0 + y, rect.x0 + x);
        let (up, mid, down) = (&px[(iy - 1) * w..], &px[iy * w..], &px[(iy + 1) * w..]);
        let sx = up[ix + 1] + 2.0 * mid[ix + 1] + down[ix + 1] - up[ix - 1] - 2.0 * mid[ix - 1] - down[ix - 1];
        let sy = down[ix - 1] + 2.0 * down[ix] + down[ix + 1] - up[ix - 1] - 2.0 * up[ix] - up[ix + 1];
        (sx, sy)
    };
    let mut mag = vec![0f32; rw * rh];
    for y in 1..rh - 1 {
        let iy = rect.y0 + y;
        let (up, mid, down) = (&px[(iy - 1) * w..iy * w], &px[iy * w..(iy + 1) * w], &px[(iy + 1) * w..(iy + 2) * w]);
        let out = &mut mag[y * rw..(y + 1) * rw];
        for x in 1..rw - 1 {
            let ix = rect.x0 + x;
            let sx = up[ix + 1] + 2.0 * mid[ix + 1] + down[ix + 1] - up[ix - 1] - 2.0 * mid[ix - 1] - down[ix - 1];
            let sy = down[ix - 1] + 2.0 * down[ix] + down[ix + 1] - up[ix - 1] - 2.0 * up[ix] - up[ix + 1];
            out[x] = (sx * sx + sy * sy).sqrt();
        }
    }
    let thr = 4.0 * EDGE_STEP;
    // tan(22.5°) and tan(67.5°) split the gradient into four neighbour directions
    let (t1, t2) = (0.414_213_56f32, 2.414_213_6f32);
    for y in 2..rh - 2 {
        for x in 2..rw - 2 {
            let i = y * rw + x;
            let m = mag[i];
            if m <= thr {
                continue;
            }
            let (gx, gy) = sobel(x, y);
            let (ax, ay) = (gx.abs(), gy.abs());
            let step = if ay <= t1 * ax {
                1
            } else if ay >= t2 * ax {
                rw
            } else if (gx > 0.0) == (gy > 0.0) {
                rw + 1
            } else {
                rw - 1
            };
            // ties go to the pixel on the positive side
            if m < mag[i + step] || m <= mag[i - step] {
                continue;
            }
            edges.push(Edge {
                x: (rect.x0 + x) as f64 + 0.5,
                y: (rect.y0 + y) as f64 + 0.5,
                ux: f64::from(gx / m),
                uy: f64::from(gy / m),
            });
        }
    }
    edges
}

/// Detects circles of radius near `expected_radius` whose centers fall in
/// `rect`. Every edge pixel votes for centers along its gradient line on
/// both sides, so dark-on-light and light-on-dark rims both count.
pub fn detect_circles(gray: &GrayImage, rect: Rect, expected_radius: f64) -> Vec<Circle> {
    assert!(expected_radius > 2.0, "expected radius must exceed 2 px");
    let rmin = (RADIUS_BAND.0 * expected_radius).floor().max(1.0) as usize;
    let rmax = (RADIUS_BAND.1 * expected_radius).ceil() as usize;
    let margin = rmax as f64 + 2.0;
    let vote_rect = rect;
    let scan = Rect {
        x0: (rect.x0 as f64 - margin).max(0.0) as usize,
        y0: (rect.y0 as f64 - margin).max(0.0) as usize,
        x1: ((rect.x1 as f64 + margin) as usize).min(gray.width()),
        y1: ((rect.y1 as f64 + margin) as usize).min(gray.height()),
    };
    let edges = sobel_edges(gray, scan);
    let (aw, ah) = (vote_rect.width(), vote_rect.height());
    if aw == 0 || ah == 0 {
        return Vec::new();
    }
    let mut acc = vec![0u32; aw * ah];
    let vote = |e: &Edge, sign: f64, r: usize| {
        (e.x + sign * r as f64 * e.ux - vote_rect.x0 as f64, e.y + sign * r as f64 * e.uy - vote_rect.y0 as f64)
    };
    let inside = |(cx, cy): (f64, f64)| cx >= 0.0 && cy >= 0.0 && (cx as usize) < aw && (cy as usize) < ah;
    for e in &edges {
        for sign in [-1.0, 1.0] {
            // votes move monotonically with r, so two inside ends put the
            // whole segment inside
            let whole = inside(vote(e, sign, rmin)) && inside(vote(e, sign, rmax));
            for r in rmin..=rmax {
                let c = vote(e, sign, r);
                if whole || inside(c) {
                    acc[c.1 as usize * aw + c.0 as usize] += 1;
                }
            }
        }
    }

    let at = |x: usize, y: usize| acc[y * aw + x];
    // 3×3 box sum, as a horizontal pass then a vertical one
    let mut rows = vec![0u32; aw * ah];
    for (src, dst) in acc.chunks_exact(aw).zip(rows.chunks_exact_mut(aw)) {
        for x in 1..aw.saturating_sub(1) {
            dst[x] = src[x - 1] + src[x] + src[x + 1];
        }
    }
    let mut smooth = vec![0u32; aw * ah];
    for y in 1..ah.saturating_sub(1) {
        let (a, b, c) = (&rows[(y - 1) * aw..y * aw], &rows[y * aw..(y + 1) * aw], &rows[(y + 1) * aw..(y + 2) * aw]);
        for (x, s) in smooth[y * aw..(y + 1) * aw].iter_mut().enumerate() {
            *s = a[x] + b[x] + c[x];
        }
    }
    let thr = (PEAK_FRACTION * std::f64::consts::TAU * expected_radius) as u32;
    let mut peaks = Vec::new();
    for y in 1..ah.saturating_sub(1) {
        for x in 1..aw.saturating_sub(1) {
            let v = smooth[y * aw + x];
            if v < thr {
                continue;
            }
            let is_max = (0..3).all(|dy| (0..3).all(|dx| smooth[(y + dy - 1) * aw + x + dx - 1] <= v));
            if is_max {
                peaks.push((v, x, y));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let min_sep = 1.5 * expected_radius;
    let buckets = Buckets::new(&edges, scan, rmax + 2);
    let mut circles: Vec<Circle> = Vec::new();
    // peaks without a surrounding rim still shadow weaker peaks next to them
    let mut rejected: Vec<Circle> = Vec::new();
    for (score, px, py) in peaks {
        // centroid of raw votes around the peak
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for y in py.saturating_sub(2)..(py + 3).min(ah) {
            for x in px.saturating_sub(2)..(px + 3).min(aw) {
                let v = f64::from(at(x, y));
                sx += v * (x as f64 + 0.5);
                sy += v * (y as f64 + 0.5);
                sw += v;
            }
        }
        let center = [sx / sw + vote_rect.x0 as f64, sy / sw + vote_rect.y0 as f64];
        if circles.iter().chain(&rejected).any(|c| (c.center[0] - center[0]).hypot(c.center[1] - center[1]) < min_sep) {
            continue;
        }
        // four neighbouring rims can pile up votes at their common gap; a true
        // rim surrounds its center
        let nearby = buckets.near(center);
        let (radius, coverage) = estimate_radius(&nearby, center, rmin, rmax).unwrap_or((expected_radius, 0.0));
        if coverage < MIN_COVERAGE {
            rejected.push(Circle { center, radius, score: f64::from(score), support: coverage });
            continue;
        }
        circles.push(Circle { center, radius, score: f64::from(score), support: coverage });
    }
    circles
}

/// Edges binned on a square grid whose cell side is the search radius.
struct Buckets<'a> {
    cell: usize,
    origin: (usize, usize),
    cols: usize,
    rows: usize,
    bins: Vec<Vec<&'a Edge>>,
}

impl<'a> Buckets<'a> {
    fn new(edges: &'a [Edge], area: Rect, cell: usize) -> Self {
        let cols = area.width() / cell + 1;
        let rows = area.height() / cell + 1;
        let mut bins = vec![Vec::new(); cols * rows];
        for e in edges {
            let cx = (e.x as usize).saturating_sub(area.x0) / cell;
            let cy = (e.y as usize).saturating_sub(area.y0) / cell;
            bins[cy.min(rows - 1) * cols + cx.min(cols - 1)].push(e);
        }
        Self { cell, origin: (area.x0, area.y0), cols, rows, bins }
    }

    /// Edges in the 3×3 block of cells around `p`: everything within one cell side.
    fn near(&self, p: Point) -> Vec<&'a Edge> {
        let cx = (p[0].max(0.0) as usize).saturating_sub(self.origin.0) / self.cell;
        let cy = (p[1].max(0.0) as usize).saturating_sub(self.origin.1) / self.cell;
        let mut out = Vec::new();
        for y in cy.saturating_sub(1)..(cy + 2).min(self.rows) {
            for x in cx.saturating_sub(1)..(cx + 2).min(self.cols) {
                out.extend_from_slice(&self.bins[y * self.cols + x]);
            }
        }
        out
    }
}

/// Most common distance from `center` of the radially oriented edges in the
/// band, and the fraction of angular sectors holding an edge at that distance.
fn estimate_radius(edges: &[&Edge], center: Point, rmin: usize, rmax: usize) -> Option<(f64, f64)> {
    let mut hist = vec![0f64; rmax + 2];
    let mut sums = vec![0f64; rmax + 2];
    for e in edges {
        let (dx, dy) = (e.x - center[0], e.y - center[1]);
        let d = (dx * dx + dy * dy).sqrt();
        if d < rmin as f64 - 0.5 || d > rmax as f64 + 0.5 {
            continue;
        }
        if ((dx * e.ux + dy * e.uy) / d).abs() < 0.9 {
            continue;
        }
        let bin = d.round() as usize;
        hist[bin] += 1.0;
        sums[bin] += d;
    }
    let (mode, _) = hist.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let lo = mode.saturating_sub(1);
    let hi = (mode + 1).min(hist.len() - 1);
    let weight: f64 = hist[lo..=hi].iter().sum();
    if weight == 0.0 {
        return None;
    }
    let radius = sums[lo..=hi].iter().sum::<f64>() / weight;
    let mut covered = [false; SECTORS];
    for e in edges {
        let (dx, dy) = (e.x - center[0], e.y - center[1]);
        let d = (dx * dx + dy * dy).sqrt();
        if (d - radius).abs() <= 1.5 && ((dx * e.ux + dy * e.uy) / d).abs() >= 0.9 {
            let a = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
            covered[((a / std::f64::consts::TAU * SECTORS as f64) as usize).min(SECTORS - 1)] = true;
        }
    }
    Some((radius, covered.iter().filter(|c| **c).count() as f64 / SECTORS as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::ColorRgb;
    use crate::devices::render::render_plate;
    use crate::imaging::RgbImage;
    use crate::scene::{Perturbation, SceneConfig, WELL_COUNT};

    fn disk_image(cx: f64, cy: f64, r: f64) -> GrayImage {
        let mut img = RgbImage::filled(200, 160, ColorRgb::new(220, 220, 220));
        for y in 0..160 {
            for x in 0..200 {
                if (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) < r {
                    img.put(x, y, ColorRgb::new(40, 40, 40));
                }
            }
        }
        img.to_gray()
    }

    #[test]
    fn single_disk() {
        let gray = disk_image(97.3, 81.6, 20.0);
        let found = detect_circles(&gray, Rect::full(&gray), 20.0);
        assert_eq!(found.len(), 1, "{found:?}");
        let c = found[0];
        assert!((c.center[0] - 97.3).hypot(c.center[1] - 81.6) < 1.0);
        assert!((c.radius - 20.0).abs() <= 2.0, "radius {}", c.radius);
    }

    #[test]
    fn blank_image_has_no_circles() {
        let gray = RgbImage::filled(120, 90, ColorRgb::new(200, 200, 200)).to_gray();
        assert!(detect_circles(&gray, Rect::full(&gray), 20.0).is_empty());
    }

    #[test]
    fn clean_render_finds_the_wells() {
        let scene = SceneConfig::default();
        let mut wells = vec![None; WELL_COUNT];
        for (i, w) in wells.iter_mut().enumerate().step_by(3) {
            *w = Some(ColorRgb::new((i * 2) as u8, 100, 200 - i as u8));
        }
        let r = render_plate(&wells, &scene, Perturbation { dx: 1.5, dy: 2.0, angle_deg: 0.7 }, 0.0, 0);
        let gray = r.image.to_gray();
        let rect = Rect::around(&r.truth.plate_corners, 0.0, &gray);
        let found = detect_circles(&gray, rect, scene.well_radius_px());
        let mut matched = 0;
        for t in &r.truth.well_centers {
            if found.iter().any(|c| (c.center[0] - t[0]).hypot(c.center[1] - t[1]) < 2.0) {
                matched += 1;
            }
        }
        assert!(matched >= 90, "matched {matched} of 96 from {} circles", found.len());
    }
}
