//! Minimal raster charts. Values go to companion CSV tables; the images
//! carry only axes, grid and coloured series.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WIDTH: u32 = 720;
const HEIGHT: u32 = 420;
const MARGIN: u32 = 40;

/// Series colours, in order.
pub const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

struct Frame {
    img: RgbImage,
    x: (f64, f64),
    y: (f64, f64),
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let grid = Rgb([225, 225, 225]);
        for k in 0..=4 {
            let gx = MARGIN + k * (WIDTH - 2 * MARGIN) / 4;
            let gy = MARGIN + k * (HEIGHT - 2 * MARGIN) / 4;
            for t in MARGIN..=HEIGHT - MARGIN {
                img.put_pixel(gx, t, grid);
            }
            for t in MARGIN..=WIDTH - MARGIN {
                img.put_pixel(t, gy, grid);
            }
        }
        let axis = Rgb([60, 60, 60]);
        for t in MARGIN..=WIDTH - MARGIN {
            img.put_pixel(t, HEIGHT - MARGIN, axis);
        }
        for t in MARGIN..=HEIGHT - MARGIN {
            img.put_pixel(MARGIN, t, axis);
        }
        Self { img, x, y }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * h;
        (px, py)
    }

    fn dot(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (a.0 + (b.0 - a.0) * t).round() as i64;
            let y = (a.1 + (b.1 - a.1) * t).round() as i64;
            self.dot(x, y, c);
            self.dot(x, y + 1, c);
        }
    }

    fn rect(&mut self, x0: f64, x1: f64, y: f64, c: Rgb<u8>) {
        let (px0, base) = self.to_px(x0, self.y.0.max(0.0).min(self.y.1));
        let (px1, top) = self.to_px(x1, y);
        let (ya, yb) = if top < base { (top, base) } else { (base, top) };
        for px in px0.round() as i64..px1.round() as i64 {
            for py in ya.round() as i64..=yb.round() as i64 {
                self.dot(px, py, c);
            }
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        self.img.save(path).with_context(|| format!("writing {}", path.display()))
    }
}

/// Overlaid polylines, one colour per series.
pub fn lines(series: &[Vec<(f64, f64)>], path: &Path) -> Result<()> {
    let all = || series.iter().flatten();
    let mut f = Frame::new(bounds(all().map(|p| p.0)), bounds(all().map(|p| p.1)));
    for (i, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[i % PALETTE.len()]);
        let pts: Vec<_> = s.iter().filter(|p| p.1.is_finite()).map(|p| f.to_px(p.0, p.1)).collect();
        for w in pts.windows(2) {
            f.line(w[0], w[1], c);
        }
        if let [p] = pts[..] {
            f.line(p, p, c);
        }
    }
    f.save(path)
}

/// Side-by-side bars: `groups[g][k]` is bar `k` of group `g`.
pub fn bars(groups: &[Vec<f64>], path: &Path) -> Result<()> {
    let k = groups.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let ys = groups.iter().flatten().copied().chain([0.0]);
    let mut f = Frame::new((0.0, groups.len().max(1) as f64), bounds(ys));
    for (g, vals) in groups.iter().enumerate() {
        for (j, v) in vals.iter().enumerate() {
            let w = 0.8 / k as f64;
            let x0 = g as f64 + 0.1 + j as f64 * w;
            f.rect(x0, x0 + w, *v, Rgb(PALETTE[j % PALETTE.len()]));
        }
    }
    f.save(path)
}

/// Two or more normalised histograms sharing bin edges, drawn as steps.
pub fn densities(edges: &[(f64, f64)], masses: &[Vec<f64>], path: &Path) -> Result<()> {
    let xs = edges.iter().flat_map(|e| [e.0, e.1]);
    let ys = masses.iter().flatten().copied().chain([0.0]);
    let mut f = Frame::new(bounds(xs), bounds(ys));
    for (i, m) in masses.iter().enumerate() {
        let c = Rgb(PALETTE[i % PALETTE.len()]);
        let mut prev: Option<(f64, f64)> = None;
        for (e, v) in edges.iter().zip(m) {
            let a = f.to_px(e.0, *v);
            let b = f.to_px(e.1, *v);
            if let Some(p) = prev {
                f.line(p, a, c);
            }
            f.line(a, b, c);
            prev = Some(b);
        }
    }
    f.save(path)
}
