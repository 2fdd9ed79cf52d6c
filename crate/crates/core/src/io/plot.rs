//! PNG rendering of fields: scalars through a fixed colormap, velocity with
//! direction as hue and magnitude as brightness.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::Field2D;

/// RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self { width, height, rgb: fill.repeat(width * height) }
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = 3 * (y * self.width + x);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Copies `tile` with its top-left corner at `(x0, y0)`.
    pub fn blit(&mut self, tile: &Image, x0: usize, y0: usize) {
        for y in 0..tile.height {
            for x in 0..tile.width {
                self.set(x0 + x, y0 + y, tile.get(x, y));
            }
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
        w.write_image_data(&self.rgb).map_err(|e| Error::format(path, e.to_string()))?;
        w.finish().map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Blue-white-red ramp on `t` in `[0, 1]`.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (0.23 + 0.77 * s, 0.30 + 0.70 * s, 0.75 + 0.25 * s)
    } else {
        let s = (t - 0.5) / 0.5;
        (1.0 - 0.30 * s, 1.0 - 0.98 * s, 1.0 - 0.85 * s)
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// HSV with full saturation.
pub fn hsv(h: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let v = v.clamp(0.0, 1.0);
    let x = v * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (v, x, 0.0),
        1 => (x, v, 0.0),
        2 => (0.0, v, x),
        3 => (0.0, x, v),
        4 => (x, 0.0, v),
        _ => (v, 0.0, x),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

fn raster(nx: usize, ny: usize, scale: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Image {
    let s = scale.max(1);
    let mut img = Image::new(nx * s, ny * s, [0; 3]);
    for j in 0..ny {
        for i in 0..nx {
            let c = f(i, j);
            // y grows northward in the grid, downward in the image
            for dy in 0..s {
                for dx in 0..s {
                    img.set(i * s + dx, (ny - 1 - j) * s + dy, c);
                }
            }
        }
    }
    img
}

/// Scalar field mapped linearly from `[lo, hi]`.
pub fn render_scalar(f: &Field2D, lo: f64, hi: f64, scale: usize) -> Image {
    let g = f.grid();
    let span = if hi > lo { hi - lo } else { 1.0 };
    raster(g.nx, g.ny, scale, |i, j| colormap((f.at(i, j) - lo) / span))
}

/// Velocity: angle as hue, magnitude over `vmax` as brightness.
pub fn render_velocity(u: &Field2D, v: &Field2D, vmax: f64, scale: usize) -> Image {
    let g = u.grid();
    let vmax = if vmax > 0.0 { vmax } else { 1.0 };
    raster(g.nx, g.ny, scale, |i, j| {
        let (a, b) = (u.at(i, j), v.at(i, j));
        hsv(b.atan2(a) / (2.0 * PI), a.hypot(b) / vmax)
    })
}

/// Tiles laid out row by row with a gap.
pub fn grid_image(rows: &[Vec<Image>], gap: usize) -> Image {
    let tw = rows.iter().flatten().map(|t| t.width).max().unwrap_or(0);
    let th = rows.iter().flatten().map(|t| t.height).max().unwrap_or(0);
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut img = Image::new(ncol * (tw + gap) + gap, rows.len() * (th + gap) + gap, [255; 3]);
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            img.blit(tile, gap + c * (tw + gap), gap + r * (th + gap));
        }
    }
    img
}

/// Line chart of several series on shared axes (log scale if requested).
pub fn line_chart(series: &[(&[f64], [u8; 3])], width: usize, height: usize, log: bool) -> Image {
    let mut img = Image::new(width, height, [255; 3]);
    let tf = |v: f64| if log { v.max(1e-300).log10() } else { v };
    let vals: Vec<f64> = series.iter().flat_map(|(s, _)| s.iter().map(|&v| tf(v))).filter(|v| v.is_finite()).collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if vals.is_empty() {
        return img;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pad = 4;
    let (w, h) = ((width - 2 * pad) as f64, (height - 2 * pad) as f64);
    for x in pad..width - pad {
        img.set(x, height - pad, [0; 3]);
    }
    for y in pad..=height - pad {
        img.set(pad - 1, y, [0; 3]);
    }
    for (s, color) in series {
        let n = s.len().max(2) - 1;
        let pt = |k: usize| {
            let x = pad as f64 + w * k as f64 / n as f64;
            let y = pad as f64 + h * (1.0 - (tf(s[k]) - lo) / span);
            (x, y)
        };
        for k in 0..s.len().saturating_sub(1) {
            let ((x0, y0), (x1, y1)) = (pt(k), pt(k + 1));
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
            for t in 0..=steps {
                let a = t as f64 / steps as f64;
                let (x, y) = (x0 + a * (x1 - x0), y0 + a * (y1 - y0));
                if x.is_finite() && y.is_finite() {
                    img.set(x.round() as usize, y.round() as usize, *color);
                }
            }
        }
    }
    img
}
