//! Bird and aircraft sprites: an RGB image plus an alpha plane.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{load_png_rgba, save_png_rgba, Image};

/// Supersampling factor for procedurally drawn silhouettes.
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    rgb: Image,
    alpha: Vec<f64>,
}

impl Sprite {
    pub fn new(rgb: Image, alpha: Vec<f64>) -> Result<Self> {
        let rgb = rgb.to_rgb();
        if alpha.len() != rgb.height() * rgb.width() {
            return Err(Error::invalid("sprite alpha plane does not match its image"));
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("sprite alpha outside [0, 1]"));
        }
        Ok(Self { rgb, alpha })
    }

    /// Loads a PNG with transparency; opaque PNGs become fully opaque sprites.
    pub fn from_png(path: impl AsRef<Path>) -> Result<Self> {
        let (rgb, alpha) = load_png_rgba(path)?;
        Sprite::new(rgb, alpha)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_png_rgba(&self.rgb, &self.alpha, path)
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn rgb(&self) -> &Image {
        &self.rgb
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Largest distance between two opaque pixels' centres, plus one pixel.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<(f64, f64)> = (0..self.height())
            .flat_map(|y| (0..self.width()).map(move |x| (y, x)))
            .filter(|&(y, x)| self.alpha[y * self.width() + x] > 0.0)
            .map(|(y, x)| (y as f64, x as f64))
            .collect();
        let mut best: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                best = best.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
            }
        }
        best + 1.0
    }

    /// Bird seen from below, flying towards the top edge. `size` is the
    /// wingspan in pixels.
    pub fn bottom_view(size: usize, body: [f64; 3], wing: [f64; 3]) -> Self {
        draw(size, size, |u, v| {
            // u: lateral in [-1, 1], v: along travel in [-1, 1] (up positive)
            let body_hit = ellipse(u, v - 0.05, 0.16, 0.62);
            let head = ellipse(u, v - 0.62, 0.13, 0.14);
            let tail = v < -0.45 && v > -0.85 && u.abs() < 0.08 + (-0.45 - v) * 0.45;
            let wings = {
                let sweep = v - 0.12 + 0.25 * u.abs();
                u.abs() <= 0.98 && sweep.abs() < 0.17 * (1.0 - 0.55 * u.abs())
            };
            if body_hit || head || tail {
                Some(body)
            } else if wings {
                Some(wing)
            } else {
                None
            }
        })
    }

    /// Bird in profile flying towards the right edge.
    pub fn side_view(size: usize, body: [f64; 3], wing: [f64; 3]) -> Self {
        let h = (size * 2 / 3).max(3);
        draw(h, size, |u, v| {
            // u: along travel in [-1, 1] (right positive), v: up in [-1, 1]
            let body_hit = ellipse(u + 0.05, v + 0.1, 0.62, 0.26);
            let head = ellipse(u - 0.62, v - 0.05, 0.2, 0.24);
            let beak = u > 0.78 && u < 0.98 && (v - 0.02).abs() < 0.08 * (0.98 - u) / 0.2;
            let tail = u < -0.5 && u > -0.98 && (v + 0.1).abs() < 0.1 + (-0.5 - u) * 0.35;
            let wing_hit = v > -0.05 && v < 0.95 && (u + 0.15 - 0.45 * v).abs() < 0.22 * (1.0 - 0.6 * v);
            if body_hit || head || beak || tail {
                Some(body)
            } else if wing_hit {
                Some(wing)
            } else {
                None
            }
        })
    }

    /// Fixed-wing aircraft seen from below, nose towards the top edge.
    pub fn aircraft(size: usize, color: [f64; 3]) -> Self {
        draw(size, size, |u, v| {
            let fuselage = ellipse(u, v, 0.1, 0.95);
            let wings = v.abs() < 0.5 && (v - 0.05 + 0.3 * u.abs()).abs() < 0.09 && u.abs() < 0.95;
            let stab = (v + 0.78).abs() < 0.07 && u.abs() < 0.35;
            (fuselage || wings || stab).then_some(color)
        })
    }

    /// Rotates clockwise by `degrees` about the sprite centre onto a square
    /// canvas large enough to hold every opaque pixel.
    pub fn rotated(&self, degrees: f64) -> Sprite {
        if degrees.rem_euclid(360.0) == 0.0 {
            return self.clone();
        }
        let (h, w) = (self.height() as f64, self.width() as f64);
        let side = ((h * h + w * w).sqrt().ceil() as usize) | 1;
        let (cy_src, cx_src) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
        let c = (side as f64 - 1.0) / 2.0;
        let t = degrees.to_radians();
        let (sin, cos) = t.sin_cos();
        let mut rgb = vec![0.0; side * side * 3];
        let mut alpha = vec![0.0; side * side];
        for y in 0..side {
            for x in 0..side {
                // inverse map: rotate destination offset counter-clockwise
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                let sx = cos * dx + sin * dy + cx_src;
                let sy = -sin * dx + cos * dy + cy_src;
                let (a, col) = self.sample(sy, sx);
                if a > 0.0 {
                    let i = y * side + x;
                    alpha[i] = a;
                    rgb[i * 3..i * 3 + 3].copy_from_slice(&col);
                }
            }
        }
        Sprite {
            rgb: Image::from_parts(side, side, 3, rgb),
            alpha,
        }
    }

    /// Mirror across the horizontal axis.
    pub fn flipped_vertical(&self) -> Sprite {
        let (h, w) = (self.height(), self.width());
        let mut rgb = Vec::with_capacity(h * w * 3);
        let mut alpha = Vec::with_capacity(h * w);
        for y in (0..h).rev() {
            for x in 0..w {
                rgb.extend_from_slice(self.rgb.pixel(y, x));
                alpha.push(self.alpha[y * w + x]);
            }
        }
        Sprite {
            rgb: Image::from_parts(h, w, 3, rgb),
            alpha,
        }
    }

    /// Bilinear sample of premultiplied colour; returns (alpha, straight colour).
    fn sample(&self, sy: f64, sx: f64) -> (f64, [f64; 3]) {
        let (h, w) = (self.height() as isize, self.width() as isize);
        if sy <= -1.0 || sx <= -1.0 || sy >= h as f64 || sx >= w as f64 {
            return (0.0, [0.0; 3]);
        }
        let y0 = sy.floor() as isize;
        let x0 = sx.floor() as isize;
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        let mut a = 0.0;
        let mut premul = [0.0; 3];
        for (yy, wy) in [(y0, 1.0 - fy), (y0 + 1, fy)] {
            for (xx, wx) in [(x0, 1.0 - fx), (x0 + 1, fx)] {
                if yy < 0 || xx < 0 || yy >= h || xx >= w {
                    continue;
                }
                let wgt = wy * wx;
                let i = yy as usize * self.width() + xx as usize;
                let ai = self.alpha[i] * wgt;
                a += ai;
                let px = self.rgb.pixel(yy as usize, xx as usize);
                for c in 0..3 {
                    premul[c] += px[c] * ai;
                }
            }
        }
        if a < 1e-3 {
            return (0.0, [0.0; 3]);
        }
        let col = premul.map(|p| (p / a).clamp(0.0, 1.0));
        (a.min(1.0), col)
    }
}

fn ellipse(u: f64, v: f64, ru: f64, rv: f64) -> bool {
    (u / ru).powi(2) + (v / rv).powi(2) <= 1.0
}

/// Rasterises a silhouette given in normalised coordinates (`u` right,
/// `v` up, both in `[-1, 1]`), supersampled for anti-aliased alpha.
fn draw(h: usize, w: usize, shape: impl Fn(f64, f64) -> Option<[f64; 3]>) -> Sprite {
    let mut rgb = vec![0.0; h * w * 3];
    let mut alpha = vec![0.0; h * w];
    let n = SUPERSAMPLE;
    let scale = h.max(w) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0usize;
            let mut acc = [0.0; 3];
            for sy in 0..n {
                for sx in 0..n {
                    let px = x as f64 + (sx as f64 + 0.5) / n as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / n as f64;
                    let u = (2.0 * px - w as f64) / scale;
                    let v = (h as f64 - 2.0 * py) / scale;
                    if let Some(col) = shape(u, v) {
                        hits += 1;
                        for c in 0..3 {
                            acc[c] += col[c];
                        }
                    }
                }
            }
            if hits > 0 {
                let i = y * w + x;
                alpha[i] = hits as f64 / (n * n) as f64;
                for c in 0..3 {
                    rgb[i * 3 + c] = acc[c] / hits as f64;
                }
            }
        }
    }
    Sprite {
        rgb: Image::from_parts(h, w, 3, rgb),
        alpha,
    }
}

/// Default silhouette colours: dark grey-brown body, slightly lighter wings.
pub const BIRD_BODY: [f64; 3] = [0.22, 0.19, 0.17];
pub const BIRD_WING: [f64; 3] = [0.32, 0.29, 0.26];
