//! Weather and lighting distortions: rain streaks, snowflakes, sensor noise
//! and darkening. Each is a pure function of (image, level, seed).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    Rain,
    Snow,
    Noise,
    Darkness,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 4] = [
        DistortionKind::Rain,
        DistortionKind::Snow,
        DistortionKind::Noise,
        DistortionKind::Darkness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistortionKind::Rain => "rain",
            DistortionKind::Snow => "snow",
            DistortionKind::Noise => "noise",
            DistortionKind::Darkness => "darkness",
        }
    }

    /// Level at which the distortion is the identity.
    pub fn null_level(self) -> f64 {
        match self {
            DistortionKind::Darkness => 1.0,
            _ => 0.0,
        }
    }

    /// Full sweep grid, from the null level to the harshest setting.
    pub fn sweep_levels(self) -> Vec<f64> {
        match self {
            DistortionKind::Rain | DistortionKind::Snow => (0..=10).map(|i| i as f64 * 5.0).collect(),
            DistortionKind::Noise => (0..=8).map(|i| round6(i as f64 * 0.05)).collect(),
            DistortionKind::Darkness => (0..=7).map(|i| round6(1.0 - i as f64 * 0.1)).collect(),
        }
    }

    pub fn check_level(self, level: f64) -> Result<()> {
        let ok = match self {
            DistortionKind::Rain | DistortionKind::Snow => (0.0..=100.0).contains(&level),
            DistortionKind::Noise => level >= 0.0 && level.is_finite(),
            DistortionKind::Darkness => level > 0.0 && level <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            let legal = match self {
                DistortionKind::Rain | DistortionKind::Snow => "[0, 100] percent",
                DistortionKind::Noise => "sigma >= 0",
                DistortionKind::Darkness => "factor in (0, 1]",
            };
            Err(Error::invalid(format!(
                "{} level {level} outside {legal}",
                self.as_str()
            )))
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rain" => Ok(DistortionKind::Rain),
            "snow" => Ok(DistortionKind::Snow),
            "noise" | "gaussian" => Ok(DistortionKind::Noise),
            "darkness" | "brightness" | "dark" => Ok(DistortionKind::Darkness),
            other => Err(Error::Parse(format!("unknown distortion '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainParams {
    /// Drops per pixel at 100% intensity.
    pub area_coeff: f64,
    /// Streak length as a fraction of the image diagonal.
    pub length_frac: (f64, f64),
    /// Slant from horizontal, degrees.
    pub angle_deg: (f64, f64),
    pub gray: f64,
    pub blur_sigma: f64,
    pub alpha: f64,
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            area_coeff: 0.004,
            length_frac: (0.06, 0.10),
            angle_deg: (60.0, 75.0),
            gray: 0.78,
            blur_sigma: 1.0,
            alpha: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnowParams {
    /// Flakes per pixel at 100% intensity.
    pub area_coeff: f64,
    /// Largest radius as a fraction of the shorter side; the smallest is 1 px.
    pub max_radius_frac: f64,
    pub blur_sigma: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for SnowParams {
    fn default() -> Self {
        Self {
            area_coeff: 0.003,
            max_radius_frac: 0.01,
            blur_sigma: 1.5,
            alpha_min: 0.3,
            alpha_max: 0.85,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionParams {
    pub rain: RainParams,
    pub snow: SnowParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionConfig {
    pub kind: DistortionKind,
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DistortionConfig {
    pub fn new(kind: DistortionKind, level: f64, seed: u64) -> Result<Self> {
        kind.check_level(level)?;
        Ok(Self { kind, level, seed })
    }
}

pub fn apply(img: &Image, cfg: &DistortionConfig) -> Result<Image> {
    apply_with(img, cfg, &DistortionParams::default())
}

pub fn apply_with(img: &Image, cfg: &DistortionConfig, params: &DistortionParams) -> Result<Image> {
    match cfg.kind {
        DistortionKind::Rain => apply_rain_with(img, cfg.level, cfg.seed, &params.rain),
        DistortionKind::Snow => apply_snow_with(img, cfg.level, cfg.seed, &params.snow),
        DistortionKind::Noise => apply_noise(img, cfg.level, cfg.seed),
        DistortionKind::Darkness => apply_darkness(img, cfg.level),
    }
}

pub fn rain_drop_count(intensity: f64, height: usize, width: usize, p: &RainParams) -> usize {
    (intensity / 100.0 * p.area_coeff * (height * width) as f64).round() as usize
}

pub fn snow_flake_count(intensity: f64, height: usize, width: usize, p: &SnowParams) -> usize {
    (intensity / 100.0 * p.area_coeff * (height * width) as f64).round() as usize
}

pub fn apply_rain(img: &Image, intensity: f64, seed: u64) -> Result<Image> {
    apply_rain_with(img, intensity, seed, &RainParams::default())
}

pub fn apply_rain_with(img: &Image, intensity: f64, seed: u64, p: &RainParams) -> Result<Image> {
    DistortionKind::Rain.check_level(intensity)?;
    let (h, w) = (img.height(), img.width());
    let n = rain_drop_count(intensity, h, w, p);
    if n == 0 {
        return Ok(img.clone());
    }
    let mut rng = SeededRng::new(seed).rng();
    let diag = ((h * h + w * w) as f64).sqrt();
    let mut mask = vec![0.0; h * w];
    for _ in 0..n {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let len = diag * uniform(&mut rng, p.length_frac);
        let theta = uniform(&mut rng, p.angle_deg).to_radians();
        // top end leans right, like wind-blown streaks
        let (dx, dy) = (theta.cos() * len / 2.0, theta.sin() * len / 2.0);
        draw_line(&mut mask, h, w, (cx - dx, cy + dy), (cx + dx, cy - dy));
    }
    let mask = gaussian_blur(&mask, h, w, p.blur_sigma);
    Ok(blend(img, &mask, p.alpha, p.gray))
}

pub fn apply_snow(img: &Image, intensity: f64, seed: u64) -> Result<Image> {
    apply_snow_with(img, intensity, seed, &SnowParams::default())
}

pub fn apply_snow_with(img: &Image, intensity: f64, seed: u64, p: &SnowParams) -> Result<Image> {
    DistortionKind::Snow.check_level(intensity)?;
    let (h, w) = (img.height(), img.width());
    let n = snow_flake_count(intensity, h, w, p);
    if n == 0 {
        return Ok(img.clone());
    }
    let mut rng = SeededRng::new(seed).rng();
    let r_max = (p.max_radius_frac * h.min(w) as f64).max(1.0);
    let mut mask = vec![0.0; h * w];
    for _ in 0..n {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let r = if r_max > 1.0 {
            rng.random_range(1.0..=r_max)
        } else {
            1.0
        };
        draw_disc(&mut mask, h, w, cx, cy, r);
    }
    let mask = gaussian_blur(&mask, h, w, p.blur_sigma);
    let alpha = p.alpha_min + intensity / 100.0 * (p.alpha_max - p.alpha_min);
    Ok(blend(img, &mask, alpha, 1.0))
}

pub fn apply_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    DistortionKind::Noise.check_level(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = SeededRng::new(seed).rng();
    Ok(img.map(|v| v + normal.sample(&mut rng)))
}

pub fn apply_darkness(img: &Image, factor: f64) -> Result<Image> {
    DistortionKind::Darkness.check_level(factor)?;
    if factor == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v * factor))
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Alpha-composites `color` over `img` with per-pixel coverage `mask`.
fn blend(img: &Image, mask: &[f64], alpha: f64, color: f64) -> Image {
    let c = img.channels();
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let a = (alpha * mask[i / c]).clamp(0.0, 1.0);
            (v * (1.0 - a) + color * a).clamp(0.0, 1.0)
        })
        .collect();
    Image::from_parts(img.height(), img.width(), c, data)
}

/// One-pixel line, sampled every half pixel.
fn draw_line(mask: &mut [f64], h: usize, w: usize, a: (f64, f64), b: (f64, f64)) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let steps = (len * 2.0).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).floor();
        let y = (a.1 + t * (b.1 - a.1)).floor();
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            mask[y as usize * w + x as usize] = 1.0;
        }
    }
}

fn draw_disc(mask: &mut [f64], h: usize, w: usize, cx: f64, cy: f64, r: f64) {
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(h.saturating_sub(1));
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                mask[y * w + x] = 1.0;
            }
        }
    }
}

/// Separable Gaussian blur of a single-channel plane, edges clamped.
pub fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * plane[y * w + clamp(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |y, x, c| ((y * 7 + x * 3 + c * 11) % 97) as f64 / 96.0).unwrap()
    }

    #[test]
    fn null_levels_are_bitwise_identities() {
        let img = gradient(40, 50);
        for kind in DistortionKind::ALL {
            let out = apply(&img, &DistortionConfig::new(kind, kind.null_level(), 9).unwrap()).unwrap();
            assert!(out.bitwise_eq(&img), "{kind}");
        }
    }

    #[test]
    fn rain_is_deterministic_and_brightens_dark_images() {
        let dark = Image::filled(96, 96, &[0.1, 0.1, 0.15]);
        let a = apply_rain(&dark, 50.0, 3).unwrap();
        let b = apply_rain(&dark, 50.0, 3).unwrap();
        assert!(a.bitwise_eq(&b));
        assert!(!a.bitwise_eq(&apply_rain(&dark, 50.0, 4).unwrap()));
        assert!(a.mean_luminance() > dark.mean_luminance());
    }

    #[test]
    fn snow_flake_count_is_monotone() {
        let p = SnowParams::default();
        let counts: Vec<usize> = (0..=20)
            .map(|i| snow_flake_count(i as f64 * 5.0, 512, 512, &p))
            .collect();
        assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");
    }

    #[test]
    fn snow_on_black_produces_bright_pixels() {
        let black = Image::filled(512, 512, &[0.0, 0.0, 0.0]);
        let out = apply_snow(&black, 50.0, 1).unwrap();
        assert!(out.max_value() > 0.5);
    }

    #[test]
    fn noise_statistics() {
        let img = Image::filled(512, 512, &[0.5, 0.5, 0.5]);
        let out = apply_noise(&img, 0.1, 17).unwrap();
        let diffs: Vec<f64> = out.data().iter().map(|v| v - 0.5).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 0.01, "{mean}");
        assert!((0.09..=0.11).contains(&std), "{std}");
    }

    #[test]
    fn darkness_examples() {
        let px = Image::filled(1, 1, &[0.8, 0.8, 0.8]);
        assert!((apply_darkness(&px, 0.5).unwrap().get(0, 0, 0) - 0.4).abs() < 1e-15);
        let img = gradient(30, 30);
        let dim = apply_darkness(&img, 0.3).unwrap();
        assert!((dim.mean_luminance() - 0.3 * img.mean_luminance()).abs() < 1e-12);
    }

    #[test]
    fn illegal_levels_are_rejected() {
        let img = gradient(8, 8);
        assert!(matches!(apply_rain(&img, -1.0, 0), Err(Error::InvalidArgument(_))));
        assert!(apply_snow(&img, 100.5, 0).is_err());
        assert!(apply_noise(&img, -0.1, 0).is_err());
        assert!(apply_darkness(&img, 0.0).is_err());
        assert!(apply_darkness(&img, 1.2).is_err());
    }

    #[test]
    fn sweep_grids() {
        assert_eq!(DistortionKind::Rain.sweep_levels().len(), 11);
        assert_eq!(
            DistortionKind::Noise.sweep_levels(),
            vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]
        );
        assert_eq!(DistortionKind::Darkness.sweep_levels().last(), Some(&0.3));
    }

    #[test]
    fn blur_preserves_constant_plane() {
        let plane = vec![0.7; 20 * 15];
        for v in gaussian_blur(&plane, 20, 15, 1.5) {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn outputs_stay_in_range(kind_ix in 0usize..4, t in 0.0f64..1.0, seed in any::<u64>()) {
            let kind = DistortionKind::ALL[kind_ix];
            let level = match kind {
                DistortionKind::Rain | DistortionKind::Snow => t * 100.0,
                DistortionKind::Noise => t * 0.4,
                DistortionKind::Darkness => 0.05 + t * 0.95,
            };
            let img = gradient(24, 31);
            let out = apply(&img, &DistortionConfig::new(kind, level, seed).unwrap()).unwrap();
            prop_assert!(out.same_shape(&img));
            prop_assert!(out.min_value() >= 0.0 && out.max_value() <= 1.0);
        }

        #[test]
        fn darkness_composes(f1 in 0.05f64..=1.0, f2 in 0.05f64..=1.0) {
            let img = gradient(16, 16);
            let a = apply_darkness(&apply_darkness(&img, f1).unwrap(), f2).unwrap();
            let b = apply_darkness(&img, f1 * f2).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-7);
            }
        }
    }
}
