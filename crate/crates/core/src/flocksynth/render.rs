use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::formation::{place_formation_with, FormationGeometry, FormationKind, Point};
use super::sprite::Sprite;
use crate::error::{Error, Result};
use crate::raster::{resize, Image, SeededRng};

pub const DEFAULT_SKY: [f64; 3] = [0.42, 0.65, 0.87];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerticalAlignment {
    Ascending,
    Descending,
    Level,
}

impl VerticalAlignment {
    pub const ALL: [VerticalAlignment; 3] = [
        VerticalAlignment::Ascending,
        VerticalAlignment::Descending,
        VerticalAlignment::Level,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerticalAlignment::Ascending => "Ascending",
            VerticalAlignment::Descending => "Descending",
            VerticalAlignment::Level => "Level",
        }
    }
}

impl fmt::Display for VerticalAlignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerticalAlignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VerticalAlignment::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown vertical alignment '{s}'")))
    }
}

/// Canvas size and background colour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub sky: [f64; 3],
}

impl Scene {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            sky: DEFAULT_SKY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlockSpec {
    pub kind: FormationKind,
    pub count: usize,
    /// Nominal inter-bird distance, pixels.
    pub spacing: f64,
    /// Standard deviation of per-bird positional noise, pixels.
    pub jitter: f64,
    /// Direction of travel, degrees clockwise from the top edge.
    pub heading: f64,
    pub sprite_scale: f64,
    pub seed: u64,
}

impl FlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::invalid(format!(
                "flock needs at least 2 birds, got {}",
                self.count
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::invalid(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::invalid(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        if !(0.0..360.0).contains(&self.heading) {
            return Err(Error::invalid(format!("heading {} outside [0, 360)", self.heading)));
        }
        if !(self.sprite_scale > 0.0) {
            return Err(Error::invalid("sprite scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideViewSpec {
    pub alignment: VerticalAlignment,
    pub count: usize,
    pub spacing: f64,
    /// Altitude change between consecutive birds, pixels. Ignored for Level.
    pub slope: f64,
    /// Noise along the travel axis only, so the altitude ordering is exact.
    pub jitter: f64,
    pub sprite_scale: f64,
    pub seed: u64,
}

/// A rendered flock with its label and the exact sprite centres
/// `(row, col)` in canvas pixels.
#[derive(Clone, Debug)]
pub struct RenderedFlock<L> {
    pub image: Image,
    pub label: L,
    pub centers: Vec<(f64, f64)>,
}

/// Gaussian draw truncated at three standard deviations (by rejection).
pub(crate) fn truncated_normal(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 3.0 * sigma {
            return v;
        }
    }
}

impl Sprite {
    pub fn scaled(&self, ratio: f64) -> Result<Sprite> {
        if ratio == 1.0 {
            return Ok(self.clone());
        }
        let h = ((self.height() as f64 * ratio).round() as usize).max(1);
        let w = ((self.width() as f64 * ratio).round() as usize).max(1);
        let rgb = resize(self.rgb(), h, w)?;
        let alpha_img = Image::new(self.height(), self.width(), 1, self.alpha().to_vec())?;
        let alpha = resize(&alpha_img, h, w)?.into_data();
        Sprite::new(rgb, alpha)
    }
}

pub fn render_bottom_view(spec: &FlockSpec, sprite: &Sprite, scene: &Scene) -> Result<RenderedFlock<FormationKind>> {
    render_bottom_view_with(spec, sprite, scene, &FormationGeometry::default())
}

/// Composites `spec.count` sprites at jittered formation positions rotated
/// by the heading onto a sky-coloured canvas.
pub fn render_bottom_view_with(
    spec: &FlockSpec,
    sprite: &Sprite,
    scene: &Scene,
    geom: &FormationGeometry,
) -> Result<RenderedFlock<FormationKind>> {
    spec.validate()?;
    let local = place_formation_with(spec.kind, spec.count, spec.spacing, geom)?;
    let (sin, cos) = spec.heading.to_radians().sin_cos();
    // (row, col) offsets: rotate clockwise by the heading, with "ahead" pointing up.
    let offsets: Vec<(f64, f64)> = local
        .iter()
        .map(|&Point { x, y }| {
            let col = x * cos + y * sin;
            let up = -x * sin + y * cos;
            (-up, col)
        })
        .collect();
    let sprite = sprite.scaled(spec.sprite_scale)?.rotated(spec.heading);
    let mut rng = SeededRng::new(spec.seed).rng();
    let centers = center_and_jitter(&offsets, scene, |_| {
        (
            truncated_normal(&mut rng, spec.jitter),
            truncated_normal(&mut rng, spec.jitter),
        )
    });
    let image = composite(&centers, &sprite, scene)?;
    Ok(RenderedFlock {
        image,
        label: spec.kind,
        centers,
    })
}

/// Column flock in profile, flying right, with strictly rising, falling, or
/// constant altitude along the travel axis.
pub fn render_side_view(
    spec: &SideViewSpec,
    sprite: &Sprite,
    scene: &Scene,
) -> Result<RenderedFlock<VerticalAlignment>> {
    if spec.count < 2 {
        return Err(Error::invalid(format!(
            "flock needs at least 2 birds, got {}",
            spec.count
        )));
    }
    if !(spec.spacing > 0.0) || !(spec.jitter >= 0.0) || !(spec.sprite_scale > 0.0) {
        return Err(Error::invalid(
            "spacing and sprite scale must be positive, jitter non-negative",
        ));
    }
    // Jitter moves birds along the axis; bound it so the order cannot flip.
    if 6.0 * spec.jitter >= spec.spacing {
        return Err(Error::invalid("side-view jitter must be below spacing / 6"));
    }
    let climb = match spec.alignment {
        VerticalAlignment::Level => 0.0,
        _ if !(spec.slope > 0.0) => {
            return Err(Error::invalid(format!(
                "{} flocks need a positive slope, got {}",
                spec.alignment, spec.slope
            )))
        }
        VerticalAlignment::Ascending => spec.slope,
        VerticalAlignment::Descending => -spec.slope,
    };
    // bird 0 leads (rightmost)
    let offsets: Vec<(f64, f64)> = (0..spec.count)
        .map(|i| {
            let along = -(i as f64) * spec.spacing;
            let altitude = -(i as f64) * climb;
            (-altitude, along)
        })
        .collect();
    let sprite = sprite.scaled(spec.sprite_scale)?;
    let mut rng = SeededRng::new(spec.seed).rng();
    let centers = center_and_jitter(&offsets, scene, |_| (0.0, truncated_normal(&mut rng, spec.jitter)));
    let image = composite(&centers, &sprite, scene)?;
    Ok(RenderedFlock {
        image,
        label: spec.alignment,
        centers,
    })
}

/// Centres the noise-free bounding box on the canvas, then adds jitter.
fn center_and_jitter(
    offsets: &[(f64, f64)],
    scene: &Scene,
    mut jitter: impl FnMut(usize) -> (f64, f64),
) -> Vec<(f64, f64)> {
    let (rmin, rmax) = min_max(offsets.iter().map(|o| o.0));
    let (cmin, cmax) = min_max(offsets.iter().map(|o| o.1));
    let r0 = (scene.height as f64 - 1.0) / 2.0 - (rmin + rmax) / 2.0;
    let c0 = (scene.width as f64 - 1.0) / 2.0 - (cmin + cmax) / 2.0;
    offsets
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| {
            let (jr, jc) = jitter(i);
            (r0 + r + jr, c0 + c + jc)
        })
        .collect()
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn top_left(center: f64, extent: usize) -> f64 {
    (center - (extent as f64 - 1.0) / 2.0).round()
}

fn composite(centers: &[(f64, f64)], sprite: &Sprite, scene: &Scene) -> Result<Image> {
    let (sh, sw) = (sprite.height(), sprite.width());
    let (rmin, rmax) = min_max(centers.iter().map(|c| top_left(c.0, sh)));
    let (cmin, cmax) = min_max(centers.iter().map(|c| top_left(c.1, sw)));
    if rmin < 0.0 || cmin < 0.0 || rmax + sh as f64 > scene.height as f64 || cmax + sw as f64 > scene.width as f64 {
        return Err(Error::CanvasTooSmall {
            need_h: (rmax - rmin) as usize + sh,
            need_w: (cmax - cmin) as usize + sw,
            have_h: scene.height,
            have_w: scene.width,
        });
    }
    let mut canvas = Image::filled(scene.height, scene.width, &scene.sky).into_data();
    let alpha = sprite.alpha();
    let rgb = sprite.rgb().data();
    for &(cr, cc) in centers {
        let top = top_left(cr, sh) as usize;
        let left = top_left(cc, sw) as usize;
        for y in 0..sh {
            for x in 0..sw {
                let a = alpha[y * sw + x];
                if a == 0.0 {
                    continue;
                }
                let dst = ((top + y) * scene.width + left + x) * 3;
                let src = (y * sw + x) * 3;
                for c in 0..3 {
                    canvas[dst + c] = (a * rgb[src + c] + (1.0 - a) * canvas[dst + c]).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(Image::from_parts(scene.height, scene.width, 3, canvas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flocksynth::sprite::{BIRD_BODY, BIRD_WING};

    fn bird() -> Sprite {
        Sprite::bottom_view(9, BIRD_BODY, BIRD_WING)
    }

    fn spec(kind: FormationKind, count: usize, spacing: f64, jitter: f64) -> FlockSpec {
        FlockSpec {
            kind,
            count,
            spacing,
            jitter,
            heading: 0.0,
            sprite_scale: 1.0,
            seed: 11,
        }
    }

    /// 8-connected components of non-sky pixels.
    fn components(img: &Image, sky: [f64; 3]) -> usize {
        let (h, w) = (img.height(), img.width());
        let fg: Vec<bool> = (0..h * w).map(|i| img.pixel(i / w, i % w) != sky.as_slice()).collect();
        let mut seen = vec![false; h * w];
        let mut n = 0;
        for s in 0..h * w {
            if !fg[s] || seen[s] {
                continue;
            }
            n += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                let (y, x) = ((i / w) as i64, (i % w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (y + dy, x + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if fg[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn sprite_count_matches_connected_components() {
        let scene = Scene::new(200, 200);
        let sprite = bird();
        let spacing = sprite.diameter() + 3.0;
        for kind in [
            FormationKind::Column,
            FormationKind::Front,
            FormationKind::Echelon,
            FormationKind::V,
            FormationKind::InvertedJ,
            FormationKind::ClosedLine,
        ] {
            for n in [2, 5, 8] {
                let mut s = spec(kind, n, spacing, 0.0);
                s.heading = 30.0;
                let out = render_bottom_view(&s, &sprite, &scene).unwrap();
                assert_eq!(out.label, kind);
                assert_eq!(components(&out.image, scene.sky), n, "{kind} x{n}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = Scene::new(96, 96);
        let s = spec(FormationKind::GlobularCluster, 12, 6.0, 1.5);
        let a = render_bottom_view(&s, &bird(), &scene).unwrap();
        let b = render_bottom_view(&s, &bird(), &scene).unwrap();
        assert!(a.image.bitwise_eq(&b.image));
        let mut other = s;
        other.seed += 1;
        let c = render_bottom_view(&other, &bird(), &scene).unwrap();
        assert!(!a.image.bitwise_eq(&c.image));
    }

    #[test]
    fn background_is_exact_sky() {
        let scene = Scene::new(64, 64);
        let sprite = bird();
        let out = render_bottom_view(&spec(FormationKind::V, 5, 12.0, 0.0), &sprite, &scene).unwrap();
        // pixels outside every sprite footprint are untouched
        let (sh, sw) = (sprite.height() as f64, sprite.width() as f64);
        let mut bg = 0;
        for y in 0..64 {
            for x in 0..64 {
                let covered = out
                    .centers
                    .iter()
                    .any(|&(r, c)| (y as f64 - r).abs() <= sh / 2.0 + 1.0 && (x as f64 - c).abs() <= sw / 2.0 + 1.0);
                if !covered {
                    bg += 1;
                    assert_eq!(out.image.pixel(y, x), DEFAULT_SKY.as_slice());
                }
            }
        }
        assert!(bg > 0);
    }

    #[test]
    fn overflow_reports_required_bounds() {
        let scene = Scene::new(40, 40);
        let err = render_bottom_view(&spec(FormationKind::Column, 10, 20.0, 0.0), &bird(), &scene).unwrap_err();
        match err {
            Error::CanvasTooSmall { need_h, have_h, .. } => {
                assert!(need_h >= 180 + 9, "need_h {need_h}");
                assert_eq!(have_h, 40);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invalid_specs() {
        let scene = Scene::new(64, 64);
        let mut s = spec(FormationKind::V, 5, 10.0, 0.0);
        s.heading = 360.0;
        assert!(render_bottom_view(&s, &bird(), &scene).is_err());
        s.heading = 0.0;
        s.jitter = -1.0;
        assert!(render_bottom_view(&s, &bird(), &scene).is_err());
    }

    fn side(alignment: VerticalAlignment, count: usize) -> SideViewSpec {
        SideViewSpec {
            alignment,
            count,
            spacing: 14.0,
            slope: 4.0,
            jitter: 1.0,
            sprite_scale: 1.0,
            seed: 5,
        }
    }

    #[test]
    fn side_view_altitudes() {
        let scene = Scene::new(96, 128);
        let sprite = Sprite::side_view(10, BIRD_BODY, BIRD_WING);
        let level = render_side_view(&side(VerticalAlignment::Level, 6), &sprite, &scene).unwrap();
        assert!(level.centers.iter().all(|c| c.0 == level.centers[0].0));

        let asc = render_side_view(&side(VerticalAlignment::Ascending, 5), &sprite, &scene).unwrap();
        let mut by_x = asc.centers.clone();
        by_x.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        // altitude grows as the row index shrinks
        for w in by_x.windows(2) {
            assert!(w[1].0 < w[0].0);
        }
    }

    #[test]
    fn descending_mirrors_ascending() {
        let scene = Scene::new(80, 128);
        let sprite = Sprite::side_view(10, BIRD_BODY, BIRD_WING);
        for k in [2, 5, 7] {
            let a = render_side_view(&side(VerticalAlignment::Ascending, k), &sprite, &scene).unwrap();
            let d = render_side_view(&side(VerticalAlignment::Descending, k), &sprite, &scene).unwrap();
            for (pa, pd) in a.centers.iter().zip(&d.centers) {
                assert!((pa.0 + pd.0 - 79.0).abs() < 1e-9);
                assert_eq!(pa.1, pd.1);
            }
        }
    }

    #[test]
    fn side_view_needs_slope() {
        let scene = Scene::new(80, 128);
        let sprite = Sprite::side_view(10, BIRD_BODY, BIRD_WING);
        let mut s = side(VerticalAlignment::Ascending, 4);
        s.slope = 0.0;
        assert!(render_side_view(&s, &sprite, &scene).is_err());
        s.alignment = VerticalAlignment::Level;
        assert!(render_side_view(&s, &sprite, &scene).is_ok());
    }
}
