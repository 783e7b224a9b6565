//! Labelled corpus generation and the on-disk manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formation::{place_formation_with, FormationGeometry, FormationKind};
use super::render::{
    render_bottom_view_with, render_side_view, FlockSpec, Scene, SideViewSpec, VerticalAlignment, DEFAULT_SKY,
};
use super::sprite::{Sprite, BIRD_BODY, BIRD_WING};
use super::{bin_flock_size, FlockSizeBin};
use crate::error::{Error, Result};
use crate::raster::{load_png, resize, save_png, Image, SeededRng};
use crate::taxonomy::{builtin_species, species_labels, SizeClass, SpeciesRecord};

/// Label of the non-bird class in species corpora.
pub const AIRCRAFT: &str = "Aircraft";

const SPLIT_STREAM: u64 = 0x5917;
const SAMPLE_STREAM: u64 = 0x5a3e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusTask {
    /// Bottom-view images of the twelve formations.
    Formations,
    /// Side-view Column flocks labelled by vertical alignment.
    Alignments,
    /// Bottom-view flocks labelled by size bin.
    FlockSize,
    /// Single birds of each species plus aircraft, with cascade stage truth.
    Species,
}

impl FromStr for CorpusTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "formations" => Ok(CorpusTask::Formations),
            "alignments" => Ok(CorpusTask::Alignments),
            "flock_size" | "flocksize" => Ok(CorpusTask::FlockSize),
            "species" | "cascade" | "unified" => Ok(CorpusTask::Species),
            other => Err(Error::Parse(format!("unknown corpus task '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coarse {
    Bird,
    Aircraft,
}

impl Coarse {
    pub fn as_str(self) -> &'static str {
        match self {
            Coarse::Bird => "Bird",
            Coarse::Aircraft => AIRCRAFT,
        }
    }
}

/// Every label a sample may carry. The first five fields are always written
/// to the manifest (null when absent); the cascade stage truth only when set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleLabels {
    pub formation: Option<FormationKind>,
    pub alignment: Option<VerticalAlignment>,
    pub count: Option<usize>,
    pub size_bin: Option<FlockSizeBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<Coarse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<SizeClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
}

/// Which label of a sample a classifier is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Formation,
    Alignment,
    SizeBin,
    Coarse,
    Size,
    Species,
    /// Species for birds, `Aircraft` otherwise.
    Unified,
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "formation" | "formations" => Ok(LabelKind::Formation),
            "alignment" | "alignments" => Ok(LabelKind::Alignment),
            "size_bin" | "flock_size" => Ok(LabelKind::SizeBin),
            "coarse" => Ok(LabelKind::Coarse),
            "size" => Ok(LabelKind::Size),
            "species" => Ok(LabelKind::Species),
            "unified" => Ok(LabelKind::Unified),
            other => Err(Error::Parse(format!("unknown label kind '{other}'"))),
        }
    }
}

impl LabelKind {
    pub fn of(self, labels: &SampleLabels) -> Option<String> {
        match self {
            LabelKind::Formation => labels.formation.map(|f| f.to_string()),
            LabelKind::Alignment => labels.alignment.map(|a| a.to_string()),
            LabelKind::SizeBin => labels.size_bin.map(|b| b.to_string()),
            LabelKind::Coarse => labels.coarse.map(|c| c.as_str().to_string()),
            LabelKind::Size => labels.size.map(|s| s.to_string()),
            LabelKind::Species => labels.species.clone(),
            LabelKind::Unified => match labels.coarse {
                Some(Coarse::Aircraft) => Some(AIRCRAFT.to_string()),
                _ => labels.species.clone(),
            },
        }
    }

    /// Full ordered class list of this label.
    pub fn classes(self) -> Vec<String> {
        match self {
            LabelKind::Formation => FormationKind::ALL.iter().map(|k| k.to_string()).collect(),
            LabelKind::Alignment => VerticalAlignment::ALL.iter().map(|a| a.to_string()).collect(),
            LabelKind::SizeBin => FlockSizeBin::ALL.iter().map(|b| b.to_string()).collect(),
            LabelKind::Coarse => vec!["Bird".into(), AIRCRAFT.into()],
            LabelKind::Size => SizeClass::ALL.iter().map(|s| s.to_string()).collect(),
            LabelKind::Species => species_classes(),
            LabelKind::Unified => {
                let mut all = species_classes();
                all.push(AIRCRAFT.into());
                all
            }
        }
    }
}

fn species_classes() -> Vec<String> {
    let table = builtin_species();
    SizeClass::ALL.iter().flat_map(|&c| species_labels(&table, c)).collect()
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub index: usize,
    pub image: Image,
    pub labels: SampleLabels,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub task: CorpusTask,
    pub per_class: usize,
    pub seed: u64,
    /// Side of the square render canvas, pixels.
    pub canvas: usize,
    /// Side of the stored image; renders are resampled to this size.
    pub image_size: usize,
    /// Birds per flock for formation and alignment corpora (inclusive).
    pub count_range: (usize, usize),
    /// Spacing range before fitting to the canvas, pixels.
    pub spacing_range: (f64, f64),
    /// Positional noise as a fraction of spacing.
    pub jitter_ratio: f64,
    /// Headings are drawn uniformly within this many degrees of due "up".
    pub heading_spread_deg: f64,
    /// Sprite wingspan, pixels.
    pub sprite_px: usize,
    pub sprite_scale_range: (f64, f64),
    /// Altitude step between side-view birds, pixels.
    pub slope_range: (f64, f64),
    pub sky: [f64; 3],
    pub geometry: FormationGeometry,
    /// Custom sprite (PNG with alpha); procedural silhouette when absent.
    pub sprite_path: Option<PathBuf>,
    /// Formations used by the flock-size corpus.
    pub size_kinds: Vec<FormationKind>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self::for_task(CorpusTask::Formations)
    }
}

impl CorpusConfig {
    pub fn for_task(task: CorpusTask) -> Self {
        let base = Self {
            task,
            per_class: 120,
            seed: 0,
            canvas: 128,
            image_size: 64,
            count_range: (7, 12),
            spacing_range: (11.0, 16.0),
            jitter_ratio: 0.15,
            heading_spread_deg: 10.0,
            sprite_px: 9,
            sprite_scale_range: (0.9, 1.1),
            slope_range: (3.0, 6.0),
            sky: DEFAULT_SKY,
            geometry: FormationGeometry::default(),
            sprite_path: None,
            size_kinds: vec![
                FormationKind::GlobularCluster,
                FormationKind::FrontCluster,
                FormationKind::ExtendedCluster,
            ],
        };
        match task {
            CorpusTask::Formations => base,
            CorpusTask::Alignments => Self {
                count_range: (4, 8),
                spacing_range: (11.0, 14.0),
                jitter_ratio: 0.05,
                sprite_px: 12,
                ..base
            },
            CorpusTask::FlockSize => Self {
                image_size: 96,
                spacing_range: (5.0, 7.0),
                sprite_px: 7,
                ..base
            },
            CorpusTask::Species => Self {
                canvas: 48,
                image_size: 48,
                heading_spread_deg: 180.0,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation(m));
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        if self.image_size < 8 || self.canvas < 8 {
            return bad(format!(
                "canvas ({}) and image_size ({}) must be at least 8",
                self.canvas, self.image_size
            ));
        }
        let (lo, hi) = self.count_range;
        if lo < 2 || lo > hi {
            return bad(format!("count_range {lo}..{hi} must satisfy 2 <= min <= max"));
        }
        let (s0, s1) = self.spacing_range;
        if !(s0 > 0.0 && s0 <= s1) {
            return bad(format!("spacing_range {s0}..{s1} must be positive and ordered"));
        }
        let (a0, a1) = self.sprite_scale_range;
        if !(a0 > 0.0 && a0 <= a1) {
            return bad(format!("sprite_scale_range {a0}..{a1} must be positive and ordered"));
        }
        let (p0, p1) = self.slope_range;
        if !(p0 > 0.0 && p0 <= p1) {
            return bad(format!("slope_range {p0}..{p1} must be positive and ordered"));
        }
        if !(self.jitter_ratio >= 0.0) {
            return bad("jitter_ratio must be non-negative".into());
        }
        if self.task == CorpusTask::Alignments && self.jitter_ratio * 6.0 >= 1.0 {
            return bad("side-view jitter_ratio must be below 1/6".into());
        }
        if !(0.0..=180.0).contains(&self.heading_spread_deg) {
            return bad("heading_spread_deg must lie in [0, 180]".into());
        }
        if self.sprite_px < 3 {
            return bad("sprite_px must be at least 3".into());
        }
        if self.task == CorpusTask::FlockSize && self.size_kinds.is_empty() {
            return bad("size_kinds must not be empty".into());
        }
        if self.sky.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("sky colour outside [0, 1]".into());
        }
        Ok(())
    }

    /// Ordered class names of the corpus's primary label.
    pub fn classes(&self) -> Vec<String> {
        self.primary_label().classes()
    }

    pub fn primary_label(&self) -> LabelKind {
        match self.task {
            CorpusTask::Formations => LabelKind::Formation,
            CorpusTask::Alignments => LabelKind::Alignment,
            CorpusTask::FlockSize => LabelKind::SizeBin,
            CorpusTask::Species => LabelKind::Unified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(flatten)]
    pub labels: SampleLabels,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub images: Vec<ManifestEntry>,
    pub seed: u64,
    pub config: CorpusConfig,
}

/// Generates the corpus in memory. Sample `i` of class `c` draws only from
/// the stream derived from (seed, global index), so the output does not
/// depend on scheduling.
pub fn generate_samples(config: &CorpusConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let classes = config.classes();
    let base_bird = match &config.sprite_path {
        Some(p) => Some(Sprite::from_png(p)?),
        None => None,
    };
    let ctx = Context {
        config,
        species: builtin_species(),
        custom_sprite: base_bird,
    };
    let n = classes.len() * config.per_class;
    let splits = assign_splits(config, classes.len());
    (0..n)
        .into_par_iter()
        .map(|index| {
            let class = index / config.per_class;
            let rng = SeededRng::new(config.seed).derive(SAMPLE_STREAM).derive(index as u64);
            let (image, labels) = ctx.render(&classes[class], rng)?;
            let image = resize(&image, config.image_size, config.image_size)?;
            Ok(Sample {
                index,
                image,
                labels,
                split: splits[index],
            })
        })
        .collect()
}

/// Per-class seeded 80/10/10 split.
fn assign_splits(config: &CorpusConfig, n_classes: usize) -> Vec<Split> {
    let per = config.per_class;
    let n_train = (per as f64 * 0.8).round() as usize;
    let n_val = ((per as f64 * 0.1).round() as usize).min(per - n_train);
    let mut out = vec![Split::Test; per * n_classes];
    for c in 0..n_classes {
        let mut order: Vec<usize> = (0..per).collect();
        let mut rng = SeededRng::new(config.seed).derive(SPLIT_STREAM).derive(c as u64).rng();
        order.shuffle(&mut rng);
        for (rank, &j) in order.iter().enumerate() {
            out[c * per + j] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    out
}

struct Context<'a> {
    config: &'a CorpusConfig,
    species: Vec<SpeciesRecord>,
    custom_sprite: Option<Sprite>,
}

impl Context<'_> {
    fn render(&self, class: &str, seeded: SeededRng) -> Result<(Image, SampleLabels)> {
        let cfg = self.config;
        let mut rng = seeded.rng();
        let scene = Scene {
            height: cfg.canvas,
            width: cfg.canvas,
            sky: cfg.sky,
        };
        match cfg.task {
            CorpusTask::Formations => {
                let kind: FormationKind = class.parse()?;
                let count = rng.random_range(cfg.count_range.0..=cfg.count_range.1);
                let out = self.render_flock(kind, count, &scene, &mut rng)?;
                Ok((
                    out,
                    SampleLabels {
                        formation: Some(kind),
                        count: Some(count),
                        ..Default::default()
                    },
                ))
            }
            CorpusTask::FlockSize => {
                let bin: FlockSizeBin = class.parse()?;
                let (lo, hi) = bin.range();
                let count = rng.random_range(lo..=hi);
                let kind = cfg.size_kinds[rng.random_range(0..cfg.size_kinds.len())];
                let out = self.render_flock(kind, count, &scene, &mut rng)?;
                Ok((
                    out,
                    SampleLabels {
                        formation: Some(kind),
                        count: Some(count),
                        size_bin: Some(bin_flock_size(count)?),
                        ..Default::default()
                    },
                ))
            }
            CorpusTask::Alignments => {
                let alignment: VerticalAlignment = class.parse()?;
                let count = rng.random_range(cfg.count_range.0..=cfg.count_range.1);
                let scale = rng.random_range(cfg.sprite_scale_range.0..=cfg.sprite_scale_range.1);
                let sprite = match &self.custom_sprite {
                    Some(s) => s.clone(),
                    None => Sprite::side_view(cfg.sprite_px, BIRD_BODY, BIRD_WING),
                };
                let slope = rng.random_range(cfg.slope_range.0..=cfg.slope_range.1);
                let mut spacing = rng.random_range(cfg.spacing_range.0..=cfg.spacing_range.1);
                // fit horizontally and vertically
                let sw = sprite.width() as f64 * scale + 2.0;
                let sh = sprite.height() as f64 * scale + 2.0;
                let steps = (count - 1) as f64;
                let max_spacing = (cfg.canvas as f64 - sw) / (steps * (1.0 + 6.0 * cfg.jitter_ratio));
                spacing = spacing.min(max_spacing);
                let slope = slope.min((cfg.canvas as f64 - sh) / steps);
                let spec = SideViewSpec {
                    alignment,
                    count,
                    spacing,
                    slope,
                    jitter: cfg.jitter_ratio * spacing,
                    sprite_scale: scale,
                    seed: rng.random(),
                };
                let out = render_side_view(&spec, &sprite, &scene)?;
                Ok((
                    out.image,
                    SampleLabels {
                        formation: Some(FormationKind::Column),
                        alignment: Some(alignment),
                        count: Some(count),
                        ..Default::default()
                    },
                ))
            }
            CorpusTask::Species => self.render_species(class, &scene, &mut rng),
        }
    }

    fn render_flock(&self, kind: FormationKind, count: usize, scene: &Scene, rng: &mut impl Rng) -> Result<Image> {
        let cfg = self.config;
        let scale = rng.random_range(cfg.sprite_scale_range.0..=cfg.sprite_scale_range.1);
        let spread = cfg.heading_spread_deg;
        let heading = if spread > 0.0 {
            rng.random_range(-spread..=spread).rem_euclid(360.0)
        } else {
            0.0
        };
        let heading = if heading >= 360.0 { 0.0 } else { heading };
        let sprite = match &self.custom_sprite {
            Some(s) => s.clone(),
            None => Sprite::bottom_view(cfg.sprite_px, BIRD_BODY, BIRD_WING),
        };
        let spacing = rng.random_range(cfg.spacing_range.0..=cfg.spacing_range.1);
        let spacing = spacing.min(fit_spacing(kind, count, heading, &sprite, scale, cfg)?);
        let spec = FlockSpec {
            kind,
            count,
            spacing,
            jitter: cfg.jitter_ratio * spacing,
            heading,
            sprite_scale: scale,
            seed: rng.random(),
        };
        Ok(render_bottom_view_with(&spec, &sprite, scene, &cfg.geometry)?.image)
    }

    fn render_species(&self, class: &str, scene: &Scene, rng: &mut impl Rng) -> Result<(Image, SampleLabels)> {
        let cfg = self.config;
        let (sprite, labels) = if class == AIRCRAFT {
            let size = (cfg.canvas as f64 * 0.55).round() as usize;
            let grey = rng.random_range(0.6..0.9);
            (
                Sprite::aircraft(size, [grey, grey, grey + 0.05]),
                SampleLabels {
                    coarse: Some(Coarse::Aircraft),
                    ..Default::default()
                },
            )
        } else {
            let rec = self
                .species
                .iter()
                .find(|r| r.name == class)
                .ok_or_else(|| Error::validation(format!("unknown species '{class}'")))?;
            let (body, wing) = species_colors(&rec.name);
            let mean_w = (rec.weight_min * rec.weight_max).sqrt();
            let size = (cfg.canvas as f64 * (0.15 + 0.055 * mean_w.log10())).round() as usize;
            (
                Sprite::bottom_view(size.max(5), body, wing),
                SampleLabels {
                    coarse: Some(Coarse::Bird),
                    size: Some(rec.assigned_class),
                    species: Some(rec.name.clone()),
                    ..Default::default()
                },
            )
        };
        let scale = rng.random_range(cfg.sprite_scale_range.0..=cfg.sprite_scale_range.1);
        let heading = rng.random_range(0.0..360.0);
        let sprite = sprite.scaled(scale)?.rotated(heading);
        let tint: f64 = rng.random_range(-0.06..0.06);
        let sky = scene.sky.map(|c| (c + tint).clamp(0.0, 1.0));
        let (sh, sw) = (sprite.height(), sprite.width());
        if sh > scene.height || sw > scene.width {
            return Err(Error::CanvasTooSmall {
                need_h: sh,
                need_w: sw,
                have_h: scene.height,
                have_w: scene.width,
            });
        }
        let top = rng.random_range(0..=scene.height - sh);
        let left = rng.random_range(0..=scene.width - sw);
        let mut canvas = Image::filled(scene.height, scene.width, &sky).into_data();
        for y in 0..sh {
            for x in 0..sw {
                let a = sprite.alpha()[y * sw + x];
                if a == 0.0 {
                    continue;
                }
                let d = ((top + y) * scene.width + left + x) * 3;
                let px = sprite.rgb().pixel(y, x);
                for c in 0..3 {
                    canvas[d + c] = a * px[c] + (1.0 - a) * canvas[d + c];
                }
            }
        }
        Ok((Image::new(scene.height, scene.width, 3, canvas)?, labels))
    }
}

/// Species plumage colours derived from the name, stable across runs.
fn species_colors(name: &str) -> ([f64; 3], [f64; 3]) {
    use sha2::{Digest, Sha256};
    let h = Sha256::digest(name.as_bytes());
    let f = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * h[i] as f64 / 255.0;
    let body = [f(0, 0.05, 0.75), f(1, 0.05, 0.7), f(2, 0.05, 0.65)];
    let wing = [f(3, 0.05, 0.85), f(4, 0.05, 0.8), f(5, 0.05, 0.75)];
    (body, wing)
}

/// Largest spacing at which the flock, with worst-case jitter, fits the canvas.
fn fit_spacing(
    kind: FormationKind,
    count: usize,
    heading: f64,
    sprite: &Sprite,
    scale: f64,
    cfg: &CorpusConfig,
) -> Result<f64> {
    let unit = place_formation_with(kind, count, 1.0, &cfg.geometry)?;
    let (sin, cos) = heading.to_radians().sin_cos();
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in &unit {
        let col = p.x * cos + p.y * sin;
        let row = -(-p.x * sin + p.y * cos);
        rmin = rmin.min(row);
        rmax = rmax.max(row);
        cmin = cmin.min(col);
        cmax = cmax.max(col);
    }
    let extent = (rmax - rmin).max(cmax - cmin) + 6.0 * cfg.jitter_ratio;
    let side = (sprite.height().max(sprite.width()) as f64 * scale) * std::f64::consts::SQRT_2 + 3.0;
    Ok(((cfg.canvas as f64 - side) / extent).max(0.5))
}

/// Renders the corpus, writes PNGs under `out_dir/images/` and returns the
/// manifest (also written as `out_dir/manifest.json`).
pub fn generate_corpus(config: &CorpusConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let samples = generate_samples(config)?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let label = config.primary_label();
    let images = samples
        .par_iter()
        .map(|s| {
            let class = label.of(&s.labels).unwrap_or_default();
            let rel = format!("images/{:05}_{}.png", s.index, slug(&class));
            save_png(&s.image, out_dir.join(&rel))?;
            Ok(ManifestEntry {
                path: rel,
                labels: s.labels.clone(),
                split: s.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        images,
        seed: config.seed,
        config: config.clone(),
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

/// Reads a manifest and every image it lists (paths relative to the manifest).
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<(Manifest, Vec<Sample>)> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .images
        .par_iter()
        .enumerate()
        .map(|(index, e)| {
            Ok(Sample {
                index,
                image: load_png(root.join(&e.path))?.to_rgb(),
                labels: e.labels.clone(),
                split: e.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Per-class split counts, for reporting.
pub fn split_counts(samples: &[Sample], label: LabelKind) -> BTreeMap<String, [usize; 3]> {
    let mut out = BTreeMap::new();
    for s in samples {
        let e = out
            .entry(label.of(&s.labels).unwrap_or_default())
            .or_insert([0usize; 3]);
        e[s.split as usize] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: CorpusTask, per_class: usize) -> CorpusConfig {
        CorpusConfig {
            per_class,
            seed: 7,
            ..CorpusConfig::for_task(task)
        }
    }

    #[test]
    fn split_arithmetic() {
        let cfg = small(CorpusTask::Formations, 120);
        let splits = assign_splits(&cfg, 12);
        assert_eq!(splits.len(), 1440);
        for c in 0..12 {
            let chunk = &splits[c * 120..(c + 1) * 120];
            let count = |s| chunk.iter().filter(|&&x| x == s).count();
            assert_eq!(
                (count(Split::Train), count(Split::Val), count(Split::Test)),
                (96, 12, 12)
            );
        }
    }

    #[test]
    fn labels_are_correct_by_construction() {
        for task in [CorpusTask::Formations, CorpusTask::Alignments, CorpusTask::FlockSize] {
            let cfg = small(task, 3);
            let samples = generate_samples(&cfg).unwrap();
            let classes = cfg.classes();
            assert_eq!(samples.len(), classes.len() * 3);
            for s in &samples {
                let label = cfg.primary_label().of(&s.labels).unwrap();
                assert_eq!(label, classes[s.index / 3]);
                assert_eq!(s.image.height(), cfg.image_size);
                if task == CorpusTask::FlockSize {
                    assert_eq!(
                        s.labels.size_bin,
                        Some(bin_flock_size(s.labels.count.unwrap()).unwrap())
                    );
                }
            }
        }
    }

    #[test]
    fn species_corpus_carries_stage_truth() {
        let cfg = small(CorpusTask::Species, 2);
        let samples = generate_samples(&cfg).unwrap();
        assert_eq!(samples.len(), 25 * 2);
        for s in &samples {
            match s.labels.coarse.unwrap() {
                Coarse::Bird => {
                    assert!(s.labels.size.is_some() && s.labels.species.is_some());
                }
                Coarse::Aircraft => assert!(s.labels.species.is_none()),
            }
        }
    }

    #[test]
    fn split_counts_per_class() {
        let cfg = small(CorpusTask::Alignments, 10);
        let samples = generate_samples(&cfg).unwrap();
        let counts = split_counts(&samples, LabelKind::Alignment);
        assert_eq!(counts.len(), 3);
        assert!(counts.values().all(|c| *c == [8, 1, 1]));
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = small(CorpusTask::Formations, 0);
        assert!(matches!(generate_samples(&cfg), Err(Error::Validation(_))));
        cfg.per_class = 2;
        cfg.count_range = (9, 3);
        assert!(generate_samples(&cfg).is_err());
    }

    #[test]
    fn manifest_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(CorpusTask::Alignments, 2);
        let manifest = generate_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.images.len(), 6);
        let (back, samples) = load_corpus(dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(samples.len(), 6);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        let row = &json["images"][0];
        for key in ["path", "formation", "alignment", "count", "size_bin", "split"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
    }
}
