//! Flock formation geometry.
//!
//! Positions are in a flock-local frame: `x` is lateral offset (positive to
//! the right of the direction of travel) and `y` is offset along the travel
//! axis (positive ahead). Units are pixels.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormationKind {
    Column,
    Front,
    Echelon,
    J,
    V,
    InvertedJ,
    InvertedV,
    ClosedLine,
    BranchedV,
    GlobularCluster,
    FrontCluster,
    ExtendedCluster,
}

impl FormationKind {
    pub const ALL: [FormationKind; 12] = [
        FormationKind::Column,
        FormationKind::Front,
        FormationKind::Echelon,
        FormationKind::J,
        FormationKind::V,
        FormationKind::InvertedJ,
        FormationKind::InvertedV,
        FormationKind::ClosedLine,
        FormationKind::BranchedV,
        FormationKind::GlobularCluster,
        FormationKind::FrontCluster,
        FormationKind::ExtendedCluster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormationKind::Column => "Column",
            FormationKind::Front => "Front",
            FormationKind::Echelon => "Echelon",
            FormationKind::J => "J",
            FormationKind::V => "V",
            FormationKind::InvertedJ => "InvertedJ",
            FormationKind::InvertedV => "InvertedV",
            FormationKind::ClosedLine => "ClosedLine",
            FormationKind::BranchedV => "BranchedV",
            FormationKind::GlobularCluster => "GlobularCluster",
            FormationKind::FrontCluster => "FrontCluster",
            FormationKind::ExtendedCluster => "ExtendedCluster",
        }
    }

    pub fn is_cluster(self) -> bool {
        matches!(
            self,
            FormationKind::GlobularCluster | FormationKind::FrontCluster | FormationKind::ExtendedCluster
        )
    }
}

impl fmt::Display for FormationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        FormationKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Parse(format!("unknown formation '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Free parameters of the formation shapes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormationGeometry {
    /// Angle of V and J arms off the travel axis, degrees.
    pub arm_angle_deg: f64,
    /// Angle of the echelon line off the travel axis, degrees.
    pub echelon_angle_deg: f64,
    /// Short-arm to long-arm bird ratio of a J.
    pub j_short_ratio: f64,
    /// Extra angle of the branch arm beyond the main arm, degrees.
    pub branch_extra_angle_deg: f64,
    /// Share of non-apex birds placed on the branch of a branched V.
    pub branch_fraction: f64,
    /// Cluster standard deviation as a multiple of spacing.
    pub cluster_sigma: f64,
    /// Long-to-short standard deviation ratio of front/extended clusters.
    pub cluster_aspect: f64,
}

impl Default for FormationGeometry {
    fn default() -> Self {
        Self {
            arm_angle_deg: 35.0,
            echelon_angle_deg: 45.0,
            j_short_ratio: 0.3,
            branch_extra_angle_deg: 30.0,
            branch_fraction: 0.25,
            cluster_sigma: 1.5,
            cluster_aspect: 2.5,
        }
    }
}

/// Noise-free formation positions with the default geometry.
pub fn place_formation(kind: FormationKind, count: usize, spacing: f64) -> Result<Vec<Point>> {
    place_formation_with(kind, count, spacing, &FormationGeometry::default())
}

pub fn place_formation_with(
    kind: FormationKind,
    count: usize,
    spacing: f64,
    geom: &FormationGeometry,
) -> Result<Vec<Point>> {
    if count < 2 {
        return Err(Error::invalid(format!(
            "a formation needs at least 2 birds, got {count}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }
    let s = spacing;
    let arm = geom.arm_angle_deg.to_radians();
    let pts = match kind {
        FormationKind::Column => (0..count).map(|i| Point::new(0.0, -(i as f64) * s)).collect(),
        FormationKind::Front => {
            let mid = (count - 1) as f64 / 2.0;
            (0..count).map(|i| Point::new((i as f64 - mid) * s, 0.0)).collect()
        }
        FormationKind::Echelon => {
            let a = geom.echelon_angle_deg.to_radians();
            ray(Point::new(0.0, 0.0), a, s, 0.0, count)
        }
        FormationKind::V => v_shape(count, s, arm),
        FormationKind::InvertedV => flip_y(v_shape(count, s, arm)),
        FormationKind::J => j_shape(count, s, arm, geom.j_short_ratio),
        FormationKind::InvertedJ => flip_x(j_shape(count, s, arm, geom.j_short_ratio)),
        FormationKind::ClosedLine => {
            // regular polygon whose edges are exactly one spacing long
            let r = s / (2.0 * (PI / count as f64).sin());
            (0..count)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / count as f64;
                    Point::new(r * t.sin(), r * t.cos())
                })
                .collect()
        }
        FormationKind::BranchedV => branched_v(count, s, arm, geom),
        FormationKind::GlobularCluster => cluster(count, geom.cluster_sigma * s, 1.0),
        FormationKind::FrontCluster => cluster(count, geom.cluster_sigma * s, geom.cluster_aspect),
        FormationKind::ExtendedCluster => cluster(count, geom.cluster_sigma * s, 1.0 / geom.cluster_aspect),
    };
    Ok(pts)
}

/// `n` points trailing back from `origin` at `angle` off the travel axis
/// (positive angles go right), the first one `first` spacings out.
fn ray(origin: Point, angle: f64, s: f64, first: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let d = (first + i as f64) * s;
            Point::new(origin.x + d * angle.sin(), origin.y - d * angle.cos())
        })
        .collect()
}

fn v_shape(count: usize, s: f64, arm: f64) -> Vec<Point> {
    let origin = Point::new(0.0, 0.0);
    if count % 2 == 1 {
        let k = (count - 1) / 2;
        let mut pts = vec![origin];
        pts.extend(ray(origin, -arm, s, 1.0, k));
        pts.extend(ray(origin, arm, s, 1.0, k));
        pts
    } else {
        // no bird at the apex; the two leading birds sit one spacing apart
        let k = count / 2;
        let first = 0.5 / arm.sin();
        let mut pts = ray(origin, -arm, s, first, k);
        pts.extend(ray(origin, arm, s, first, k));
        pts
    }
}

fn j_shape(count: usize, s: f64, arm: f64, short_ratio: f64) -> Vec<Point> {
    let m = count - 1;
    let mut short = ((m as f64) * short_ratio / (1.0 + short_ratio)).round() as usize;
    if m >= 3 {
        short = short.max(1);
    }
    // keep the short arm at most half the long one
    while short > 0 && 2 * short > m - short {
        short -= 1;
    }
    let long = m - short;
    let origin = Point::new(0.0, 0.0);
    let mut pts = vec![origin];
    pts.extend(ray(origin, arm, s, 1.0, long));
    pts.extend(ray(origin, -arm, s, 1.0, short));
    pts
}

fn branched_v(count: usize, s: f64, arm: f64, geom: &FormationGeometry) -> Vec<Point> {
    let m = count - 1;
    let branch = ((m as f64 * geom.branch_fraction).round() as usize).clamp(1, m);
    let rest = m - branch;
    let left = rest / 2;
    let right = rest - left;
    let origin = Point::new(0.0, 0.0);
    let mut pts = vec![origin];
    pts.extend(ray(origin, -arm, s, 1.0, left));
    let right_arm = ray(origin, arm, s, 1.0, right);
    let fork = right_arm
        .get(right.div_ceil(2).saturating_sub(1))
        .copied()
        .unwrap_or(origin);
    pts.extend(right_arm);
    let branch_angle = arm + geom.branch_extra_angle_deg.to_radians();
    pts.extend(ray(fork, branch_angle, s, 1.0, branch));
    pts
}

/// Deterministic Gaussian-like scatter: a golden-angle spiral with Rayleigh
/// quantile radii, rescaled so the lateral/along standard deviations are
/// exactly `sigma * sqrt(aspect)` and `sigma / sqrt(aspect)`.
fn cluster(count: usize, sigma: f64, aspect: f64) -> Vec<Point> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let raw: Vec<Point> = (0..count)
        .map(|i| {
            let u = (i as f64 + 0.5) / count as f64;
            let r = (-2.0 * (1.0 - u).ln()).sqrt();
            let t = i as f64 * golden;
            Point::new(r * t.cos(), r * t.sin())
        })
        .collect();
    let n = count as f64;
    let mx = raw.iter().map(|p| p.x).sum::<f64>() / n;
    let my = raw.iter().map(|p| p.y).sum::<f64>() / n;
    let sx = (raw.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (raw.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / n).sqrt();
    let tx = sigma * aspect.sqrt();
    let ty = sigma / aspect.sqrt();
    raw.iter()
        .map(|p| Point::new((p.x - mx) / sx * tx, (p.y - my) / sy * ty))
        .collect()
}

fn flip_x(pts: Vec<Point>) -> Vec<Point> {
    pts.into_iter().map(|p| Point::new(-p.x, p.y)).collect()
}

fn flip_y(pts: Vec<Point>) -> Vec<Point> {
    pts.into_iter().map(|p| Point::new(p.x, -p.y)).collect()
}
