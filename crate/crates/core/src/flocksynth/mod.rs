//! Procedural flock imagery: formation geometry, sprites, rendering and
//! labelled corpus generation.

mod corpus;
mod formation;
mod render;
mod sprite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{
    generate_corpus, generate_samples, load_corpus, split_counts, Coarse, CorpusConfig, CorpusTask, LabelKind,
    Manifest, ManifestEntry, Sample, SampleLabels, Split, AIRCRAFT,
};
pub use formation::{place_formation, place_formation_with, FormationGeometry, FormationKind, Point};
pub use render::{
    render_bottom_view, render_bottom_view_with, render_side_view, FlockSpec, RenderedFlock, Scene, SideViewSpec,
    VerticalAlignment, DEFAULT_SKY,
};
pub use sprite::{Sprite, BIRD_BODY, BIRD_WING};

/// Flock-size categories; each bin is closed on the right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlockSizeBin {
    #[serde(rename = "5-20")]
    B5_20,
    #[serde(rename = "21-40")]
    B21_40,
    #[serde(rename = "41-60")]
    B41_60,
    #[serde(rename = "61-80")]
    B61_80,
    #[serde(rename = "81-100")]
    B81_100,
}

impl FlockSizeBin {
    pub const ALL: [FlockSizeBin; 5] = [
        FlockSizeBin::B5_20,
        FlockSizeBin::B21_40,
        FlockSizeBin::B41_60,
        FlockSizeBin::B61_80,
        FlockSizeBin::B81_100,
    ];

    /// Inclusive bird-count range.
    pub fn range(self) -> (usize, usize) {
        match self {
            FlockSizeBin::B5_20 => (5, 20),
            FlockSizeBin::B21_40 => (21, 40),
            FlockSizeBin::B41_60 => (41, 60),
            FlockSizeBin::B61_80 => (61, 80),
            FlockSizeBin::B81_100 => (81, 100),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlockSizeBin::B5_20 => "5-20",
            FlockSizeBin::B21_40 => "21-40",
            FlockSizeBin::B41_60 => "41-60",
            FlockSizeBin::B61_80 => "61-80",
            FlockSizeBin::B81_100 => "81-100",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FlockSizeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlockSizeBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('–', "-");
        FlockSizeBin::ALL
            .into_iter()
            .find(|b| b.as_str() == s || format!("{b:?}") == s)
            .ok_or_else(|| Error::Parse(format!("unknown flock size bin '{s}'")))
    }
}

pub fn bin_flock_size(count: usize) -> Result<FlockSizeBin> {
    FlockSizeBin::ALL
        .into_iter()
        .find(|b| {
            let (lo, hi) = b.range();
            (lo..=hi).contains(&count)
        })
        .ok_or_else(|| Error::invalid(format!("flock size {count} outside 5..=100")))
}
