//! Weight-based size classes for bird species.
//!
//! A species is assigned the class whose gram interval covers the largest
//! share of its weight range. Thresholds are inclusive upper bounds and the
//! large class is open-ended.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transcription of the high-strike species table, one row per species.
pub const SPECIES_CSV: &str = include_str!("../data/species.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "Small",
            SizeClass::Medium => "Medium",
            SizeClass::Large => "Large",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Parse(format!("unknown size class '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeThresholds {
    pub small_max: f64,
    pub medium_max: f64,
    /// Upper end of the nominal large band. Heavier birds are still Large.
    pub large_max: f64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        Self {
            small_max: 70.0,
            medium_max: 800.0,
            large_max: 1700.0,
        }
    }
}

impl SizeThresholds {
    pub fn new(small_max: f64, medium_max: f64, large_max: f64) -> Result<Self> {
        if !(0.0 < small_max && small_max < medium_max && medium_max < large_max) {
            return Err(Error::invalid(format!(
                "thresholds must satisfy 0 < {small_max} < {medium_max} < {large_max}"
            )));
        }
        Ok(Self {
            small_max,
            medium_max,
            large_max,
        })
    }

    fn class_of_point(&self, w: f64) -> SizeClass {
        if w <= self.small_max {
            SizeClass::Small
        } else if w <= self.medium_max {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

/// Majority-overlap size class of a weight range. Equal overlaps resolve to
/// the larger class; a point range takes the class containing the point.
pub fn size_class_of(weight_min: f64, weight_max: f64, t: &SizeThresholds) -> Result<SizeClass> {
    if !(weight_min > 0.0 && weight_max > 0.0) {
        return Err(Error::invalid(format!(
            "weights must be positive, got {weight_min}..{weight_max}"
        )));
    }
    if weight_min > weight_max {
        return Err(Error::invalid(format!(
            "weight_min {weight_min} exceeds weight_max {weight_max}"
        )));
    }
    if weight_min == weight_max {
        return Ok(t.class_of_point(weight_min));
    }
    let overlap = |lo: f64, hi: f64| (weight_max.min(hi) - weight_min.max(lo)).max(0.0);
    let shares = [
        (SizeClass::Small, overlap(0.0, t.small_max)),
        (SizeClass::Medium, overlap(t.small_max, t.medium_max)),
        (SizeClass::Large, overlap(t.medium_max, f64::INFINITY)),
    ];
    let mut best = shares[0];
    for &(class, share) in &shares[1..] {
        if share >= best.1 {
            best = (class, share);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesRecord {
    pub name: String,
    pub weight_min: f64,
    pub weight_max: f64,
    pub strike_count: u64,
    pub assigned_class: SizeClass,
    /// Species this one was pooled with for image classification.
    pub merged_into: Option<String>,
    /// Left out of image classification for lack of data.
    pub excluded: bool,
}

#[derive(Debug, Deserialize)]
struct SpeciesRow {
    name: String,
    weight_min_g: f64,
    weight_max_g: f64,
    strikes: u64,
    class: String,
    #[serde(default)]
    merged_into: String,
    #[serde(default)]
    excluded: String,
}

pub fn load_species_table(path: impl AsRef<Path>) -> Result<Vec<SpeciesRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_species_table(&text, &SizeThresholds::default())
}

/// The shipped table, parsed and validated.
pub fn builtin_species() -> Vec<SpeciesRecord> {
    parse_species_table(SPECIES_CSV, &SizeThresholds::default()).expect("built-in species table")
}

/// Parses the species CSV, recomputing every class and rejecting rows whose
/// recorded class disagrees.
pub fn parse_species_table(text: &str, t: &SizeThresholds) -> Result<Vec<SpeciesRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<SpeciesRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::validation(format!("row {line}: {e}")))?;
        let recorded: SizeClass = row
            .class
            .parse()
            .map_err(|e| Error::validation(format!("row {line} ({}): {e}", row.name)))?;
        let computed = size_class_of(row.weight_min_g, row.weight_max_g, t)
            .map_err(|e| Error::validation(format!("row {line} ({}): {e}", row.name)))?;
        if computed != recorded {
            return Err(Error::validation(format!(
                "row {line} ({}): recorded class {recorded} but weights {}-{} g give {computed}",
                row.name, row.weight_min_g, row.weight_max_g
            )));
        }
        let excluded = match row.excluded.to_ascii_lowercase().as_str() {
            "" | "false" | "0" | "no" => false,
            "true" | "1" | "yes" => true,
            other => {
                return Err(Error::validation(format!(
                    "row {line} ({}): bad excluded flag '{other}'",
                    row.name
                )))
            }
        };
        out.push(SpeciesRecord {
            name: row.name,
            weight_min: row.weight_min_g,
            weight_max: row.weight_max_g,
            strike_count: row.strikes,
            assigned_class: computed,
            merged_into: Some(row.merged_into).filter(|m| !m.is_empty()),
            excluded,
        });
    }
    Ok(out)
}

/// Classification labels per size class after merges and exclusions,
/// in table order.
pub fn species_labels(records: &[SpeciesRecord], class: SizeClass) -> Vec<String> {
    records
        .iter()
        .filter(|r| r.assigned_class == class && !r.excluded && r.merged_into.is_none())
        .map(|r| r.name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class(a: f64, b: f64) -> SizeClass {
        size_class_of(a, b, &SizeThresholds::default()).unwrap()
    }

    #[test]
    fn table_rows() {
        assert_eq!(class(86.0, 170.0), SizeClass::Medium);
        assert_eq!(class(530.0, 1600.0), SizeClass::Large);
        assert_eq!(class(3000.0, 9000.0), SizeClass::Large);
        assert_eq!(class(10.0, 10.0), SizeClass::Small);
    }

    #[test]
    fn thresholds_are_inclusive_upper_bounds() {
        assert_eq!(class(70.0, 70.0), SizeClass::Small);
        assert_eq!(class(71.0, 71.0), SizeClass::Medium);
        assert_eq!(class(800.0, 800.0), SizeClass::Medium);
        assert_eq!(class(801.0, 801.0), SizeClass::Large);
        assert_eq!(class(5000.0, 5000.0), SizeClass::Large);
    }

    #[test]
    fn ties_go_to_the_larger_class() {
        // 20 g on each side of the small/medium boundary
        assert_eq!(class(50.0, 90.0), SizeClass::Medium);
        assert_eq!(class(700.0, 900.0), SizeClass::Large);
    }

    #[test]
    fn rejects_bad_weights() {
        let t = SizeThresholds::default();
        assert!(size_class_of(0.0, 5.0, &t).is_err());
        assert!(size_class_of(-3.0, 5.0, &t).is_err());
        assert!(size_class_of(9.0, 5.0, &t).is_err());
        assert!(SizeThresholds::new(70.0, 60.0, 1700.0).is_err());
    }

    #[test]
    fn builtin_table_reproduces_recorded_classes() {
        let rows = builtin_species();
        assert_eq!(rows.len(), 33);
        let find = |n: &str| rows.iter().find(|r| r.name == n).unwrap().assigned_class;
        assert_eq!(find("Barn Swallow"), SizeClass::Small);
        assert_eq!(find("Red-tailed Hawk"), SizeClass::Large);
        assert_eq!(species_labels(&rows, SizeClass::Small).len(), 7);
        assert_eq!(species_labels(&rows, SizeClass::Medium).len(), 10);
        assert_eq!(species_labels(&rows, SizeClass::Large).len(), 7);
    }

    #[test]
    fn empty_table() {
        assert!(parse_species_table("", &SizeThresholds::default()).unwrap().is_empty());
    }

    #[test]
    fn mismatched_class_names_the_row() {
        let text = "name,weight_min_g,weight_max_g,strikes,class,merged_into,excluded\n\
                    Killdeer,75,128,9881,large,,false\n";
        let err = parse_species_table(text, &SizeThresholds::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("Killdeer"), "{msg}");
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("species.csv");
        std::fs::write(&path, SPECIES_CSV).unwrap();
        assert_eq!(load_species_table(&path).unwrap(), builtin_species());
        assert!(matches!(
            load_species_table(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn shifting_a_range_up_never_lowers_the_class(
            lo in 1.0f64..3000.0, span in 0.0f64..2000.0, shift in 0.0f64..3000.0
        ) {
            let before = class(lo, lo + span);
            let after = class(lo + shift, lo + span + shift);
            prop_assert!(after >= before);
        }
    }
}
