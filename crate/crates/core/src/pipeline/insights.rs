use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{cnn_fit, Classifier, CnnConfig};
use crate::metrics::write_text;
use crate::raster::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsightConfig {
    /// Training images per class for the data-volume sweep.
    pub train_sizes: Vec<usize>,
    /// Input sides for the resolution and colour-mode sweeps.
    pub input_sizes: Vec<usize>,
    pub cnn: CnnConfig,
}

impl Default for InsightConfig {
    fn default() -> Self {
        Self {
            train_sizes: vec![20, 40, 80],
            input_sizes: vec![32, 64],
            cnn: CnnConfig::default(),
        }
    }
}

/// Labelled images; labels index `classes`.
pub struct LabelledSet<'a> {
    pub images: Vec<&'a Image>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSizeRow {
    pub per_class: usize,
    pub accuracy_percent: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorModeRow {
    pub input_size: usize,
    pub grayscale_accuracy: f64,
    pub rgb_accuracy: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub input_size: usize,
    pub accuracy_percent: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InsightTables {
    pub train_size: Vec<TrainSizeRow>,
    pub color_mode: Vec<ColorModeRow>,
    pub resolution: Vec<ResolutionRow>,
    /// Wall-clock seconds per run; kept out of the CSV tables so those stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl InsightTables {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut a = String::from("per_class,accuracy_percent,n_samples\n");
        for r in &self.train_size {
            let _ = writeln!(a, "{},{},{}", r.per_class, r.accuracy_percent, r.n_samples);
        }
        let mut b = String::from("input_size,grayscale_accuracy,rgb_accuracy,n_samples\n");
        for r in &self.color_mode {
            let _ = writeln!(
                b,
                "{},{},{},{}",
                r.input_size, r.grayscale_accuracy, r.rgb_accuracy, r.n_samples
            );
        }
        let mut c = String::from("input_size,accuracy_percent,n_samples\n");
        for r in &self.resolution {
            let _ = writeln!(c, "{},{},{}", r.input_size, r.accuracy_percent, r.n_samples);
        }
        let mut t = String::new();
        for (run, secs) in &self.timings {
            let _ = writeln!(t, "{run}\t{secs:.3}s");
        }
        write_text(&dir.join("train_size.csv"), &a)?;
        write_text(&dir.join("color_mode.csv"), &b)?;
        write_text(&dir.join("resolution.csv"), &c)?;
        write_text(&dir.join("timings.log"), &t)
    }
}

fn take_per_class<'a>(set: &LabelledSet<'a>, n: usize, k: usize) -> LabelledSet<'a> {
    let mut used = vec![0usize; k];
    let mut out = LabelledSet {
        images: vec![],
        labels: vec![],
    };
    for (img, &y) in set.images.iter().zip(&set.labels) {
        if used[y] < n {
            used[y] += 1;
            out.images.push(img);
            out.labels.push(y);
        }
    }
    out
}

fn test_accuracy(model: &dyn Classifier, test: &LabelledSet<'_>) -> Result<f64> {
    let classes = model.classes();
    let items: Vec<(&Image, &str)> = test
        .images
        .iter()
        .zip(&test.labels)
        .map(|(img, &y)| (*img, classes[y].as_str()))
        .collect();
    super::sweep::accuracy(model, &items)
}

/// Data-volume, colour-mode and resolution sweeps. Every run uses the same
/// validation and test sets and the same network seed.
pub fn insight_sweeps(
    cfg: &InsightConfig,
    classes: &[String],
    train: &LabelledSet<'_>,
    val: &LabelledSet<'_>,
    test: &LabelledSet<'_>,
) -> Result<InsightTables> {
    let k = classes.len();
    if test.images.is_empty() || val.images.is_empty() {
        return Err(Error::validation(
            "insight sweeps need non-empty validation and test sets",
        ));
    }
    let mut available = vec![0usize; k];
    for &y in &train.labels {
        available[y] += 1;
    }
    let have = available.iter().copied().min().unwrap_or(0);
    if let Some(&want) = cfg.train_sizes.iter().max() {
        if want > have {
            let (worst, _) = available.iter().enumerate().min_by_key(|(_, &n)| n).expect("classes");
            return Err(Error::validation(format!(
                "train size {want} per class requested but class '{}' has only {have} training images",
                classes[worst]
            )));
        }
    }
    let mut tables = InsightTables::default();
    let mut run = |name: String, set: &LabelledSet<'_>, cnn: &CnnConfig| -> Result<f64> {
        let start = Instant::now();
        let (model, _) = cnn_fit(
            (&set.images, &set.labels),
            (&val.images, &val.labels),
            classes.to_vec(),
            cnn,
        )?;
        let acc = test_accuracy(&model, test)?;
        tables.timings.push((name, start.elapsed().as_secs_f64()));
        Ok(acc)
    };

    let mut train_rows = Vec::new();
    for &n in &cfg.train_sizes {
        let subset = take_per_class(train, n, k);
        let acc = run(format!("train_size={n}"), &subset, &cfg.cnn)?;
        train_rows.push(TrainSizeRow {
            per_class: n,
            accuracy_percent: acc,
            n_samples: test.images.len(),
        });
    }
    let mut by_size: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &s in &cfg.input_sizes {
        let rgb = run(
            format!("input={s} rgb"),
            train,
            &CnnConfig {
                input_size: s,
                grayscale: false,
                ..cfg.cnn.clone()
            },
        )?;
        let gray = run(
            format!("input={s} gray"),
            train,
            &CnnConfig {
                input_size: s,
                grayscale: true,
                ..cfg.cnn.clone()
            },
        )?;
        by_size.insert(s, (gray, rgb));
    }
    tables.train_size = train_rows;
    for (&s, &(gray, rgb)) in &by_size {
        let n = test.images.len();
        tables.color_mode.push(ColorModeRow {
            input_size: s,
            grayscale_accuracy: gray,
            rgb_accuracy: rgb,
            n_samples: n,
        });
        tables.resolution.push(ResolutionRow {
            input_size: s,
            accuracy_percent: rgb,
            n_samples: n,
        });
    }
    Ok(tables)
}
