//! From-scratch classifiers behind one interface, with a versioned model container.

mod cnn;
mod forest;
mod grid;
mod knn;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::raster::{resize, to_grayscale3, Image};

pub use cnn::{cnn_fit, gradient_check, softmax, CnnConfig, ConvBlock, ConvNet, EpochLog, TrainingLog};
pub use forest::{forest_fit, DecisionTree, ForestConfig, ForestModel, MaxFeatures, Node};
pub use grid::{grid_search, stratified_folds, GridResult, LearnerConfig};
pub use knn::{knn_fit, DistanceMetric, KnnConfig, KnnModel, Weighting};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Anything that scores an image over a fixed class list.
pub trait Classifier: Sync {
    fn classes(&self) -> &[String];

    /// Non-negative scores over [`Classifier::classes`] summing to one.
    fn predict_scores(&self, img: &Image) -> Result<Vec<f64>>;

    fn predict(&self, img: &Image) -> Result<String> {
        let scores = self.predict_scores(img)?;
        Ok(self.classes()[argmax(&scores)].clone())
    }
}

/// How an image becomes model input: resampled to `size`×`size`, optionally
/// converted to three-channel grayscale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub size: usize,
    #[serde(default)]
    pub grayscale: bool,
}

impl Preprocess {
    pub fn new(size: usize) -> Self {
        Self { size, grayscale: false }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        let rgb = img.to_rgb();
        let sized = resize(&rgb, self.size, self.size)?;
        if self.grayscale {
            to_grayscale3(&sized)
        } else {
            Ok(sized)
        }
    }

    /// Flattened HWC pixels, the feature vector of the non-convolutional learners.
    pub fn features(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(self.apply(img)?.into_data())
    }
}

/// Fixed answers keyed by image fingerprint; used for stub models in
/// pipeline tests and configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupModel {
    pub table: BTreeMap<String, String>,
    /// Answer for unknown images; an error when absent.
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Knn(KnnModel),
    Forest(ForestModel),
    ConvNet(ConvNet),
    Lookup(LookupModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub preprocess: Preprocess,
    #[serde(flatten)]
    pub body: ModelBody,
}

impl TrainedModel {
    pub fn new(classes: Vec<String>, preprocess: Preprocess, body: ModelBody) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            classes,
            preprocess,
            body,
        }
    }

    pub fn lookup(classes: Vec<String>, table: BTreeMap<String, String>, default: Option<String>) -> Self {
        Self::new(
            classes,
            Preprocess::new(1),
            ModelBody::Lookup(LookupModel { table, default }),
        )
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            ModelBody::Knn(_) => "knn",
            ModelBody::Forest(_) => "forest",
            ModelBody::ConvNet(_) => "conv_net",
            ModelBody::Lookup(_) => "lookup",
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Configuration(format!(
                "{}: model format version {} is not supported (expected {})",
                path.display(),
                model.format_version,
                MODEL_FORMAT_VERSION
            )));
        }
        Ok(model)
    }

    fn one_hot(&self, label: &str) -> Result<Vec<f64>> {
        let i = self
            .classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Configuration(format!("lookup answer '{label}' is not a class")))?;
        let mut v = vec![0.0; self.classes.len()];
        v[i] = 1.0;
        Ok(v)
    }
}

impl Classifier for TrainedModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_scores(&self, img: &Image) -> Result<Vec<f64>> {
        match &self.body {
            ModelBody::Knn(m) => m.predict_scores(&self.preprocess.features(img)?),
            ModelBody::Forest(m) => m.predict_scores(&self.preprocess.features(img)?),
            ModelBody::ConvNet(m) => m.predict_scores(&self.preprocess.apply(img)?),
            ModelBody::Lookup(m) => {
                let fp = img.fingerprint();
                match m.table.get(&fp).or(m.default.as_ref()) {
                    Some(label) => self.one_hot(label),
                    None => Err(Error::invalid(format!("lookup model has no entry for image {fp}"))),
                }
            }
        }
    }
}

/// Scores every image in parallel, preserving order.
pub fn predict_all<C: Classifier + ?Sized>(model: &C, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    images.par_iter().map(|img| model.predict_scores(img)).collect()
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|v| v.len() != d) {
        return Err(Error::invalid("feature vectors must share one non-zero length"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("label index {bad} outside {n_classes} classes")));
    }
    Ok(d)
}
