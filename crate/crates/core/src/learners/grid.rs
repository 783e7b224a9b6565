use serde::{Deserialize, Serialize};

use super::forest::{forest_fit, ForestConfig};
use super::knn::{knn_fit, KnnConfig};
use crate::error::{Error, Result};
use crate::metrics::argmax;

/// A non-convolutional learner and its hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerConfig {
    Knn(KnnConfig),
    Forest(ForestConfig),
}

impl LearnerConfig {
    /// Fits and returns a scoring function over feature vectors.
    pub fn fit(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<super::ModelBody> {
        Ok(match self {
            LearnerConfig::Knn(c) => super::ModelBody::Knn(knn_fit(x, y, n_classes, *c)?),
            LearnerConfig::Forest(c) => super::ModelBody::Forest(forest_fit(x, y, n_classes, *c)?),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            LearnerConfig::Knn(c) => format!("knn {c}"),
            LearnerConfig::Forest(c) => format!("forest {c}"),
        }
    }
}

fn score(body: &super::ModelBody, x: &[f64]) -> Result<Vec<f64>> {
    match body {
        super::ModelBody::Knn(m) => m.predict_scores(x),
        super::ModelBody::Forest(m) => m.predict_scores(x),
        _ => Err(Error::invalid("grid search covers feature-vector learners only")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: LearnerConfig,
    /// Mean cross-validated accuracy (fraction) of every config, in grid order.
    pub scores: Vec<(LearnerConfig, f64)>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,config,cv_accuracy\n");
        for (i, (c, s)) in self.scores.iter().enumerate() {
            out.push_str(&format!("{i},\"{}\",{s:.6}\n", c.describe()));
        }
        out
    }
}

/// Fold of every sample: within each class, samples are dealt to folds in
/// turn, so each fold's class balance matches the whole.
pub fn stratified_folds(y: &[usize], folds: usize) -> Vec<usize> {
    let mut seen = std::collections::HashMap::new();
    y.iter()
        .map(|&c| {
            let n = seen.entry(c).or_insert(0usize);
            let f = *n % folds;
            *n += 1;
            f
        })
        .collect()
}

/// Exhaustive search scored by mean `folds`-fold cross-validated accuracy on
/// the given (training) data; ties go to the earliest config.
pub fn grid_search(
    grid: &[LearnerConfig],
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    folds: usize,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    if folds < 2 || folds > x.len() {
        return Err(Error::invalid(format!(
            "need 2 <= folds <= {} samples, got {folds}",
            x.len()
        )));
    }
    let assign = stratified_folds(y, folds);
    let mut scores = Vec::with_capacity(grid.len());
    for cfg in grid {
        let mut total = 0.0;
        for f in 0..folds {
            let (mut trx, mut try_, mut tex, mut tey) = (vec![], vec![], vec![], vec![]);
            for i in 0..x.len() {
                if assign[i] == f {
                    tex.push(x[i].clone());
                    tey.push(y[i]);
                } else {
                    trx.push(x[i].clone());
                    try_.push(y[i]);
                }
            }
            let body = cfg.fit(&trx, &try_, n_classes)?;
            let mut correct = 0;
            for (v, &t) in tex.iter().zip(&tey) {
                if argmax(&score(&body, v)?) == t {
                    correct += 1;
                }
            }
            total += correct as f64 / tex.len().max(1) as f64;
        }
        scores.push((*cfg, total / folds as f64));
    }
    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best_index].1 {
            best_index = i;
        }
    }
    Ok(GridResult {
        best_index,
        best: grid[best_index],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{DistanceMetric, Weighting};

    #[test]
    fn single_config_grid() {
        let x = vec![vec![0.0], vec![1.0], vec![0.1], vec![0.9], vec![0.05], vec![0.95]];
        let y = vec![0, 1, 0, 1, 0, 1];
        let cfg = LearnerConfig::Knn(KnnConfig {
            k: 1,
            ..Default::default()
        });
        let r = grid_search(&[cfg], &x, &y, 2, 3).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.scores, vec![(cfg, 1.0)]);
    }

    #[test]
    fn one_nn_wins_on_duplicated_noiseless_data() {
        // each point appears three times; neighbours beyond the duplicates
        // belong to the other class
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..12 {
            for _ in 0..3 {
                x.push(vec![i as f64]);
                y.push(i % 2);
            }
        }
        let k1 = LearnerConfig::Knn(KnnConfig::REFERENCE_LARGE);
        let k7 = LearnerConfig::Knn(KnnConfig {
            k: 7,
            metric: DistanceMetric::Euclidean,
            weighting: Weighting::Uniform,
        });
        let r = grid_search(&[k7, k1], &x, &y, 2, 3).unwrap();
        assert_eq!(r.best, k1);
        assert_eq!(r.scores[1].1, 1.0);
        assert!(r.scores[0].1 < 1.0);
    }

    #[test]
    fn ties_keep_first_and_empty_grid_errors() {
        let x = vec![vec![0.0], vec![10.0], vec![0.1], vec![10.1], vec![0.2], vec![10.2]];
        let y = vec![0, 1, 0, 1, 0, 1];
        let a = LearnerConfig::Knn(KnnConfig {
            k: 1,
            ..Default::default()
        });
        let b = LearnerConfig::Knn(KnnConfig {
            k: 2,
            ..Default::default()
        });
        assert_eq!(grid_search(&[b, a], &x, &y, 2, 3).unwrap().best_index, 0);
        assert!(grid_search(&[], &x, &y, 2, 3).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let y = vec![0, 0, 0, 1, 1, 1, 0, 1, 0];
        assert_eq!(stratified_folds(&y, 3), vec![0, 1, 2, 0, 1, 2, 0, 0, 1]);
    }
}
