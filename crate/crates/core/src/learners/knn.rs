use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Manhattan,
        DistanceMetric::Chebyshev,
    ];

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            DistanceMetric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            DistanceMetric::Manhattan => diffs.sum(),
            DistanceMetric::Chebyshev => diffs.fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    Distance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    pub weighting: Weighting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            metric: DistanceMetric::Euclidean,
            weighting: Weighting::Uniform,
        }
    }
}

impl fmt::Display for KnnConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={} metric={:?} weights={:?}", self.k, self.metric, self.weighting)
    }
}

impl KnnConfig {
    /// Winner of the large-bird tuning run in the reference study.
    pub const REFERENCE_LARGE: KnnConfig = KnnConfig {
        k: 1,
        metric: DistanceMetric::Euclidean,
        weighting: Weighting::Uniform,
    };

    /// k in 1..=10 × three metrics × two weightings, in that nesting order.
    pub fn search_grid() -> Vec<KnnConfig> {
        let mut grid = Vec::new();
        for k in 1..=10 {
            for metric in DistanceMetric::ALL {
                for weighting in [Weighting::Uniform, Weighting::Distance] {
                    grid.push(KnnConfig { k, metric, weighting });
                }
            }
        }
        grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub config: KnnConfig,
    pub n_classes: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

pub fn knn_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, config: KnnConfig) -> Result<KnnModel> {
    check_xy(x, y, n_classes)?;
    if config.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(KnnModel {
        config,
        n_classes,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    /// Normalised neighbour votes. Neighbours are ranked by distance, then
    /// training index. With distance weighting, exact matches take the whole vote.
    pub fn predict_scores(&self, q: &[f64]) -> Result<Vec<f64>> {
        let d = self.x[0].len();
        if q.len() != d {
            return Err(Error::invalid(format!(
                "query has {} features, model expects {d}",
                q.len()
            )));
        }
        let metric = self.config.metric;
        let mut dist: Vec<(f64, usize)> = self
            .x
            .par_iter()
            .enumerate()
            .map(|(i, v)| (metric.distance(v, q), i))
            .collect();
        let k = self.config.k.min(dist.len());
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbours = &dist[..k];
        let mut votes = vec![0.0; self.n_classes];
        match self.config.weighting {
            Weighting::Uniform => neighbours.iter().for_each(|&(_, i)| votes[self.y[i]] += 1.0),
            Weighting::Distance => {
                if neighbours[0].0 == 0.0 {
                    neighbours
                        .iter()
                        .filter(|n| n.0 == 0.0)
                        .for_each(|&(_, i)| votes[self.y[i]] += 1.0);
                } else {
                    neighbours.iter().for_each(|&(dd, i)| votes[self.y[i]] += 1.0 / dd);
                }
            }
        }
        let total: f64 = votes.iter().sum();
        votes.iter_mut().for_each(|v| *v /= total);
        Ok(votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::argmax;

    #[test]
    fn stored_point_predicts_itself() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let m = knn_fit(
            &x,
            &[0, 1, 2],
            3,
            KnnConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.predict_scores(&[1.0, 1.0]).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_distance_neighbour_wins_outright() {
        let x = vec![vec![0.0], vec![0.1], vec![0.2]];
        let cfg = KnnConfig {
            k: 3,
            metric: DistanceMetric::Euclidean,
            weighting: Weighting::Distance,
        };
        let m = knn_fit(&x, &[0, 1, 1], 2, cfg).unwrap();
        assert_eq!(m.predict_scores(&[0.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn full_k_uniform_is_global_majority() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let y = vec![0, 1, 1, 2, 1, 0, 1, 2, 2];
        let m = knn_fit(
            &x,
            &y,
            3,
            KnnConfig {
                k: 9,
                ..Default::default()
            },
        )
        .unwrap();
        for q in [-3.0, 4.0, 100.0] {
            assert_eq!(argmax(&m.predict_scores(&[q]).unwrap()), 1);
        }
    }

    #[test]
    fn metrics() {
        let (a, b) = ([0.0, 0.0], [3.0, -4.0]);
        assert_eq!(DistanceMetric::Euclidean.distance(&a, &b), 5.0);
        assert_eq!(DistanceMetric::Manhattan.distance(&a, &b), 7.0);
        assert_eq!(DistanceMetric::Chebyshev.distance(&a, &b), 4.0);
    }

    #[test]
    fn grid_shape() {
        let g = KnnConfig::search_grid();
        assert_eq!(g.len(), 60);
        assert_eq!(g[0], KnnConfig::REFERENCE_LARGE);
    }

    #[test]
    fn errors() {
        assert!(knn_fit(&[], &[], 2, KnnConfig::default()).is_err());
        assert!(knn_fit(&[vec![1.0], vec![1.0, 2.0]], &[0, 1], 2, KnnConfig::default()).is_err());
        let m = knn_fit(&[vec![1.0, 2.0]], &[0], 1, KnnConfig::default()).unwrap();
        assert!(m.predict_scores(&[1.0]).is_err());
    }
}
