use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::raster::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(n) => n.clamp(1, d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_split: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    #[serde(default = "default_max_features")]
    pub max_features: MaxFeatures,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_features() -> MaxFeatures {
    MaxFeatures::Sqrt
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_split: 2,
            min_leaf: 1,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

impl fmt::Display for ForestConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depth = self.max_depth.map_or("none".to_string(), |d| d.to_string());
        write!(
            f,
            "trees={} depth={} split={} leaf={} bootstrap={}",
            self.n_trees, depth, self.min_split, self.min_leaf, self.bootstrap
        )
    }
}

impl ForestConfig {
    /// Winner of the large-bird tuning run in the reference study.
    pub const REFERENCE_LARGE: ForestConfig = ForestConfig {
        n_trees: 300,
        max_depth: Some(20),
        min_split: 5,
        min_leaf: 1,
        bootstrap: false,
        max_features: MaxFeatures::Sqrt,
        seed: 0,
    };

    /// Winner of the medium-bird tuning run in the reference study.
    pub const REFERENCE_MEDIUM: ForestConfig = ForestConfig {
        n_trees: 300,
        max_depth: Some(10),
        min_split: 5,
        min_leaf: 2,
        bootstrap: true,
        max_features: MaxFeatures::Sqrt,
        seed: 0,
    };

    /// trees {100,200,300} × depth {10,20,30,none} × split {2,5,10} ×
    /// leaf {1,2,4} × bootstrap {true,false}.
    pub fn search_grid(seed: u64) -> Vec<ForestConfig> {
        let mut grid = Vec::new();
        for n_trees in [100, 200, 300] {
            for max_depth in [Some(10), Some(20), Some(30), None] {
                for min_split in [2, 5, 10] {
                    for min_leaf in [1, 2, 4] {
                        for bootstrap in [true, false] {
                            grid.push(ForestConfig {
                                n_trees,
                                max_depth,
                                min_split,
                                min_leaf,
                                bootstrap,
                                max_features: MaxFeatures::Sqrt,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        grid
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_split < 2 || self.min_leaf == 0 {
            return Err(Error::invalid(format!(
                "forest needs n_trees >= 1, min_split >= 2, min_leaf >= 1 (got {self})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_of(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to the smallest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let counts: Vec<f64> = self.leaf_of(x).iter().map(|&c| c as f64).collect();
        argmax(&counts)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Proportion of trees voting for each class.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::invalid(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        Ok(votes)
    }
}

/// Tree `t` draws from the stream derived from (seed, t); node randomness is
/// keyed by its path from the root, so a deeper limit only extends a tree.
pub fn forest_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, config: ForestConfig) -> Result<ForestModel> {
    let d = check_xy(x, y, n_classes)?;
    config.validate()?;
    let master = SeededRng::new(config.seed);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_rng = master.derive(t as u64);
            let mut rng = tree_rng.rng();
            let sample: Vec<usize> = if config.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut b = Builder {
                x,
                y,
                n_classes,
                config: &config,
                mtry: config.max_features.resolve(d),
                nodes: Vec::new(),
            };
            b.grow(sample, 0, splitmix(tree_rng.seed ^ tree_rng.stream.rotate_left(32)));
            DecisionTree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        config,
        n_classes,
        n_features: d,
        trees,
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    config: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, key: u64) -> usize {
        let mut counts = vec![0u32; self.n_classes];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_ok = self.config.max_depth.is_none_or(|m| depth < m);
        if pure || !depth_ok || idx.len() < self.config.min_split || idx.len() < 2 * self.config.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts, key) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, splitmix(key ^ 1));
        let right = self.grow(r, depth + 1, splitmix(key ^ 2));
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Examines features in random order until `mtry` non-constant ones have
    /// been scored; returns the lowest weighted-Gini split honouring min_leaf.
    fn best_split(&self, idx: &[usize], counts: &[u32], key: u64) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut rng);
        let n = idx.len();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in &features {
            if examined == self.mtry {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut left = vec![0u32; self.n_classes];
            let mut right = counts.to_vec();
            for s in 1..n {
                let c = pairs[s - 1].1;
                left[c] += 1;
                right[c] -= 1;
                if pairs[s].0 == pairs[s - 1].0 || s < min_leaf || n - s < min_leaf {
                    continue;
                }
                let score =
                    (s as f64 * gini(&left, s as u32) + (n - s) as f64 * gini(&right, (n - s) as u32)) / n as f64;
                if best.is_none_or(|b| score < b.0) {
                    best = Some((score, f, 0.5 * (pairs[s - 1].0 + pairs[s].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
