use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distort::{apply_with, DistortionConfig, DistortionKind, DistortionParams};
use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::raster::{Image, SeededRng};

/// Percent of `items` whose prediction matches the label.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, items: &[(&Image, &str)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::validation("nothing to evaluate"));
    }
    let correct: usize = items
        .par_iter()
        .map(|(img, truth)| Ok(usize::from(model.predict(img)? == *truth)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / items.len() as f64 * 100.0)
}

/// Distortion seed of sample `index`: depends only on (seed, index).
pub fn image_seed(seed: u64, index: usize) -> u64 {
    SeededRng::new(seed).derive(index as u64).rng().next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub accuracy_percent: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: DistortionKind,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,accuracy_percent,n_samples\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.level, r.accuracy_percent, r.n_samples));
        }
        out
    }
}

/// Accuracy of `model` on a distorted copy of `items` at each level.
pub fn robustness_sweep<C: Classifier + ?Sized>(
    model: &C,
    items: &[(&Image, &str)],
    kind: DistortionKind,
    levels: &[f64],
    seed: u64,
    params: &DistortionParams,
) -> Result<SweepTable> {
    if levels.is_empty() {
        return Err(Error::invalid("no sweep levels given"));
    }
    for &l in levels {
        kind.check_level(l)?;
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let distorted: Vec<Image> = items
            .par_iter()
            .enumerate()
            .map(|(i, (img, _))| {
                apply_with(
                    img,
                    &DistortionConfig {
                        kind,
                        level,
                        seed: image_seed(seed, i),
                    },
                    params,
                )
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<(&Image, &str)> = distorted.iter().zip(items).map(|(d, (_, t))| (d, *t)).collect();
        rows.push(SweepRow {
            level,
            accuracy_percent: accuracy(model, &pairs)?,
            n_samples: items.len(),
        });
    }
    Ok(SweepTable { kind, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Classifier;

    /// Calls everything brighter than mid-grey "light".
    struct Threshold(Vec<String>);

    impl Classifier for Threshold {
        fn classes(&self) -> &[String] {
            &self.0
        }
        fn predict_scores(&self, img: &Image) -> Result<Vec<f64>> {
            Ok(if img.mean() > 0.5 {
                vec![0.0, 1.0]
            } else {
                vec![1.0, 0.0]
            })
        }
    }

    struct Constant(Vec<String>);

    impl Classifier for Constant {
        fn classes(&self) -> &[String] {
            &self.0
        }
        fn predict_scores(&self, _: &Image) -> Result<Vec<f64>> {
            Ok(vec![1.0, 0.0])
        }
    }

    fn corpus() -> Vec<(Image, &'static str)> {
        (0..20)
            .map(|i| {
                let v = 0.05 + 0.9 * i as f64 / 19.0;
                (
                    Image::filled(16, 16, &[v, v, v]),
                    if v > 0.5 { "light" } else { "dark" },
                )
            })
            .collect()
    }

    #[test]
    fn null_level_matches_clean_accuracy() {
        let model = Threshold(vec!["dark".into(), "light".into()]);
        let data = corpus();
        let items: Vec<(&Image, &str)> = data.iter().map(|(i, t)| (i, *t)).collect();
        let clean = accuracy(&model, &items).unwrap();
        for kind in DistortionKind::ALL {
            let levels = [kind.null_level()];
            let t = robustness_sweep(&model, &items, kind, &levels, 5, &DistortionParams::default()).unwrap();
            assert_eq!(t.rows[0].accuracy_percent.to_bits(), clean.to_bits());
        }
        let dark = robustness_sweep(
            &model,
            &items,
            DistortionKind::Darkness,
            &[1.0, 0.3],
            5,
            &Default::default(),
        )
        .unwrap();
        assert!(dark.rows[1].accuracy_percent < dark.rows[0].accuracy_percent);
    }

    #[test]
    fn invariant_model_gives_flat_curve() {
        let model = Constant(vec!["dark".into(), "light".into()]);
        let data = corpus();
        let items: Vec<(&Image, &str)> = data.iter().map(|(i, t)| (i, *t)).collect();
        let t = robustness_sweep(
            &model,
            &items,
            DistortionKind::Noise,
            &DistortionKind::Noise.sweep_levels(),
            1,
            &Default::default(),
        )
        .unwrap();
        assert!(t.rows.iter().all(|r| r.accuracy_percent == t.rows[0].accuracy_percent));
        assert_eq!(t.to_csv().lines().count(), 10);
    }

    #[test]
    fn illegal_levels_are_rejected() {
        let model = Constant(vec!["dark".into(), "light".into()]);
        let data = corpus();
        let items: Vec<(&Image, &str)> = data.iter().map(|(i, t)| (i, *t)).collect();
        assert!(robustness_sweep(&model, &items, DistortionKind::Rain, &[120.0], 1, &Default::default()).is_err());
        assert!(robustness_sweep(&model, &items, DistortionKind::Rain, &[], 1, &Default::default()).is_err());
    }
}
