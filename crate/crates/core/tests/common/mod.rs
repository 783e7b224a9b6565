//! Deterministic stage stubs shared by the cascade tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use aviary::flocksynth::{generate_samples, Coarse, CorpusConfig, CorpusTask, Sample, SampleLabels, AIRCRAFT};
use aviary::learners::Classifier;
use aviary::pipeline::{CascadeModel, DynClassifier};
use aviary::raster::Image;
use aviary::taxonomy::{builtin_species, species_labels, SizeClass};
use aviary::Result;

pub fn species_corpus(per_class: usize, seed: u64) -> Vec<Sample> {
    let cfg = CorpusConfig {
        per_class,
        seed,
        ..CorpusConfig::for_task(CorpusTask::Species)
    };
    generate_samples(&cfg).expect("species corpus")
}

/// Image fingerprint to (sample index, truth).
pub type Truths = Arc<HashMap<String, (usize, SampleLabels)>>;

pub fn truth_table(samples: &[Sample]) -> Truths {
    let map: HashMap<_, _> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.image.fingerprint(), (i, s.labels.clone())))
        .collect();
    assert_eq!(map.len(), samples.len(), "image fingerprints must be unique");
    Arc::new(map)
}

fn one_hot(classes: &[String], label: &str) -> Vec<f64> {
    classes.iter().map(|c| f64::from(u8::from(c == label))).collect()
}

/// Rules keyed on the sample index.
#[derive(Clone, Copy, Debug)]
pub struct Corruption {
    /// Bird recognised as aircraft when `i % n == 0`.
    pub bird_flip: usize,
    /// Aircraft passed on as a bird when `i % n == 3`.
    pub aircraft_leak: usize,
    /// Bird sent to the next size class when `i % n == 1`.
    pub misroute: usize,
    /// Species swapped for the next one in its set when `i % n == 2`.
    pub species_error: usize,
}

pub const DEFAULT_CORRUPTION: Corruption = Corruption {
    bird_flip: 10,
    aircraft_leak: 13,
    misroute: 5,
    species_error: 7,
};

type Rule = Box<dyn Fn(usize, &SampleLabels) -> String + Send + Sync>;

struct Stage {
    classes: Vec<String>,
    truths: Truths,
    rule: Rule,
}

impl Classifier for Stage {
    fn classes(&self) -> &[String] {
        &self.classes
    }
    fn predict_scores(&self, img: &Image) -> Result<Vec<f64>> {
        let (i, labels) = self.truths.get(&img.fingerprint()).expect("stub saw an unknown image");
        Ok(one_hot(&self.classes, &(self.rule)(*i, labels)))
    }
}

fn next_size(s: SizeClass) -> SizeClass {
    SizeClass::ALL[(s.index() + 1) % 3]
}

pub fn stub_cascade(truths: &Truths, c: Corruption) -> CascadeModel {
    let stage1 = Stage {
        classes: vec![Coarse::Bird.as_str().into(), AIRCRAFT.into()],
        truths: truths.clone(),
        rule: Box::new(move |i, l| {
            let bird = l.coarse == Some(Coarse::Bird);
            let flip = if bird {
                i % c.bird_flip == 0
            } else {
                i % c.aircraft_leak == 3
            };
            if bird != flip {
                Coarse::Bird.as_str().into()
            } else {
                AIRCRAFT.into()
            }
        }),
    };
    let stage2 = Stage {
        classes: SizeClass::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        truths: truths.clone(),
        rule: Box::new(move |i, l| {
            let size = l.size.unwrap_or(SizeClass::Small);
            if i % c.misroute == 1 { next_size(size) } else { size }.as_str().into()
        }),
    };
    let records = builtin_species();
    let mut stage3: std::collections::BTreeMap<SizeClass, DynClassifier> = Default::default();
    for size in SizeClass::ALL {
        let classes = species_labels(&records, size);
        let set = classes.clone();
        stage3.insert(
            size,
            Box::new(Stage {
                classes,
                truths: truths.clone(),
                rule: Box::new(move |i, l| {
                    let pos = l.species.as_ref().and_then(|sp| set.iter().position(|c| c == sp));
                    match pos {
                        Some(p) if i % c.species_error == 2 => set[(p + 1) % set.len()].clone(),
                        Some(p) => set[p].clone(),
                        None => set[0].clone(),
                    }
                }),
            }),
        );
    }
    CascadeModel::new(Box::new(stage1), Box::new(stage2), stage3).expect("disjoint species sets")
}
