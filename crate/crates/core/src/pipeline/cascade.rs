use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flocksynth::{Coarse, SampleLabels, AIRCRAFT};
use crate::learners::Classifier;
use crate::metrics::{class_report, confusion, ClassReport};
use crate::raster::Image;
use crate::taxonomy::SizeClass;

pub type DynClassifier = Box<dyn Classifier + Send>;

/// Bird/aircraft, then size class, then a species classifier per size class.
pub struct CascadeModel {
    pub stage1: DynClassifier,
    pub stage2: DynClassifier,
    pub stage3: BTreeMap<SizeClass, DynClassifier>,
}

impl CascadeModel {
    /// Rejects species classifiers whose label sets overlap.
    pub fn new(
        stage1: DynClassifier,
        stage2: DynClassifier,
        stage3: BTreeMap<SizeClass, DynClassifier>,
    ) -> Result<Self> {
        let mut seen: BTreeMap<&str, SizeClass> = BTreeMap::new();
        for (&size, m) in &stage3 {
            for label in m.classes() {
                if let Some(other) = seen.insert(label, size) {
                    return Err(Error::Configuration(format!(
                        "species '{label}' appears in both the {other} and {size} classifiers"
                    )));
                }
            }
        }
        Ok(Self { stage1, stage2, stage3 })
    }

    pub fn species_set(&self, size: SizeClass) -> Option<BTreeSet<&str>> {
        self.stage3
            .get(&size)
            .map(|m| m.classes().iter().map(String::as_str).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub stage1: String,
    pub stage2: Option<SizeClass>,
    pub stage3: Option<String>,
    pub label: String,
}

pub fn cca_predict(m: &CascadeModel, img: &Image) -> Result<RoutingTrace> {
    let coarse = m.stage1.predict(img)?;
    if coarse == AIRCRAFT {
        return Ok(RoutingTrace {
            stage1: coarse,
            stage2: None,
            stage3: None,
            label: AIRCRAFT.to_string(),
        });
    }
    let size: SizeClass = m.stage2.predict(img)?.parse()?;
    let species_model = m
        .stage3
        .get(&size)
        .ok_or_else(|| Error::Configuration(format!("no species classifier for size class {size}")))?;
    let species = species_model.predict(img)?;
    Ok(RoutingTrace {
        stage1: coarse,
        stage2: Some(size),
        stage3: Some(species.clone()),
        label: species,
    })
}

/// One classifier over every species plus `Aircraft`.
pub struct UnifiedModel {
    pub model: DynClassifier,
}

pub fn uca_predict(m: &UnifiedModel, img: &Image) -> Result<String> {
    m.model.predict(img)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Size distribution of the birds that pass stage 1.
    #[default]
    Measured,
    Uniform,
}

/// Quantities of the cascade accuracy formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub r1_bird: f64,
    pub r2: BTreeMap<SizeClass, f64>,
    pub a3: BTreeMap<SizeClass, f64>,
    pub priors: BTreeMap<SizeClass, f64>,
}

impl StageStats {
    pub fn uniform(r1_bird: f64, r2: [f64; 3], a3: [f64; 3]) -> Self {
        let map = |v: [f64; 3]| SizeClass::ALL.into_iter().zip(v).collect();
        Self {
            r1_bird,
            r2: map(r2),
            a3: map(a3),
            priors: map([1.0 / 3.0; 3]),
        }
    }
}

/// R1 × Σ_i P(i)·R2(i)·A3(i).
pub fn analytic_cca_accuracy(s: &StageStats) -> Result<f64> {
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if !in_unit(s.r1_bird) {
        return Err(Error::invalid(format!("bird recall {} outside [0, 1]", s.r1_bird)));
    }
    let total: f64 = s.priors.values().sum();
    if (total - 1.0).abs() > 1e-9 || s.priors.values().any(|&p| !in_unit(p)) {
        return Err(Error::invalid(format!(
            "size priors must be in [0, 1] and sum to 1 (sum {total})"
        )));
    }
    let mut acc = 0.0;
    for (size, &p) in &s.priors {
        let r2 = *s
            .r2
            .get(size)
            .ok_or_else(|| Error::invalid(format!("missing stage-2 recall for {size}")))?;
        let a3 = *s
            .a3
            .get(size)
            .ok_or_else(|| Error::invalid(format!("missing species accuracy for {size}")))?;
        if !in_unit(r2) || !in_unit(a3) {
            return Err(Error::invalid(format!("{size} ratios outside [0, 1]")));
        }
        acc += p * r2 * a3;
    }
    Ok(s.r1_bird * acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    pub truth: String,
    #[serde(flatten)]
    pub trace: RoutingTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Bird/aircraft over every sample.
    pub stage1: Option<ClassReport>,
    /// Size classes over birds that stage 1 recognised.
    pub stage2: Option<ClassReport>,
    /// Species per size class over correctly routed birds.
    pub stage3: BTreeMap<SizeClass, ClassReport>,
    pub stats: StageStats,
    pub prior_mode: PriorMode,
    pub n_birds: usize,
    /// Percent of bird samples whose final label is their species.
    pub end_to_end_accuracy: f64,
    /// The formula under `prior_mode`, percent.
    pub analytic_accuracy: f64,
    /// Percent of aircraft samples labelled `Aircraft`; excluded from the bird figures.
    pub aircraft_accuracy: Option<f64>,
    pub n_aircraft: usize,
    #[serde(skip)]
    pub traces: Vec<TraceRow>,
}

impl PipelineReport {
    pub fn traces_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.traces {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Runs the cascade over labelled samples and measures the per-stage
/// conditional statistics. Under measured priors the formula reproduces the
/// empirical bird accuracy exactly.
pub fn evaluate_cascade(
    m: &CascadeModel,
    items: &[(&Image, &SampleLabels)],
    prior_mode: PriorMode,
) -> Result<PipelineReport> {
    if items.is_empty() {
        return Err(Error::validation("evaluation corpus is empty"));
    }
    for (i, (_, l)) in items.iter().enumerate() {
        match l.coarse {
            None => return Err(Error::validation(format!("sample {i} lacks bird/aircraft truth"))),
            Some(Coarse::Bird) if l.size.is_none() || l.species.is_none() => {
                return Err(Error::validation(format!(
                    "bird sample {i} lacks size or species truth"
                )))
            }
            _ => {}
        }
    }
    let traces: Vec<RoutingTrace> = items
        .par_iter()
        .map(|(img, _)| cca_predict(m, img))
        .collect::<Result<_>>()?;

    let mut n = BTreeMap::<SizeClass, usize>::new();
    let mut s1 = BTreeMap::<SizeClass, usize>::new();
    let mut routed = BTreeMap::<SizeClass, usize>::new();
    let mut correct = BTreeMap::<SizeClass, usize>::new();
    let (mut n_air, mut air_ok) = (0, 0);
    let mut coarse_truth = Vec::new();
    let mut coarse_pred = Vec::new();
    let mut size_truth = Vec::new();
    let mut size_pred = Vec::new();
    let mut species: BTreeMap<SizeClass, (Vec<String>, Vec<String>)> = BTreeMap::new();
    let mut rows = Vec::with_capacity(items.len());
    for (index, ((_, l), t)) in items.iter().zip(&traces).enumerate() {
        coarse_truth.push(l.coarse.expect("checked").as_str().to_string());
        coarse_pred.push(t.stage1.clone());
        let truth_label = match l.coarse {
            Some(Coarse::Aircraft) => {
                n_air += 1;
                air_ok += usize::from(t.label == AIRCRAFT);
                AIRCRAFT.to_string()
            }
            _ => {
                let size = l.size.expect("checked");
                let sp = l.species.clone().expect("checked");
                *n.entry(size).or_default() += 1;
                if let Some(pred_size) = t.stage2 {
                    *s1.entry(size).or_default() += 1;
                    size_truth.push(size.to_string());
                    size_pred.push(pred_size.to_string());
                    if pred_size == size {
                        *routed.entry(size).or_default() += 1;
                        let pred_sp = t.stage3.clone().expect("routed birds reach stage 3");
                        *correct.entry(size).or_default() += usize::from(pred_sp == sp);
                        let e = species.entry(size).or_default();
                        e.0.push(sp.clone());
                        e.1.push(pred_sp);
                    }
                }
                sp
            }
        };
        rows.push(TraceRow {
            index,
            truth: truth_label,
            trace: t.clone(),
        });
    }

    let get = |m: &BTreeMap<SizeClass, usize>, k: SizeClass| m.get(&k).copied().unwrap_or(0);
    let n_birds: usize = n.values().sum();
    let n_s1: usize = s1.values().sum();
    let mut stats = StageStats {
        r1_bird: ratio(n_s1, n_birds),
        r2: BTreeMap::new(),
        a3: BTreeMap::new(),
        priors: BTreeMap::new(),
    };
    for size in SizeClass::ALL {
        stats.r2.insert(size, ratio(get(&routed, size), get(&s1, size)));
        stats.a3.insert(size, ratio(get(&correct, size), get(&routed, size)));
        let p = match prior_mode {
            PriorMode::Measured if n_s1 > 0 => ratio(get(&s1, size), n_s1),
            // with nothing past stage 1, R1 = 0 zeroes the formula anyway
            _ => 1.0 / 3.0,
        };
        stats.priors.insert(size, p);
    }
    let end_to_end = ratio(correct.values().sum(), n_birds) * 100.0;
    let analytic = analytic_cca_accuracy(&stats)? * 100.0;

    let report_of = |t: &[String], p: &[String], classes: Vec<String>| -> Result<Option<ClassReport>> {
        if t.is_empty() {
            return Ok(None);
        }
        Ok(Some(class_report(&confusion(t, p, &classes)?)?))
    };
    let stage1 = report_of(&coarse_truth, &coarse_pred, m.stage1.classes().to_vec())?;
    let stage2 = report_of(&size_truth, &size_pred, m.stage2.classes().to_vec())?;
    let mut stage3 = BTreeMap::new();
    for (size, (t, p)) in &species {
        let classes = m.stage3[size].classes().to_vec();
        if let Some(r) = report_of(t, p, classes)? {
            stage3.insert(*size, r);
        }
    }
    Ok(PipelineReport {
        stage1,
        stage2,
        stage3,
        stats,
        prior_mode,
        n_birds,
        end_to_end_accuracy: end_to_end,
        analytic_accuracy: analytic,
        aircraft_accuracy: (n_air > 0).then(|| ratio(air_ok, n_air) * 100.0),
        n_aircraft: n_air,
        traces: rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnifiedReport {
    pub report: ClassReport,
    /// Percent over every sample, aircraft included.
    pub accuracy: f64,
    /// Percent over bird samples only.
    pub bird_accuracy: Option<f64>,
    pub predictions: Vec<String>,
}

pub fn evaluate_unified(m: &UnifiedModel, items: &[(&Image, &SampleLabels)]) -> Result<UnifiedReport> {
    if items.is_empty() {
        return Err(Error::validation("evaluation corpus is empty"));
    }
    let truth: Vec<String> = items
        .iter()
        .enumerate()
        .map(|(i, (_, l))| {
            crate::flocksynth::LabelKind::Unified
                .of(l)
                .ok_or_else(|| Error::validation(format!("sample {i} lacks species/aircraft truth")))
        })
        .collect::<Result<_>>()?;
    let preds: Vec<String> = items
        .par_iter()
        .map(|(img, _)| uca_predict(m, img))
        .collect::<Result<_>>()?;
    let report = class_report(&confusion(&truth, &preds, m.model.classes())?)?;
    let birds: Vec<bool> = truth.iter().map(|t| t != AIRCRAFT).collect();
    let n_birds = birds.iter().filter(|&&b| b).count();
    let bird_ok = truth
        .iter()
        .zip(&preds)
        .zip(&birds)
        .filter(|((t, p), &b)| b && t == p)
        .count();
    Ok(UnifiedReport {
        accuracy: report.accuracy,
        report,
        bird_accuracy: (n_birds > 0).then(|| ratio(bird_ok, n_birds) * 100.0),
        predictions: preds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_reproduces_reference_figure() {
        let s = StageStats::uniform(1.0, [0.97, 0.94, 0.94], [0.9286, 0.9625, 0.9762]);
        let acc = analytic_cca_accuracy(&s).unwrap();
        let oracle = (0.97 * 0.9286 + 0.94 * 0.9625 + 0.94 * 0.9762) / 3.0;
        assert!((acc - oracle).abs() < 1e-15);
        assert!((acc - 0.9077).abs() < 1e-4);
    }

    #[test]
    fn formula_rejects_bad_inputs() {
        let mut s = StageStats::uniform(1.0, [1.0; 3], [1.0; 3]);
        assert_eq!(analytic_cca_accuracy(&s).unwrap(), 1.0);
        s.priors.insert(SizeClass::Small, 0.5);
        assert!(analytic_cca_accuracy(&s).is_err());
        let s = StageStats::uniform(1.2, [1.0; 3], [1.0; 3]);
        assert!(analytic_cca_accuracy(&s).is_err());
        let mut s = StageStats::uniform(1.0, [1.0; 3], [1.0; 3]);
        s.a3.remove(&SizeClass::Large);
        assert!(analytic_cca_accuracy(&s).is_err());
    }

    struct Fixed(Vec<String>, &'static str);

    impl Classifier for Fixed {
        fn classes(&self) -> &[String] {
            &self.0
        }
        fn predict_scores(&self, _: &Image) -> Result<Vec<f64>> {
            Ok(self.0.iter().map(|c| f64::from(u8::from(c == self.1))).collect())
        }
    }

    fn fixed(classes: &[&str], out: &'static str) -> DynClassifier {
        Box::new(Fixed(classes.iter().map(|s| s.to_string()).collect(), out))
    }

    #[test]
    fn overlapping_species_sets_are_rejected() {
        let mut s3 = BTreeMap::new();
        s3.insert(SizeClass::Small, fixed(&["A", "B"], "A"));
        s3.insert(SizeClass::Medium, fixed(&["B", "C"], "B"));
        let err = CascadeModel::new(fixed(&["Bird", "Aircraft"], "Bird"), fixed(&["Small"], "Small"), s3);
        assert!(matches!(err, Err(Error::Configuration(_))));
    }

    #[test]
    fn routing_follows_each_stage() {
        let img = Image::filled(4, 4, &[0.5, 0.5, 0.5]);
        let mut s3 = BTreeMap::new();
        s3.insert(SizeClass::Medium, fixed(&["Gull"], "Gull"));
        let m = CascadeModel::new(
            fixed(&["Bird", "Aircraft"], "Bird"),
            fixed(&["Small", "Medium", "Large"], "Medium"),
            s3,
        )
        .unwrap();
        let t = cca_predict(&m, &img).unwrap();
        assert_eq!((t.stage2, t.label.as_str()), (Some(SizeClass::Medium), "Gull"));
        assert_eq!(m.species_set(SizeClass::Medium).unwrap().len(), 1);

        let m = CascadeModel::new(
            fixed(&["Bird", "Aircraft"], "Bird"),
            fixed(&["Small", "Medium", "Large"], "Large"),
            BTreeMap::new(),
        )
        .unwrap();
        assert!(matches!(cca_predict(&m, &img), Err(Error::Configuration(_))));

        let m = CascadeModel::new(
            fixed(&["Bird", "Aircraft"], "Aircraft"),
            fixed(&["Small"], "Small"),
            BTreeMap::new(),
        )
        .unwrap();
        let t = cca_predict(&m, &img).unwrap();
        assert_eq!((t.stage2, t.label.as_str()), (None, AIRCRAFT));
    }
}
