use serde::{Deserialize, Serialize};

use super::cascade::DynClassifier;
use crate::error::{Error, Result};
use crate::flocksynth::FormationKind;
use crate::raster::Image;

/// Bottom-view formation classifier; the side-view alignment classifier
/// only runs on Column predictions.
pub struct FlockCascade {
    pub bottom: DynClassifier,
    pub side: DynClassifier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlockPrediction {
    pub formation: String,
    pub alignment: Option<String>,
}

pub fn flock_cascade_predict(m: &FlockCascade, bottom: &Image, side: Option<&Image>) -> Result<FlockPrediction> {
    let formation = m.bottom.predict(bottom)?;
    if formation != FormationKind::Column.as_str() {
        return Ok(FlockPrediction {
            formation,
            alignment: None,
        });
    }
    let side = side.ok_or_else(|| {
        Error::MissingInput("formation predicted as Column but no side-view image was supplied".into())
    })?;
    Ok(FlockPrediction {
        formation,
        alignment: Some(m.side.predict(side)?),
    })
}

/// One evaluation case: a bottom view with its formation and, for Column
/// flocks, a paired side view with its alignment.
pub struct FlockCase<'a> {
    pub bottom: &'a Image,
    pub formation: String,
    pub side: Option<(&'a Image, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlockCascadeReport {
    /// Percent of cases whose formation is right.
    pub formation_accuracy: f64,
    /// Fraction of true Column cases predicted Column.
    pub column_recall: f64,
    /// Fraction of correctly routed Column cases whose alignment is right.
    pub side_accuracy: f64,
    /// Fraction of true Column cases right on both formation and alignment.
    pub column_end_to_end: f64,
    /// Percent correct over non-Column cases.
    pub non_column_accuracy: Option<f64>,
    pub n_cases: usize,
    pub n_column: usize,
}

pub fn evaluate_flock_cascade(m: &FlockCascade, cases: &[FlockCase<'_>]) -> Result<FlockCascadeReport> {
    if cases.is_empty() {
        return Err(Error::validation("no flock cases to evaluate"));
    }
    let column = FormationKind::Column.as_str();
    let (mut formation_ok, mut n_column, mut routed, mut both, mut n_other, mut other_ok) = (0, 0, 0, 0, 0, 0);
    for (i, c) in cases.iter().enumerate() {
        let is_column = c.formation == column;
        if is_column && c.side.is_none() {
            return Err(Error::validation(format!("Column case {i} has no side view")));
        }
        let pred = flock_cascade_predict(m, c.bottom, c.side.as_ref().map(|s| s.0))?;
        let ok = pred.formation == c.formation;
        formation_ok += usize::from(ok);
        if is_column {
            n_column += 1;
            if ok {
                routed += 1;
                let truth = &c.side.as_ref().expect("checked").1;
                both += usize::from(pred.alignment.as_ref() == Some(truth));
            }
        } else {
            n_other += 1;
            other_ok += usize::from(ok);
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(FlockCascadeReport {
        formation_accuracy: frac(formation_ok, cases.len()) * 100.0,
        column_recall: frac(routed, n_column),
        side_accuracy: frac(both, routed),
        column_end_to_end: frac(both, n_column),
        non_column_accuracy: (n_other > 0).then(|| frac(other_ok, n_other) * 100.0),
        n_cases: cases.len(),
        n_column,
    })
}
