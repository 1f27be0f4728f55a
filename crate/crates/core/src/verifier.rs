//! Similarity scoring for comparison plans.
//!
//! The shipped baseline maps each session to a fixed statistical embedding,
//! z-scales every dimension with statistics of the evaluated batch and uses
//! Euclidean distance. Distances over the whole plan are min-max normalized
//! and subtracted from 1, so scores are batch-relative.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{KvcError, Result};
use crate::features::{extract, feature_matrix_stats, FeatureSequence, FeatureSetId};
use crate::protocol::{ComparisonPlan, ScoreSet};

/// Per channel (mean, std, median), then the log of the session length.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn width(&self) -> usize {
        self.0.len()
    }
}

pub fn embed(seq: &FeatureSequence) -> Embedding {
    let stats = feature_matrix_stats(seq);
    let mut v = Vec::with_capacity(3 * stats.len() + 1);
    for s in stats {
        v.extend([s.mean, s.std, s.median]);
    }
    v.push((seq.len().max(1) as f64).ln());
    Embedding(v)
}

/// Euclidean distance. Inputs are expected to be standardized already.
pub fn distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.width() != b.width() {
        return Err(KvcError::Invalid(format!(
            "embedding widths differ: {} vs {}",
            a.width(),
            b.width()
        )));
    }
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Dimension-wise z-scaling fitted on a batch of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Constant dimensions keep scale 1.
    pub fn fit<'a>(batch: impl IntoIterator<Item = &'a Embedding>) -> Result<Self> {
        let batch: Vec<&Embedding> = batch.into_iter().collect();
        let first = batch
            .first()
            .ok_or_else(|| KvcError::Invalid("empty embedding batch".into()))?;
        let w = first.width();
        if batch.iter().any(|e| e.width() != w) {
            return Err(KvcError::Invalid("mixed embedding widths in batch".into()));
        }
        let n = batch.len() as f64;
        let mut mean = vec![0.0; w];
        for e in &batch {
            for (m, x) in mean.iter_mut().zip(&e.0) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for e in &batch {
            for ((v, x), m) in var.iter_mut().zip(&e.0).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, e: &Embedding) -> Embedding {
        Embedding(
            e.0.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((x, m), s)| (x - m) / s)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierOutput {
    pub distances: Vec<f64>,
    pub scores: ScoreSet,
}

/// `1 - (d - min) / (max - min)` over the batch; all 0.5 when every distance is equal.
pub fn similarities(distances: &[f64]) -> Result<ScoreSet> {
    let (lo, hi) = distances
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    let range = hi - lo;
    let scores = if distances.is_empty() || range == 0.0 {
        vec![0.5; distances.len()]
    } else {
        distances
            .iter()
            .map(|&d| (1.0 - (d - lo) / range).clamp(0.0, 1.0))
            .collect()
    };
    ScoreSet::new(scores)
}

/// Anything that can score a comparison plan against a dataset.
pub trait Verifier {
    fn score_plan(&self, plan: &ComparisonPlan, dataset: &Dataset) -> Result<VerifierOutput>;
}

/// Training-free statistical baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatisticalVerifier {
    pub feature_set: FeatureSetId,
}

impl StatisticalVerifier {
    pub fn new(feature_set: FeatureSetId) -> Self {
        Self { feature_set }
    }
}

impl Verifier for StatisticalVerifier {
    fn score_plan(&self, plan: &ComparisonPlan, dataset: &Dataset) -> Result<VerifierOutput> {
        score_plan(plan, dataset, self.feature_set)
    }
}

struct SubjectEmbeddings {
    enrolment: Vec<Embedding>,
    verification: Vec<Embedding>,
}

pub fn score_plan(
    plan: &ComparisonPlan,
    dataset: &Dataset,
    feature_set: FeatureSetId,
) -> Result<VerifierOutput> {
    let embed_session = |subject_id: &str, session_id: &str| -> Result<Embedding> {
        let session =
            dataset
                .session(subject_id, session_id)
                .ok_or_else(|| KvcError::MissingSession {
                    subject_id: subject_id.to_owned(),
                    session_id: session_id.to_owned(),
                })?;
        Ok(embed(&extract(session, feature_set)?))
    };
    let raw: Vec<SubjectEmbeddings> = plan
        .subjects
        .par_iter()
        .map(|s| {
            let embed_all = |ids: &[String]| {
                ids.iter()
                    .map(|id| embed_session(&s.subject_id, id))
                    .collect::<Result<Vec<_>>>()
            };
            Ok(SubjectEmbeddings {
                enrolment: embed_all(&s.enrolment)?,
                verification: embed_all(&s.verification)?,
            })
        })
        .collect::<Result<_>>()?;

    let standardizer = Standardizer::fit(
        raw.iter()
            .flat_map(|s| s.enrolment.iter().chain(&s.verification)),
    )?;
    let scaled: Vec<SubjectEmbeddings> = raw
        .par_iter()
        .map(|s| SubjectEmbeddings {
            enrolment: s.enrolment.iter().map(|e| standardizer.apply(e)).collect(),
            verification: s
                .verification
                .iter()
                .map(|e| standardizer.apply(e))
                .collect(),
        })
        .collect();

    let distances: Vec<f64> = plan
        .records
        .par_iter()
        .map(|r| {
            let enrol = &scaled[r.owner as usize].enrolment[r.enrol_index as usize];
            let probe = &scaled[r.probe_subject as usize].verification[r.probe_session as usize];
            distance(enrol, probe)
        })
        .collect::<Result<_>>()?;
    let scores = similarities(&distances)?;
    Ok(VerifierOutput { distances, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{KeyEvent, Session};

    fn seq(fs: FeatureSetId, events: &[(i64, i64)]) -> FeatureSequence {
        let s = Session::new(
            "s",
            events
                .iter()
                .map(|&(p, r)| KeyEvent::new(97, p, r).unwrap())
                .collect(),
        );
        extract(&s, fs).unwrap()
    }

    #[test]
    fn embedding_shape() {
        let ev = [(0, 80), (200, 280), (400, 480), (600, 680), (800, 880)];
        let e = embed(&seq(FeatureSetId::F4, &ev));
        assert_eq!(e.width(), 13);
        assert_eq!(embed(&seq(FeatureSetId::F11, &ev)).width(), 34);
        // Constant timing: every std component is zero.
        for c in 0..4 {
            assert_eq!(e.0[3 * c + 1], 0.0);
        }
        assert_eq!(e, embed(&seq(FeatureSetId::F4, &ev)));
        assert!((e.0[12] - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let a = Embedding(vec![0.0, 0.0]);
        let b = Embedding(vec![3.0, 4.0]);
        assert_eq!(distance(&a, &b).unwrap(), 5.0);
        assert_eq!(distance(&b, &b).unwrap(), 0.0);
        assert_eq!(distance(&a, &b).unwrap(), distance(&b, &a).unwrap());
        assert!(distance(&a, &Embedding(vec![1.0])).is_err());
    }

    #[test]
    fn normalization_examples() {
        let s = similarities(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(s.values(), &[1.0, 0.5, 0.0]);
        let s = similarities(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let batch = vec![Embedding(vec![1.0, 5.0]), Embedding(vec![3.0, 5.0])];
        let st = Standardizer::fit(&batch).unwrap();
        assert_eq!(st.apply(&batch[0]).0, vec![-1.0, 0.0]);
        assert_eq!(st.apply(&batch[1]).0, vec![1.0, 0.0]);
    }
}
