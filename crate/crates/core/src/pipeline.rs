//! File-to-file pipeline stages behind the command line.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use crate::dataset::{self, validate_for_evaluation, Dataset, ValidationReport};
use crate::error::{KvcError, Result};
use crate::fairness::{self, FairnessReport};
use crate::features::{extract, FeatureSetId};
use crate::metrics::{self, CurveFiles, VerificationReport};
use crate::protocol::{self, build_plan, ComparisonPlan, ScoreSet};
use crate::synth::{self, SynthConfig};
use crate::verifier;

pub const EVENTS_FILE: &str = "events.csv";
pub const METADATA_FILE: &str = "metadata.csv";
pub const PLAN_FILE: &str = "plan.csv";
pub const BLIND_PLAN_FILE: &str = "blind_plan.csv";

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| KvcError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| KvcError::io(path, e))
}

/// Loads events and, when given, attaches demographic labels.
pub fn load_dataset(events: &Path, metadata: Option<&Path>) -> Result<Dataset> {
    let d = dataset::load_events(events)?;
    match metadata {
        Some(m) => dataset::load_metadata(m, d),
        None => Ok(d),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub subjects: usize,
    pub sessions: usize,
    pub events: usize,
    pub floored: u64,
    pub events_file: PathBuf,
    pub metadata_file: PathBuf,
}

/// Writes `events.csv` and `metadata.csv` for a synthetic population.
pub fn run_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    let out = synth::generate(cfg)?;
    let events_file = out_dir.join(EVENTS_FILE);
    let metadata_file = out_dir.join(METADATA_FILE);
    dataset::save_events(&out.dataset, &events_file)?;
    dataset::save_metadata(&out.dataset, &metadata_file)?;
    Ok(SynthSummary {
        subjects: out.dataset.subjects.len(),
        sessions: out.dataset.session_count(),
        events: out.dataset.event_count(),
        floored: out.floored,
        events_file,
        metadata_file,
    })
}

pub fn run_validate(events: &Path, metadata: Option<&Path>) -> Result<ValidationReport> {
    Ok(validate_for_evaluation(&load_dataset(events, metadata)?))
}

/// Writes one feature CSV per session as `<subject>__<session>.csv`.
pub fn run_extract(events: &Path, feature_set: FeatureSetId, out_dir: &Path) -> Result<usize> {
    let d = dataset::load_events(events)?;
    let mut written = 0;
    for subject in d.subjects.values() {
        for session in subject.sessions.values() {
            let seq = extract(session, feature_set)?;
            let name = format!("{}__{}.csv", subject.subject_id, session.session_id);
            seq.write_csv(out_dir.join(name))?;
            written += 1;
        }
    }
    Ok(written)
}

/// Validates the dataset, builds the plan and writes the full and blind plan files.
pub fn run_plan(
    events: &Path,
    metadata: &Path,
    seed: u64,
    out_dir: &Path,
) -> Result<ComparisonPlan> {
    let d = load_dataset(events, Some(metadata))?;
    let report = validate_for_evaluation(&d);
    if !report.is_clean() {
        return Err(KvcError::Protocol(format!(
            "dataset is not ready for evaluation: {} with too few sessions, {} unlabeled, {} short sessions",
            report.insufficient_sessions.len(),
            report.unlabeled.len(),
            report.short_sessions.len()
        )));
    }
    let plan = build_plan(&d, seed)?;
    let mut seen = std::collections::HashSet::new();
    let shared = d
        .subjects
        .values()
        .flat_map(|s| s.sessions.keys())
        .any(|id| !seen.insert(id));
    if shared {
        warn!("session ids repeat across subjects; {BLIND_PLAN_FILE} rows are ambiguous");
    }
    plan.write_csv(out_dir.join(PLAN_FILE))?;
    plan.write_blind_csv(out_dir.join(BLIND_PLAN_FILE))?;
    info!(
        "plan with {} comparisons for {} subjects",
        plan.len(),
        plan.subjects.len()
    );
    Ok(plan)
}

/// Scores every plan row with the statistical baseline and writes one score per line.
pub fn run_score(
    events: &Path,
    plan: &Path,
    feature_set: FeatureSetId,
    out: &Path,
) -> Result<ScoreSet> {
    let d = dataset::load_events(events)?;
    let plan = ComparisonPlan::read_csv(plan)?;
    let scores = verifier::score_plan(&plan, &d, feature_set)?.scores;
    scores.write(out)?;
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportModes {
    Global,
    MeanPerSubject,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub global: Option<VerificationReport>,
    pub mean_per_subject: Option<VerificationReport>,
    pub fairness: Option<FairnessReport>,
    pub curves: CurveFiles,
}

/// Reads a plan and its scores and writes the metric reports into `out_dir`.
///
/// Fairness is only computed when demographic metadata is supplied.
pub fn run_evaluate(
    plan: &Path,
    scores: &Path,
    metadata: Option<&Path>,
    alpha: f64,
    modes: ReportModes,
    out_dir: &Path,
) -> Result<Evaluation> {
    let plan = ComparisonPlan::read_csv(plan)?;
    let scores = ScoreSet::read(scores)?;
    if scores.len() != plan.len() {
        return Err(KvcError::LengthMismatch {
            expected: plan.len(),
            actual: scores.len(),
        });
    }
    let probes = protocol::aggregate_probes(&plan, &scores)?;
    let profiles = protocol::profiles_from_probes(&plan, &probes);
    protocol::write_profiles(&profiles, out_dir.join("profiles.json"))?;

    let global = match modes {
        ReportModes::MeanPerSubject => None,
        _ => Some(metrics::evaluate_global(&profiles)?),
    };
    let mean_per_subject = match modes {
        ReportModes::Global => None,
        _ => Some(metrics::evaluate_per_subject(&profiles)?),
    };
    if let Some(r) = &global {
        write_json(r, &out_dir.join("report_global.json"))?;
    }
    if let Some(r) = &mean_per_subject {
        write_json(r, &out_dir.join("report_mean_per_subject.json"))?;
    }

    let fairness = match metadata {
        Some(m) => {
            let labels = dataset::read_metadata(m)?;
            let report = fairness::fairness_report(&plan, &scores, &labels, alpha)?;
            write_json(&report, &out_dir.join("fairness.json"))?;
            Some(report)
        }
        None => None,
    };

    let genuine: Vec<f64> = profiles
        .iter()
        .flat_map(|p| p.genuine.iter().copied())
        .collect();
    let similar: Vec<f64> = profiles
        .iter()
        .flat_map(|p| p.similar_impostor.iter().copied())
        .collect();
    let dissimilar: Vec<f64> = profiles
        .iter()
        .flat_map(|p| p.dissimilar_impostor.iter().copied())
        .collect();
    let curves = metrics::emit_curves(&genuine, &similar, &dissimilar, out_dir)?;
    Ok(Evaluation {
        global,
        mean_per_subject,
        fairness,
        curves,
    })
}
