//! Demographic fairness metrics: STD, SER, FDR, IR, GARBE and the Skewed
//! Impostor Ratio (SIR).
//!
//! Genuine scores count towards the group of the subject they belong to and
//! impostor scores towards the group of the owner (the enrolled subject).
//! STD and SER are taken over per-group EERs at the global EER threshold;
//! FDR, IR and GARBE over per-group FMR/FNMR at the pooled FMR = 1% threshold.
//! Only groups present in the evaluated population form table rows.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::dataset::DemographicGroup;
use crate::error::{KvcError, Result};
use crate::metrics::{self, accuracy_at, pairwise_sum, subject_metrics, SweepCurve};
use crate::protocol::{self, ComparisonPlan, ScoreSet, SubjectScoreProfile};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    GlobalEerThreshold,
    Fmr1pctThreshold,
}

/// How subjects are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupView {
    /// Age bin crossed with gender (12 groups).
    Full,
    Age,
    Gender,
}

impl GroupView {
    fn key(self, g: DemographicGroup) -> (usize, String) {
        match self {
            GroupView::Full => (g.index(), g.to_string()),
            GroupView::Age => (g.age_bin.index(), g.age_bin.to_string()),
            GroupView::Gender => (g.gender.index(), g.gender.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub fmr: f64,
    pub fnmr: f64,
    pub eer: f64,
    pub accuracy: f64,
    pub genuine_scores: usize,
    pub impostor_scores: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupErrorTable {
    pub view: GroupView,
    pub policy: ThresholdPolicy,
    pub threshold: f64,
    pub rows: Vec<GroupRow>,
}

impl GroupErrorTable {
    pub fn eers(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eer).collect()
    }

    pub fn fmrs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fmr).collect()
    }

    pub fn fnmrs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fnmr).collect()
    }
}

fn label_of(
    labels: &BTreeMap<String, DemographicGroup>,
    subject_id: &str,
) -> Result<DemographicGroup> {
    labels.get(subject_id).copied().ok_or_else(|| {
        KvcError::Fairness(format!("subject {subject_id:?} has no demographic label"))
    })
}

/// Per-group FMR/FNMR/accuracy at `threshold` and each group's own EER.
pub fn group_table(
    profiles: &[SubjectScoreProfile],
    labels: &BTreeMap<String, DemographicGroup>,
    view: GroupView,
    threshold: f64,
    policy: ThresholdPolicy,
) -> Result<GroupErrorTable> {
    let mut pools: BTreeMap<usize, (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in profiles {
        let (ix, name) = view.key(label_of(labels, &p.subject_id)?);
        let entry = pools
            .entry(ix)
            .or_insert_with(|| (name, Vec::new(), Vec::new()));
        entry.1.extend(&p.genuine);
        entry.2.extend(p.impostor());
    }
    let mut rows = Vec::with_capacity(pools.len());
    for (_, (group, genuine, impostor)) in pools {
        if genuine.is_empty() || impostor.is_empty() {
            return Err(KvcError::Fairness(format!("group {group} has no scores")));
        }
        let fmr =
            impostor.iter().filter(|&&s| s >= threshold).count() as f64 / impostor.len() as f64;
        let fnmr = genuine.iter().filter(|&&s| s < threshold).count() as f64 / genuine.len() as f64;
        rows.push(GroupRow {
            eer: metrics::eer(&genuine, &impostor)?.rate,
            accuracy: accuracy_at(&genuine, &impostor, threshold),
            genuine_scores: genuine.len(),
            impostor_scores: impostor.len(),
            group,
            fmr,
            fnmr,
        });
    }
    Ok(GroupErrorTable {
        view,
        policy,
        threshold,
        rows,
    })
}

fn require_two(cells: &[f64], what: &str) -> Result<()> {
    if cells.len() < 2 {
        return Err(KvcError::Fairness(format!(
            "{what} needs at least 2 groups, got {}",
            cells.len()
        )));
    }
    Ok(())
}

fn min_max(cells: &[f64]) -> (f64, f64) {
    cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        })
}

/// Population standard deviation of per-group error rates (fractions), in percent.
pub fn std_metric(cells: &[f64]) -> Result<f64> {
    require_two(cells, "STD")?;
    let n = cells.len() as f64;
    let mean = shifted_mean(cells);
    let var = cells.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok(100.0 * var.sqrt())
}

/// Largest over smallest error rate; infinite when the smallest is 0.
pub fn ser_metric(cells: &[f64]) -> Result<f64> {
    require_two(cells, "SER")?;
    let (lo, hi) = min_max(cells);
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Mean computed around the first value, exact when all values are equal.
fn shifted_mean(v: &[f64]) -> f64 {
    v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64
}

fn max_spread(cells: &[f64]) -> f64 {
    let (lo, hi) = min_max(cells);
    hi - lo
}

/// Fairness Discrepancy Rate, 1 = fair:
/// `1 - (alpha * max|FMR_i - FMR_j| + (1 - alpha) * max|FNMR_i - FNMR_j|)`.
pub fn fdr(fmrs: &[f64], fnmrs: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    require_two(fmrs, "FDR")?;
    Ok(1.0 - (alpha * max_spread(fmrs) + (1.0 - alpha) * max_spread(fnmrs)))
}

/// Inequity Rate, 1 = fair: `(max FMR / min FMR)^alpha * (max FNMR / min FNMR)^(1 - alpha)`.
/// Infinite when either minimum is 0.
pub fn ir(fmrs: &[f64], fnmrs: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    require_two(fmrs, "IR")?;
    let (fmr_lo, fmr_hi) = min_max(fmrs);
    let (fnmr_lo, fnmr_hi) = min_max(fnmrs);
    if fmr_lo <= 0.0 || fnmr_lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((fmr_hi / fmr_lo).powf(alpha) * (fnmr_hi / fnmr_lo).powf(1.0 - alpha))
}

/// Gini coefficient with the `n / (n - 1)` small-sample correction; 0 when the mean is 0.
pub fn gini(rates: &[f64]) -> Result<f64> {
    require_two(rates, "Gini")?;
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let abs_diff: f64 = rates
        .iter()
        .map(|a| rates.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(n / (n - 1.0) * abs_diff / (2.0 * n * n * mean))
}

/// GARBE, 0 = fair: `alpha * G(FMR) + (1 - alpha) * G(FNMR)`.
pub fn garbe(fmrs: &[f64], fnmrs: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * gini(fmrs)? + (1.0 - alpha) * gini(fnmrs)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KvcError::Invalid(format!("alpha {alpha} not in [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Age,
    Gender,
}

/// Symmetric matrix of mean impostor scores between attribute values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SirMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

impl SirMatrix {
    /// From precomputed cell means; `cells` must be square and symmetric.
    pub fn from_cells(labels: Vec<String>, cells: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if n < 2 || cells.len() != n || cells.iter().any(|r| r.len() != n) {
            return Err(KvcError::Fairness(
                "SIR matrix must be square with n >= 2".into(),
            ));
        }
        let symmetric = (0..n).all(|i| (0..i).all(|j| cells[i][j] == cells[j][i]));
        if !symmetric {
            return Err(KvcError::Fairness("SIR matrix is not symmetric".into()));
        }
        Ok(Self {
            labels,
            counts: vec![vec![1; n]; n],
            cells,
        })
    }

    /// `100 * (mean(diagonal) / mean(strict upper triangle) - 1)`.
    pub fn sir(&self) -> f64 {
        let n = self.labels.len();
        let diag: Vec<f64> = (0..n).map(|i| self.cells[i][i]).collect();
        let upper: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.cells[i][j])
            .collect();
        100.0 * (shifted_mean(&diag) / shifted_mean(&upper) - 1.0)
    }
}

/// Builds the SIR matrix over the attribute values present among the plan's subjects.
pub fn sir_matrix(
    plan: &ComparisonPlan,
    probes: &[protocol::ProbeScore],
    labels: &BTreeMap<String, DemographicGroup>,
    attribute: Attribute,
) -> Result<SirMatrix> {
    let view = match attribute {
        Attribute::Age => GroupView::Age,
        Attribute::Gender => GroupView::Gender,
    };
    let keys: Vec<(usize, String)> = plan
        .subjects
        .iter()
        .map(|s| label_of(labels, &s.subject_id).map(|g| view.key(g)))
        .collect::<Result<_>>()?;
    let present: BTreeMap<usize, String> = keys.iter().cloned().collect();
    let n = present.len();
    if n < 2 {
        return Err(KvcError::Fairness(format!(
            "SIR over {attribute:?} needs at least 2 groups, got {n}"
        )));
    }
    let slot: BTreeMap<usize, usize> = present.keys().enumerate().map(|(k, &ix)| (ix, k)).collect();
    let mut sum = vec![vec![0.0; n]; n];
    let mut count = vec![vec![0u64; n]; n];
    for p in probes.iter().filter(|p| p.role.is_impostor()) {
        let a = slot[&keys[p.owner as usize].0];
        let b = slot[&keys[p.probe_subject as usize].0];
        let (i, j) = (a.min(b), a.max(b));
        sum[i][j] += p.score;
        count[i][j] += 1;
    }
    let names: Vec<String> = present.into_values().collect();
    let mut cells = vec![vec![0.0; n]; n];
    let mut counts = vec![vec![0u64; n]; n];
    for i in 0..n {
        for j in i..n {
            if count[i][j] == 0 {
                return Err(KvcError::Fairness(format!(
                    "no impostor comparisons between {} and {}",
                    names[i], names[j]
                )));
            }
            let mean = sum[i][j] / count[i][j] as f64;
            cells[i][j] = mean;
            cells[j][i] = mean;
            counts[i][j] = count[i][j];
            counts[j][i] = count[i][j];
        }
    }
    Ok(SirMatrix {
        labels: names,
        cells,
        counts,
    })
}

/// Skewed Impostor Ratio in percent for one attribute.
pub fn sir(
    plan: &ComparisonPlan,
    scores: &ScoreSet,
    labels: &BTreeMap<String, DemographicGroup>,
    attribute: Attribute,
) -> Result<f64> {
    let probes = protocol::aggregate_probes(plan, scores)?;
    Ok(sir_matrix(plan, &probes, labels, attribute)?.sir())
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPolicies {
    pub std_ser: ThresholdPolicy,
    pub fdr_ir_garbe: ThresholdPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub std_pct: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub ser: f64,
    pub ser_infinite: bool,
    pub fdr: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub ir: f64,
    pub ir_infinite: bool,
    pub garbe: f64,
    pub sir_age_pct: f64,
    pub sir_gender_pct: f64,
    pub alpha: f64,
    pub threshold_policy: ThresholdPolicies,
    /// STD/SER over per-group error rate `1 - accuracy` at the global EER threshold.
    pub std_error_at_threshold_pct: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub ser_error_at_threshold: f64,
    /// STD/SER over per-group means of per-subject EERs.
    pub mean_per_subject_std_pct: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub mean_per_subject_ser: f64,
    pub eer_threshold_table: GroupErrorTable,
    pub fmr_1pct_table: GroupErrorTable,
    pub sir_age_matrix: SirMatrix,
    pub sir_gender_matrix: SirMatrix,
}

pub fn fairness_report(
    plan: &ComparisonPlan,
    scores: &ScoreSet,
    labels: &BTreeMap<String, DemographicGroup>,
    alpha: f64,
) -> Result<FairnessReport> {
    check_alpha(alpha)?;
    let probes = protocol::aggregate_probes(plan, scores)?;
    let profiles = protocol::profiles_from_probes(plan, &probes);
    let (genuine, impostor) = metrics::pooled(&profiles);
    let curve: SweepCurve = metrics::sweep(&genuine, &impostor)?;
    let eer_threshold = curve.eer().threshold;
    let fmr_threshold = curve.threshold_at_fmr(0.01);

    let at_eer = group_table(
        &profiles,
        labels,
        GroupView::Full,
        eer_threshold,
        ThresholdPolicy::GlobalEerThreshold,
    )?;
    let at_fmr = group_table(
        &profiles,
        labels,
        GroupView::Full,
        fmr_threshold,
        ThresholdPolicy::Fmr1pctThreshold,
    )?;

    let eers = at_eer.eers();
    let errors: Vec<f64> = at_eer.rows.iter().map(|r| 1.0 - r.accuracy).collect();
    let per_subject = per_subject_group_eers(&profiles, labels)?;
    let ser = ser_metric(&eers)?;
    let ir_value = ir(&at_fmr.fmrs(), &at_fmr.fnmrs(), alpha)?;

    Ok(FairnessReport {
        std_pct: std_metric(&eers)?,
        ser,
        ser_infinite: ser.is_infinite(),
        fdr: fdr(&at_fmr.fmrs(), &at_fmr.fnmrs(), alpha)?,
        ir: ir_value,
        ir_infinite: ir_value.is_infinite(),
        garbe: garbe(&at_fmr.fmrs(), &at_fmr.fnmrs(), alpha)?,
        sir_age_pct: 0.0,
        sir_gender_pct: 0.0,
        alpha,
        threshold_policy: ThresholdPolicies {
            std_ser: ThresholdPolicy::GlobalEerThreshold,
            fdr_ir_garbe: ThresholdPolicy::Fmr1pctThreshold,
        },
        std_error_at_threshold_pct: std_metric(&errors)?,
        ser_error_at_threshold: ser_metric(&errors)?,
        mean_per_subject_std_pct: std_metric(&per_subject)?,
        mean_per_subject_ser: ser_metric(&per_subject)?,
        eer_threshold_table: at_eer,
        fmr_1pct_table: at_fmr,
        sir_age_matrix: sir_matrix(plan, &probes, labels, Attribute::Age)?,
        sir_gender_matrix: sir_matrix(plan, &probes, labels, Attribute::Gender)?,
    })
    .map(|mut r| {
        r.sir_age_pct = r.sir_age_matrix.sir();
        r.sir_gender_pct = r.sir_gender_matrix.sir();
        r
    })
}

/// Mean per-subject EER for each present group.
fn per_subject_group_eers(
    profiles: &[SubjectScoreProfile],
    labels: &BTreeMap<String, DemographicGroup>,
) -> Result<Vec<f64>> {
    let mut by_group: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in profiles {
        let g = label_of(labels, &p.subject_id)?;
        by_group
            .entry(g.index())
            .or_default()
            .push(subject_metrics(p)?.eer);
    }
    Ok(by_group
        .into_values()
        .map(|v| pairwise_sum(&v) / v.len() as f64)
        .collect())
}
