//! Verification metrics and curve data.
//!
//! Scores are similarities: a comparison is a match iff `score >= threshold`,
//! so ties count as matches. FMR is the fraction of impostor scores accepted,
//! FNMR the fraction of genuine scores rejected.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KvcError, Result};
use crate::protocol::{SubjectScoreProfile, PROBES_PER_ROLE};
use crate::textio::create;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

/// Error rates at every distinct score value, bracketed by one threshold
/// below the minimum (FMR 1, FNMR 0) and one above the maximum (FMR 0, FNMR 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

fn checked_sorted(scores: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(KvcError::EmptyScores(what));
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(KvcError::ScoreOutOfRange { index, value });
    }
    let mut v = scores.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

pub fn sweep(genuine: &[f64], impostor: &[f64]) -> Result<SweepCurve> {
    let g = checked_sorted(genuine, "genuine")?;
    let i = checked_sorted(impostor, "impostor")?;
    Ok(sweep_sorted(&g, &i))
}

fn sweep_sorted(g: &[f64], i: &[f64]) -> SweepCurve {
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let lo = g[0].min(i[0]);
    let hi = g[g.len() - 1].max(i[i.len() - 1]);
    let mut points = Vec::with_capacity(g.len() + i.len() + 2);
    points.push(SweepPoint {
        threshold: lo.next_down(),
        fmr: 1.0,
        fnmr: 0.0,
    });
    // gi / ii: how many genuine / impostor scores lie strictly below the threshold.
    let (mut gi, mut ii) = (0usize, 0usize);
    while gi < g.len() || ii < i.len() {
        let t = match (g.get(gi), i.get(ii)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        points.push(SweepPoint {
            threshold: t,
            fmr: (i.len() - ii) as f64 / ni,
            fnmr: gi as f64 / ng,
        });
        while gi < g.len() && g[gi] == t {
            gi += 1;
        }
        while ii < i.len() && i[ii] == t {
            ii += 1;
        }
    }
    points.push(SweepPoint {
        threshold: hi.next_up(),
        fmr: 0.0,
        fnmr: 1.0,
    });
    SweepCurve { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eer {
    pub rate: f64,
    pub threshold: f64,
}

impl SweepCurve {
    /// Crossing of FMR and FNMR, linearly interpolated between the two sweep
    /// points where `FMR - FNMR` changes sign.
    pub fn eer(&self) -> Eer {
        let p = &self.points;
        let k = p
            .iter()
            .position(|q| q.fmr - q.fnmr <= 0.0)
            .expect("last sweep point has FMR 0 and FNMR 1");
        let d1 = p[k].fmr - p[k].fnmr;
        if d1 == 0.0 {
            return Eer {
                rate: p[k].fmr,
                threshold: p[k].threshold,
            };
        }
        let (a, b) = (p[k - 1], p[k]);
        let d0 = a.fmr - a.fnmr;
        let t = d0 / (d0 - d1);
        Eer {
            rate: a.fmr + t * (b.fmr - a.fmr),
            threshold: a.threshold + t * (b.threshold - a.threshold),
        }
    }

    /// First sweep point (lowest threshold) whose FMR does not exceed `target`.
    fn first_at_or_below(&self, target: f64) -> usize {
        self.points
            .iter()
            .position(|q| q.fmr <= target)
            .expect("last sweep point has FMR 0")
    }

    /// Lowest threshold with FMR at most `target`.
    pub fn threshold_at_fmr(&self, target: f64) -> f64 {
        self.points[self.first_at_or_below(target)].threshold
    }

    /// FNMR where FMR reaches `target`, interpolated between the bracketing
    /// points; equals the point's FNMR when FMR hits `target` exactly.
    pub fn fnmr_at_fmr(&self, target: f64) -> f64 {
        let k = self.first_at_or_below(target);
        let b = self.points[k];
        if k == 0 || b.fmr == target {
            return b.fnmr;
        }
        let a = self.points[k - 1];
        let t = (a.fmr - target) / (a.fmr - b.fmr);
        a.fnmr + t * (b.fnmr - a.fnmr)
    }

    /// Trapezoidal area under the ROC curve (TMR against FMR).
    pub fn roc_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[0].fmr - w[1].fmr) * ((1.0 - w[0].fnmr) + (1.0 - w[1].fnmr)) * 0.5)
            .sum()
    }
}

pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<Eer> {
    Ok(sweep(genuine, impostor)?.eer())
}

pub fn fnmr_at_fmr(genuine: &[f64], impostor: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(KvcError::Invalid(format!(
            "target FMR {target} not in (0, 1)"
        )));
    }
    Ok(sweep(genuine, impostor)?.fnmr_at_fmr(target))
}

/// Mann-Whitney statistic: `P(g > i) + 0.5 P(g = i)` over all genuine-impostor pairs.
pub fn auc(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    let g = checked_sorted(genuine, "genuine")?;
    let i = checked_sorted(impostor, "impostor")?;
    Ok(auc_sorted(&g, &i))
}

fn auc_sorted(g: &[f64], i: &[f64]) -> f64 {
    // Twice the pair count keeps ties integral.
    let mut doubled: u128 = 0;
    let (mut below, mut upto) = (0usize, 0usize);
    for &x in i {
        while below < g.len() && g[below] < x {
            below += 1;
        }
        upto = upto.max(below);
        while upto < g.len() && g[upto] <= x {
            upto += 1;
        }
        let greater = g.len() - upto;
        let equal = upto - below;
        doubled += 2 * greater as u128 + equal as u128;
    }
    doubled as f64 / (2.0 * g.len() as f64 * i.len() as f64)
}

/// Fraction of correctly classified comparisons at `threshold`.
pub fn accuracy_at(genuine: &[f64], impostor: &[f64], threshold: f64) -> f64 {
    let total = genuine.len() + impostor.len();
    if total == 0 {
        return 0.0;
    }
    let accepted = genuine.iter().filter(|&&g| g >= threshold).count();
    let rejected = impostor.iter().filter(|&&i| i < threshold).count();
    (accepted + rejected) as f64 / total as f64
}

/// Fraction of genuine scores ranked within the top `n` against the profile's
/// 20 impostor scores. An impostor equal to the genuine score outranks it.
pub fn rank_n(profile: &SubjectScoreProfile, n: usize) -> Result<f64> {
    if !profile.is_complete() {
        return Err(KvcError::Invalid(format!(
            "profile {} is incomplete",
            profile.subject_id
        )));
    }
    let hits = profile
        .genuine
        .iter()
        .filter(|&&g| profile.impostor().filter(|&i| i >= g).count() < n)
        .count();
    Ok(hits as f64 / PROBES_PER_ROLE as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Global,
    MeanPerSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub eer: f64,
    pub eer_threshold: Option<f64>,
    pub fnmr_at_fmr_1: Option<f64>,
    pub fnmr_at_fmr_10: Option<f64>,
    pub auc: f64,
    pub accuracy: f64,
    pub rank1: Option<f64>,
    pub mode: EvalMode,
}

/// Genuine and impostor (similar then dissimilar) scores of all profiles.
pub fn pooled(profiles: &[SubjectScoreProfile]) -> (Vec<f64>, Vec<f64>) {
    let genuine = profiles
        .iter()
        .flat_map(|p| p.genuine.iter().copied())
        .collect();
    let impostor = profiles.iter().flat_map(|p| p.impostor()).collect();
    (genuine, impostor)
}

/// One decision threshold for all subjects.
pub fn evaluate_global(profiles: &[SubjectScoreProfile]) -> Result<VerificationReport> {
    let (genuine, impostor) = pooled(profiles);
    let g = checked_sorted(&genuine, "genuine")?;
    let i = checked_sorted(&impostor, "impostor")?;
    let curve = sweep_sorted(&g, &i);
    let eer = curve.eer();
    Ok(VerificationReport {
        eer: eer.rate,
        eer_threshold: Some(eer.threshold),
        fnmr_at_fmr_1: Some(curve.fnmr_at_fmr(0.01)),
        fnmr_at_fmr_10: Some(curve.fnmr_at_fmr(0.10)),
        auc: auc_sorted(&g, &i),
        accuracy: accuracy_at(&g, &i, eer.threshold),
        rank1: None,
        mode: EvalMode::Global,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubjectMetrics {
    pub eer: f64,
    pub eer_threshold: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub rank1: f64,
}

/// EER, AUC, accuracy at its own EER threshold, and rank-1 for one subject.
pub fn subject_metrics(profile: &SubjectScoreProfile) -> Result<SubjectMetrics> {
    let impostor: Vec<f64> = profile.impostor().collect();
    let g = checked_sorted(&profile.genuine, "genuine")?;
    let i = checked_sorted(&impostor, "impostor")?;
    let eer = sweep_sorted(&g, &i).eer();
    Ok(SubjectMetrics {
        eer: eer.rate,
        eer_threshold: eer.threshold,
        auc: auc_sorted(&g, &i),
        accuracy: accuracy_at(&g, &i, eer.threshold),
        rank1: rank_n(profile, 1)?,
    })
}

/// Per-subject thresholds; every field is the mean over subjects.
/// FNMR at fixed FMR is not reported: 20 impostor scores cannot resolve 1%.
pub fn evaluate_per_subject(profiles: &[SubjectScoreProfile]) -> Result<VerificationReport> {
    if profiles.is_empty() {
        return Err(KvcError::EmptyScores("profiles"));
    }
    let per: Vec<SubjectMetrics> = profiles
        .par_iter()
        .map(subject_metrics)
        .collect::<Result<_>>()?;
    let mean = |f: fn(&SubjectMetrics) -> f64| {
        let v: Vec<f64> = per.iter().map(f).collect();
        pairwise_sum(&v) / v.len() as f64
    };
    Ok(VerificationReport {
        eer: mean(|m| m.eer),
        eer_threshold: None,
        fnmr_at_fmr_1: None,
        fnmr_at_fmr_10: None,
        auc: mean(|m| m.auc),
        accuracy: mean(|m| m.accuracy),
        rank1: Some(mean(|m| m.rank1)),
        mode: EvalMode::MeanPerSubject,
    })
}

/// Summation with O(log n) error growth, independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFiles {
    pub histogram: PathBuf,
    pub det: PathBuf,
    pub roc: PathBuf,
    pub markers: PathBuf,
}

fn histogram(values: &[f64]) -> [u64; HISTOGRAM_BINS] {
    let mut bins = [0u64; HISTOGRAM_BINS];
    for &v in values {
        let b = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1;
    }
    bins
}

/// Writes `histogram.csv`, `det.csv`, `roc.csv` and `markers.csv` into `dir`.
///
/// The histogram has 100 fixed bins over `[0, 1]` (the last bin is closed)
/// with separate genuine, similar-impostor and dissimilar-impostor counts.
/// DET and ROC use the pooled impostor scores. `markers.csv` holds the EER
/// operating point and the thresholds for FMR 1% and 10%.
pub fn emit_curves(
    genuine: &[f64],
    similar_impostor: &[f64],
    dissimilar_impostor: &[f64],
    dir: impl AsRef<Path>,
) -> Result<CurveFiles> {
    let dir = dir.as_ref();
    let impostor: Vec<f64> = similar_impostor
        .iter()
        .chain(dissimilar_impostor)
        .copied()
        .collect();
    let curve = sweep(genuine, &impostor)?;
    let files = CurveFiles {
        histogram: dir.join("histogram.csv"),
        det: dir.join("det.csv"),
        roc: dir.join("roc.csv"),
        markers: dir.join("markers.csv"),
    };

    let (hg, hs, hd) = (
        histogram(genuine),
        histogram(similar_impostor),
        histogram(dissimilar_impostor),
    );
    write_lines(&files.histogram, |out| {
        writeln!(
            out,
            "bin_low,bin_high,genuine,similar_impostor,dissimilar_impostor"
        )?;
        for b in 0..HISTOGRAM_BINS {
            let lo = b as f64 / HISTOGRAM_BINS as f64;
            let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
            writeln!(out, "{lo},{hi},{},{},{}", hg[b], hs[b], hd[b])?;
        }
        Ok(())
    })?;
    write_lines(&files.det, |out| {
        writeln!(out, "threshold,fmr,fnmr")?;
        for p in &curve.points {
            writeln!(out, "{},{},{}", p.threshold, p.fmr, p.fnmr)?;
        }
        Ok(())
    })?;
    write_lines(&files.roc, |out| {
        writeln!(out, "fmr,tmr")?;
        for p in &curve.points {
            writeln!(out, "{},{}", p.fmr, 1.0 - p.fnmr)?;
        }
        Ok(())
    })?;
    let eer = curve.eer();
    write_lines(&files.markers, |out| {
        writeln!(out, "marker,threshold,fmr,fnmr")?;
        writeln!(out, "eer,{},{},{}", eer.threshold, eer.rate, eer.rate)?;
        for (name, x) in [("fmr_1pct", 0.01), ("fmr_10pct", 0.10)] {
            writeln!(
                out,
                "{name},{},{x},{}",
                curve.threshold_at_fmr(x),
                curve.fnmr_at_fmr(x)
            )?;
        }
        Ok(())
    })?;
    Ok(files)
}

fn write_lines(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| KvcError::io(path, e))
}
