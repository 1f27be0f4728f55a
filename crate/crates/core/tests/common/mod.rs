//! Brute-force reference implementations shared by the integration tests.
//! Everything here recounts from raw scores and avoids the library's sweep.
#![allow(dead_code)]

use kvc_core::protocol::SubjectScoreProfile;
use kvc_core::rng::SplitMix64;

pub fn rates(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let fmr = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
    let fnmr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
    (fmr, fnmr)
}

/// Every distinct score plus one threshold below all and one above all.
fn candidates(genuine: &[f64], impostor: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    let lo = t[0] - 1.0;
    let hi = t[t.len() - 1] + 1.0;
    let mut out = vec![lo];
    out.extend(t);
    out.push(hi);
    out
}

pub fn eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = candidates(genuine, impostor)
        .into_iter()
        .map(|t| rates(genuine, impostor, t))
        .collect();
    for k in 0..pts.len() {
        let (fmr, fnmr) = pts[k];
        if fmr <= fnmr {
            if fmr == fnmr || k == 0 {
                return fmr;
            }
            let (a_fmr, a_fnmr) = pts[k - 1];
            let w = (a_fmr - a_fnmr) / ((a_fmr - a_fnmr) - (fmr - fnmr));
            return a_fmr + w * (fmr - a_fmr);
        }
    }
    unreachable!("the top threshold rejects everything")
}

pub fn fnmr_at_fmr(genuine: &[f64], impostor: &[f64], x: f64) -> f64 {
    let pts: Vec<(f64, f64)> = candidates(genuine, impostor)
        .into_iter()
        .map(|t| rates(genuine, impostor, t))
        .collect();
    let k = pts.iter().position(|p| p.0 <= x).unwrap();
    if k == 0 || pts[k].0 == x {
        return pts[k].1;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    a.1 + (a.0 - x) / (a.0 - b.0) * (b.1 - a.1)
}

pub fn accuracy(genuine: &[f64], impostor: &[f64], t: f64) -> f64 {
    let ok =
        genuine.iter().filter(|&&s| s >= t).count() + impostor.iter().filter(|&&s| s < t).count();
    ok as f64 / (genuine.len() + impostor.len()) as f64
}

pub fn auc_pairs(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut total = 0.0;
    for &g in genuine {
        for &i in impostor {
            total += if g > i {
                1.0
            } else if g == i {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (genuine.len() * impostor.len()) as f64
}

pub fn rank1(p: &SubjectScoreProfile) -> f64 {
    let imp: Vec<f64> = p
        .similar_impostor
        .iter()
        .chain(&p.dissimilar_impostor)
        .copied()
        .collect();
    let mut hits = 0;
    for &g in &p.genuine {
        if imp.iter().all(|&i| i < g) {
            hits += 1;
        }
    }
    hits as f64 / p.genuine.len() as f64
}

/// Scores in [0, 1]; a third of the sets are quantised to force ties.
pub fn random_scores(rng: &mut SplitMix64, n: usize, shift: f64) -> Vec<f64> {
    let coarse = rng.below(3) == 0;
    (0..n)
        .map(|_| {
            let v = (rng.normal(0.5 + shift, 0.15)).clamp(0.0, 1.0);
            if coarse {
                (v * 40.0).round() / 40.0
            } else {
                v
            }
        })
        .collect()
}

pub fn random_profile(rng: &mut SplitMix64, id: usize) -> SubjectScoreProfile {
    SubjectScoreProfile {
        subject_id: format!("S{id:04}"),
        genuine: random_scores(rng, 10, 0.2),
        similar_impostor: random_scores(rng, 10, 0.0),
        dissimilar_impostor: random_scores(rng, 10, -0.1),
    }
}
