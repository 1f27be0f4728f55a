mod common;

use kvc_core::metrics::{self, accuracy_at, auc, eer, fnmr_at_fmr, pooled, sweep};
use kvc_core::protocol::SubjectScoreProfile;
use kvc_core::rng::SplitMix64;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

#[test]
fn eer_and_fnmr_match_brute_force() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..60 {
        let ng = 10 + rng.below(200) as usize;
        let ni = 10 + rng.below(200) as usize;
        let g = common::random_scores(&mut rng, ng, 0.2);
        let i = common::random_scores(&mut rng, ni, 0.0);
        assert!((eer(&g, &i).unwrap().rate - common::eer(&g, &i)).abs() < TOL);
        for x in [0.01, 0.1, 0.37] {
            let got = fnmr_at_fmr(&g, &i, x).unwrap();
            assert!(
                (got - common::fnmr_at_fmr(&g, &i, x)).abs() < TOL,
                "x = {x}"
            );
        }
        let t = rng.next_f64();
        assert!((accuracy_at(&g, &i, t) - common::accuracy(&g, &i, t)).abs() < TOL);
        assert!((auc(&g, &i).unwrap() - common::auc_pairs(&g, &i)).abs() < TOL);
    }
}

#[test]
fn eer_threshold_reproduces_the_rate_on_separable_steps() {
    // Shifted populations: at the reported threshold FMR and FNMR bracket the EER.
    let mut rng = SplitMix64::new(5);
    let g = common::random_scores(&mut rng, 300, 0.25);
    let i = common::random_scores(&mut rng, 300, 0.0);
    let e = eer(&g, &i).unwrap();
    let (fmr, fnmr) = common::rates(&g, &i, e.threshold);
    let lo = fmr.min(fnmr) - 1.0 / 300.0;
    let hi = fmr.max(fnmr) + 1.0 / 300.0;
    assert!(lo <= e.rate && e.rate <= hi, "{e:?} {fmr} {fnmr}");
}

#[test]
fn fmr_relaxed_setting_rejects_ninety_percent() {
    // 100 impostors at ranks 0.00..0.99; genuines spread over the top half.
    let i: Vec<f64> = (0..100).map(|k| k as f64 / 100.0).collect();
    let g: Vec<f64> = (0..100).map(|k| 0.5 + k as f64 / 200.0).collect();
    let curve = sweep(&g, &i).unwrap();
    let t = curve.threshold_at_fmr(0.10);
    let rejected = i.iter().filter(|&&s| s < t).count();
    assert_eq!(rejected, 90);
    assert!((curve.fnmr_at_fmr(0.10) - common::fnmr_at_fmr(&g, &i, 0.10)).abs() < TOL);
    assert!((curve.fnmr_at_fmr(0.10) - common::rates(&g, &i, t).1).abs() < TOL);
}

#[test]
fn accuracy_at_eer_threshold_is_one_minus_eer_when_balanced() {
    let g = [0.55, 0.62, 0.71, 0.8, 0.9];
    let i = [0.1, 0.3, 0.58, 0.66, 0.4];
    let e = eer(&g, &i).unwrap();
    assert!((accuracy_at(&g, &i, e.threshold) - (1.0 - e.rate)).abs() < 1e-12);
}

#[test]
fn auc_four_pair_example_and_trapezoid() {
    let (g, i) = ([0.8, 0.6], [0.7, 0.1]);
    assert_eq!(auc(&g, &i).unwrap(), 0.75);
    let mut rng = SplitMix64::new(9);
    let g = common::random_scores(&mut rng, 300, 0.1);
    let i = common::random_scores(&mut rng, 300, 0.0);
    let area = sweep(&g, &i).unwrap().roc_area();
    assert!((area - auc(&g, &i).unwrap()).abs() < TOL);
}

#[test]
fn global_and_per_subject_reports_match_loops() {
    let mut rng = SplitMix64::new(21);
    let profiles: Vec<SubjectScoreProfile> = (0..40)
        .map(|k| common::random_profile(&mut rng, k))
        .collect();
    let global = metrics::evaluate_global(&profiles).unwrap();
    let (g, i) = pooled(&profiles);
    assert_eq!(g.len(), 400);
    assert_eq!(i.len(), 800);
    assert!((global.eer - common::eer(&g, &i)).abs() < TOL);
    assert!((global.fnmr_at_fmr_1.unwrap() - common::fnmr_at_fmr(&g, &i, 0.01)).abs() < TOL);
    assert!((global.auc - common::auc_pairs(&g, &i)).abs() < TOL);
    assert!(global.rank1.is_none());

    let per = metrics::evaluate_per_subject(&profiles).unwrap();
    let n = profiles.len() as f64;
    let mean_eer: f64 = profiles
        .iter()
        .map(|p| {
            let imp: Vec<f64> = p.impostor().collect();
            common::eer(&p.genuine, &imp)
        })
        .sum::<f64>()
        / n;
    let mean_rank1: f64 = profiles.iter().map(common::rank1).sum::<f64>() / n;
    assert!((per.eer - mean_eer).abs() < TOL);
    assert!((per.rank1.unwrap() - mean_rank1).abs() < TOL);
    assert!(per.eer_threshold.is_none() && per.fnmr_at_fmr_1.is_none());
}

#[test]
fn two_subject_toy_pools_by_hand() {
    let a = SubjectScoreProfile {
        subject_id: "A".into(),
        genuine: vec![0.9; 10],
        similar_impostor: vec![0.2; 10],
        dissimilar_impostor: vec![0.1; 10],
    };
    let b = SubjectScoreProfile {
        subject_id: "B".into(),
        genuine: vec![0.5; 10],
        similar_impostor: vec![0.6; 10],
        dissimilar_impostor: vec![0.1; 10],
    };
    let r = metrics::evaluate_global(&[a, b]).unwrap();
    // Pooled: 20 genuine (half at 0.5), 40 impostor (10 at 0.6). At 0.5:
    // FMR 0.25, FNMR 0; at 0.6: FMR 0.25, FNMR 0.5. The crossing is midway.
    assert!((r.eer - 0.25).abs() < 1e-12);
    assert!((r.eer_threshold.unwrap() - 0.55).abs() < 1e-12);
    assert!((r.auc - 0.875).abs() < 1e-12);
}

fn scores_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.0f64..=1.0, 5..80),
        prop::collection::vec(0.0f64..=1.0, 5..80),
    )
}

proptest! {
    #[test]
    fn rates_are_monotone_in_threshold((g, i) in scores_strategy()) {
        let curve = sweep(&g, &i).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[0].fmr >= w[1].fmr);
            prop_assert!(w[0].fnmr <= w[1].fnmr);
        }
        for p in &curve.points {
            let (fmr, fnmr) = common::rates(&g, &i, p.threshold);
            prop_assert_eq!((p.fmr, p.fnmr), (fmr, fnmr));
        }
    }

    #[test]
    fn metrics_invariant_under_increasing_transform((g, i) in scores_strategy()) {
        let f = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
        let (g2, i2) = (f(&g), f(&i));
        prop_assert!((eer(&g, &i).unwrap().rate - eer(&g2, &i2).unwrap().rate).abs() < TOL);
        prop_assert!((auc(&g, &i).unwrap() - auc(&g2, &i2).unwrap()).abs() < TOL);
    }

    #[test]
    fn swapping_roles_mirrors_auc((g, i) in scores_strategy()) {
        let a = auc(&g, &i).unwrap();
        prop_assert!((a + auc(&i, &g).unwrap() - 1.0).abs() < TOL);
        prop_assert!((0.0..=1.0).contains(&eer(&g, &i).unwrap().rate));
    }
}
