//! Synthetic keystroke populations with controllable demographic effects.
//!
//! Hold times and inter-key times (release to next press) are log-normal.
//! Each subject draws a mean hold time and a mean inter-key time (normal
//! around population means with `subject_variance` as standard deviation,
//! redrawn when not positive),
//! a keystroke-level standard deviation for each, per-key hold factors, personal key
//! frequencies around English letter frequencies and a typical session length. Demographic offsets shift
//! the subject means, each session jitters them, and keystrokes are drawn
//! around the session means. All timing parameters are in seconds.
//! Subjects are generated from per-subject derived streams, so output does
//! not depend on the thread count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    AgeBin, Dataset, DemographicGroup, Gender, KeyEvent, Scenario, Session, SubjectRecord,
    MIN_EVALUATION_SESSIONS, MIN_SESSION_EVENTS,
};
use crate::error::{KvcError, Result};
use crate::rng::SplitMix64;

/// Adds fixed offsets (seconds) to every subject matching the filters.
/// A missing filter matches everything.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicOffset {
    #[serde(default)]
    pub age_bin: Option<AgeBin>,
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default)]
    pub hold_s: f64,
    #[serde(default)]
    pub flight_s: f64,
}

impl DemographicOffset {
    fn matches(&self, g: DemographicGroup) -> bool {
        self.age_bin.is_none_or(|a| a == g.age_bin) && self.gender.is_none_or(|x| x == g.gender)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects_per_group: usize,
    pub sessions_per_subject: usize,
    /// Mean keystrokes per session.
    pub chars_mean: f64,
    /// Between-subject standard deviation of the typical session length.
    pub chars_spread: f64,
    /// Between-subject standard deviation of the mean hold and inter-key times.
    pub subject_variance: f64,
    /// Within-subject (between-session) standard deviation of those means.
    pub session_variance: f64,
    pub demographic_offsets: Vec<DemographicOffset>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects_per_group: 100,
            sessions_per_subject: MIN_EVALUATION_SESSIONS,
            chars_mean: 48.0,
            chars_spread: 10.0,
            subject_variance: 0.02,
            session_variance: 0.005,
            demographic_offsets: Vec::new(),
            scenario: Scenario::Desktop,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KvcError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Balanced population with no demographic effect.
    pub fn null_bias(subjects_per_group: usize, seed: u64) -> Self {
        Self {
            subjects_per_group,
            seed,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.subjects_per_group == 0 {
            return Err(KvcError::Invalid(
                "subjects_per_group must be positive".into(),
            ));
        }
        if self.sessions_per_subject < MIN_EVALUATION_SESSIONS {
            return Err(KvcError::Invalid(format!(
                "sessions_per_subject must be at least {MIN_EVALUATION_SESSIONS}, got {}",
                self.sessions_per_subject
            )));
        }
        let finite = [
            self.chars_mean,
            self.chars_spread,
            self.subject_variance,
            self.session_variance,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(KvcError::Invalid(
                "synth parameters must be finite and non-negative".into(),
            ));
        }
        if self
            .demographic_offsets
            .iter()
            .any(|o| !o.hold_s.is_finite() || !o.flight_s.is_finite())
        {
            return Err(KvcError::Invalid(
                "demographic offsets must be finite".into(),
            ));
        }
        Ok(())
    }

    fn offsets_for(&self, g: DemographicGroup) -> (f64, f64) {
        self.demographic_offsets
            .iter()
            .filter(|o| o.matches(g))
            .fold((0.0, 0.0), |(h, f), o| (h + o.hold_s, f + o.flight_s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Labelled with demographics.
    pub dataset: Dataset,
    /// Subject or session means and hold times that came out below 1 ms and were floored.
    pub floored: u64,
}

/// English relative frequencies of `a..z` then space.
const KEY_WEIGHTS: [(u8, u32); 27] = [
    (b'a', 82),
    (b'b', 15),
    (b'c', 28),
    (b'd', 43),
    (b'e', 127),
    (b'f', 22),
    (b'g', 20),
    (b'h', 61),
    (b'i', 70),
    (b'j', 2),
    (b'k', 8),
    (b'l', 40),
    (b'm', 24),
    (b'n', 67),
    (b'o', 75),
    (b'p', 19),
    (b'q', 1),
    (b'r', 60),
    (b's', 63),
    (b't', 91),
    (b'u', 28),
    (b'v', 10),
    (b'w', 24),
    (b'x', 2),
    (b'y', 20),
    (b'z', 1),
    (b' ', 200),
];

/// Index into `cumulative`, drawn by weight.
fn draw_key(rng: &mut SplitMix64, cumulative: &[f64]) -> usize {
    let total = cumulative[cumulative.len() - 1];
    let r = rng.next_f64() * total;
    cumulative
        .partition_point(|&c| c <= r)
        .min(cumulative.len() - 1)
}

const BASE_HOLD_S: f64 = 0.1;
const BASE_FLIGHT_S: f64 = 0.2;
/// Per-subject keystroke-level standard deviations (seconds) are log-normal: (mean, cv).
const HOLD_SD: (f64, f64) = (0.02, 0.3);
const FLIGHT_SD: (f64, f64) = (0.05, 0.3);
/// Log-scale spread of the per-key hold factors.
const KEY_FACTOR_SD: f64 = 0.1;
/// Log-scale spread of per-subject key preferences around English frequencies.
const KEY_PREFERENCE_SD: f64 = 0.5;
/// Coefficient of variation of session length around the subject's own mean.
const LENGTH_CV: f64 = 0.1;
const FLOOR_S: f64 = 0.001;
/// Gap between session start times.
const SESSION_SPACING_MS: i64 = 10_000_000;

/// Floors `x` at 1 ms, counting each floored value.
fn floor_at_1ms(x: f64, floored: &mut u64) -> f64 {
    if x < FLOOR_S {
        *floored += 1;
        FLOOR_S
    } else {
        x
    }
}

/// Normal draw, redrawn while below 1 ms; floored (and counted) after 8 misses.
fn positive_normal(rng: &mut SplitMix64, mean: f64, sd: f64, floored: &mut u64) -> f64 {
    for _ in 0..8 {
        let x = rng.normal(mean, sd);
        if x >= FLOOR_S {
            return x;
        }
    }
    floor_at_1ms(rng.normal(mean, sd), floored)
}

/// Log-normal draw with the given mean and coefficient of variation.
fn lognormal(rng: &mut SplitMix64, mean: f64, cv: f64) -> f64 {
    let var = (1.0 + cv * cv).ln();
    rng.normal(mean.ln() - var / 2.0, var.sqrt()).exp()
}

pub fn subject_id(group: DemographicGroup, k: usize) -> String {
    format!("g{:02}-s{k:05}", group.index())
}

/// Unique across subjects, so a blind plan can name sessions alone.
pub fn session_id(subject_id: &str, k: usize) -> String {
    format!("{subject_id}-sess{k:03}")
}

fn generate_subject(
    cfg: &SynthConfig,
    group: DemographicGroup,
    k: usize,
) -> Result<(SubjectRecord, u64)> {
    let stream = (group.index() * cfg.subjects_per_group + k) as u64;
    let mut rng = SplitMix64::derive(cfg.seed, stream);
    let (hold_off, flight_off) = cfg.offsets_for(group);
    let mut floored = 0;
    let hold_mean = positive_normal(
        &mut rng,
        BASE_HOLD_S + hold_off,
        cfg.subject_variance,
        &mut floored,
    );
    let flight_mean = positive_normal(
        &mut rng,
        BASE_FLIGHT_S + flight_off,
        cfg.subject_variance,
        &mut floored,
    );
    let hold_sd = lognormal(&mut rng, HOLD_SD.0, HOLD_SD.1);
    let flight_sd = lognormal(&mut rng, FLIGHT_SD.0, FLIGHT_SD.1);
    let key_factors: Vec<f64> = KEY_WEIGHTS
        .iter()
        .map(|_| rng.normal(0.0, KEY_FACTOR_SD).exp())
        .collect();
    let cumulative: Vec<f64> = KEY_WEIGHTS
        .iter()
        .scan(0.0, |acc, &(_, w)| {
            *acc += w as f64 * rng.normal(0.0, KEY_PREFERENCE_SD).exp();
            Some(*acc)
        })
        .collect();
    let length_mean = rng
        .normal(cfg.chars_mean, cfg.chars_spread)
        .max(MIN_SESSION_EVENTS as f64);

    let mut subject = SubjectRecord::new(subject_id(group, k));
    subject.demographics = Some(group);
    for s in 0..cfg.sessions_per_subject {
        let len = lognormal(&mut rng, length_mean, LENGTH_CV)
            .round()
            .max(MIN_SESSION_EVENTS as f64) as usize;
        let h_mean = positive_normal(&mut rng, hold_mean, cfg.session_variance, &mut floored);
        let f_mean = positive_normal(&mut rng, flight_mean, cfg.session_variance, &mut floored);
        let mut t = s as i64 * SESSION_SPACING_MS;
        let mut events = Vec::with_capacity(len);
        for _ in 0..len {
            let slot = draw_key(&mut rng, &cumulative);
            let h = h_mean * key_factors[slot];
            let hold = lognormal(&mut rng, h, hold_sd / h);
            let hold_ms = (floor_at_1ms(hold, &mut floored) * 1000.0).round().max(1.0) as i64;
            events.push(KeyEvent::new(KEY_WEIGHTS[slot].0, t, t + hold_ms)?);
            let flight = lognormal(&mut rng, f_mean, flight_sd / f_mean);
            t += hold_ms + (flight * 1000.0).round() as i64;
        }
        subject.insert_session(Session::new(session_id(&subject.subject_id, s), events))?;
    }
    Ok((subject, floored))
}

/// Generates `subjects_per_group` subjects for each of the twelve groups.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.check()?;
    let jobs: Vec<(DemographicGroup, usize)> = DemographicGroup::all()
        .into_iter()
        .flat_map(|g| (0..cfg.subjects_per_group).map(move |k| (g, k)))
        .collect();
    let made: Vec<(SubjectRecord, u64)> = jobs
        .par_iter()
        .map(|&(g, k)| generate_subject(cfg, g, k))
        .collect::<Result<_>>()?;
    let mut dataset = Dataset::new(cfg.scenario);
    let mut floored = 0;
    for (subject, f) in made {
        floored += f;
        dataset.insert_subject(subject)?;
    }
    if floored > 0 {
        log::warn!("{floored} timing values floored at 1 ms");
    }
    Ok(SynthOutput { dataset, floored })
}

/// Randomly reassigns sessions to subjects, keeping each subject's session
/// count and session ids. Subject identity no longer matches typing behaviour,
/// so a verifier should drop to chance level.
pub fn shuffle_sessions(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let mut pool: Vec<Vec<KeyEvent>> = dataset
        .subjects
        .values()
        .flat_map(|s| s.sessions.values().map(|x| x.events.clone()))
        .collect();
    SplitMix64::new(seed).shuffle(&mut pool);
    let mut pool = pool.into_iter();
    let mut out = Dataset::new(dataset.scenario);
    for s in dataset.subjects.values() {
        let mut subject = SubjectRecord::new(s.subject_id.clone());
        subject.demographics = s.demographics;
        for id in s.sessions.keys() {
            let events = pool.next().unwrap_or_default();
            subject.insert_session(Session::new(id.clone(), events))?;
        }
        out.insert_subject(subject)?;
    }
    Ok(out)
}

/// Randomly permutes demographic labels across subjects, keeping group sizes.
pub fn shuffle_labels(
    labels: &BTreeMap<String, DemographicGroup>,
    seed: u64,
) -> BTreeMap<String, DemographicGroup> {
    let mut groups: Vec<DemographicGroup> = labels.values().copied().collect();
    SplitMix64::new(seed).shuffle(&mut groups);
    labels.keys().cloned().zip(groups).collect()
}
