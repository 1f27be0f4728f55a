//! Keystroke data model, demographic labels and dataset validation.

mod files;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KvcError, Result};

pub use files::{load_events, load_metadata, read_metadata, save_events, save_metadata};

/// Sessions a subject needs to take part in evaluation (5 enrolment + 10 verification).
pub const MIN_EVALUATION_SESSIONS: usize = 15;

/// Shortest session for which every look-ahead feature is defined at least once.
pub const MIN_SESSION_EVENTS: usize = 4;

/// One keystroke. Timestamps are integer milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyEvent {
    pub press_ts: i64,
    pub release_ts: i64,
    pub key_code: u8,
}

impl KeyEvent {
    pub fn new(key_code: u8, press_ts: i64, release_ts: i64) -> Result<Self> {
        if release_ts < press_ts {
            return Err(KvcError::Invalid(format!(
                "release_ts {release_ts} precedes press_ts {press_ts}"
            )));
        }
        Ok(Self {
            press_ts,
            release_ts,
            key_code,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    /// Sorted by press time; ties by release time, then key code.
    pub events: Vec<KeyEvent>,
}

impl Session {
    pub fn new(session_id: impl Into<String>, mut events: Vec<KeyEvent>) -> Self {
        events.sort_unstable();
        Self {
            session_id: session_id.into(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBin {
    #[serde(rename = "10-13")]
    Age10To13,
    #[serde(rename = "14-17")]
    Age14To17,
    #[serde(rename = "18-26")]
    Age18To26,
    #[serde(rename = "27-35")]
    Age27To35,
    #[serde(rename = "36-44")]
    Age36To44,
    #[serde(rename = "45-79")]
    Age45To79,
}

impl AgeBin {
    pub const ALL: [AgeBin; 6] = [
        AgeBin::Age10To13,
        AgeBin::Age14To17,
        AgeBin::Age18To26,
        AgeBin::Age27To35,
        AgeBin::Age36To44,
        AgeBin::Age45To79,
    ];

    pub fn token(self) -> &'static str {
        match self {
            AgeBin::Age10To13 => "10-13",
            AgeBin::Age14To17 => "14-17",
            AgeBin::Age18To26 => "18-26",
            AgeBin::Age27To35 => "27-35",
            AgeBin::Age36To44 => "36-44",
            AgeBin::Age45To79 => "45-79",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for AgeBin {
    type Err = KvcError;

    fn from_str(s: &str) -> Result<Self> {
        AgeBin::ALL
            .into_iter()
            .find(|b| b.token() == s)
            .ok_or_else(|| KvcError::UnknownAgeBin(s.to_owned()))
    }
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Gender {
    type Err = KvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            other => Err(KvcError::UnknownGender(other.to_owned())),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Age bin crossed with gender; twelve values in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemographicGroup {
    pub age_bin: AgeBin,
    pub gender: Gender,
}

impl DemographicGroup {
    pub const COUNT: usize = 12;

    pub fn new(age_bin: AgeBin, gender: Gender) -> Self {
        Self { age_bin, gender }
    }

    /// All groups, age-major.
    pub fn all() -> [DemographicGroup; 12] {
        let mut out = [DemographicGroup::new(AgeBin::Age10To13, Gender::Male); 12];
        for (i, age) in AgeBin::ALL.into_iter().enumerate() {
            for (j, gender) in Gender::ALL.into_iter().enumerate() {
                out[i * 2 + j] = DemographicGroup::new(age, gender);
            }
        }
        out
    }

    pub fn index(self) -> usize {
        self.age_bin.index() * 2 + self.gender.index()
    }

    /// Differs in both age bin and gender.
    pub fn fully_differs(self, other: DemographicGroup) -> bool {
        self.age_bin != other.age_bin && self.gender != other.gender
    }
}

impl fmt::Display for DemographicGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.age_bin, self.gender)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub demographics: Option<DemographicGroup>,
    pub sessions: BTreeMap<String, Session>,
}

impl SubjectRecord {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            demographics: None,
            sessions: BTreeMap::new(),
        }
    }

    pub fn insert_session(&mut self, session: Session) -> Result<()> {
        if self.sessions.contains_key(&session.session_id) {
            return Err(KvcError::Invalid(format!(
                "duplicate session {:?} for subject {:?}",
                session.session_id, self.subject_id
            )));
        }
        self.sessions.insert(session.session_id.clone(), session);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Desktop,
    Mobile,
}

/// Immutable after loading; share freely across threads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub subjects: BTreeMap<String, SubjectRecord>,
}

impl Dataset {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            subjects: BTreeMap::new(),
        }
    }

    pub fn insert_subject(&mut self, subject: SubjectRecord) -> Result<()> {
        if self.subjects.contains_key(&subject.subject_id) {
            return Err(KvcError::Invalid(format!(
                "duplicate subject {:?}",
                subject.subject_id
            )));
        }
        self.subjects.insert(subject.subject_id.clone(), subject);
        Ok(())
    }

    pub fn session(&self, subject_id: &str, session_id: &str) -> Option<&Session> {
        self.subjects.get(subject_id)?.sessions.get(session_id)
    }

    pub fn session_count(&self) -> usize {
        self.subjects.values().map(|s| s.sessions.len()).sum()
    }

    pub fn event_count(&self) -> usize {
        self.subjects
            .values()
            .flat_map(|s| s.sessions.values())
            .map(Session::len)
            .sum()
    }

    pub fn labeled_count(&self) -> usize {
        self.subjects
            .values()
            .filter(|s| s.demographics.is_some())
            .count()
    }

    /// Subject id to group, for labeled subjects only.
    pub fn demographics(&self) -> BTreeMap<String, DemographicGroup> {
        self.subjects
            .values()
            .filter_map(|s| s.demographics.map(|g| (s.subject_id.clone(), g)))
            .collect()
    }

    /// Attaches labels; returns the ids that matched no subject.
    pub fn attach_demographics(
        &mut self,
        labels: &BTreeMap<String, DemographicGroup>,
    ) -> Vec<String> {
        let mut unknown = Vec::new();
        for (id, group) in labels {
            match self.subjects.get_mut(id) {
                Some(subject) => subject.demographics = Some(*group),
                None => unknown.push(id.clone()),
            }
        }
        unknown
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortSession {
    pub subject_id: String,
    pub session_id: String,
    pub events: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub insufficient_sessions: Vec<String>,
    pub unlabeled: Vec<String>,
    pub short_sessions: Vec<ShortSession>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.insufficient_sessions.is_empty()
            && self.unlabeled.is_empty()
            && self.short_sessions.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn validate_for_evaluation(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    // BTreeMap iteration keeps every list sorted by subject, then session.
    for subject in dataset.subjects.values() {
        if subject.sessions.len() < MIN_EVALUATION_SESSIONS {
            report
                .insufficient_sessions
                .push(subject.subject_id.clone());
        }
        if subject.demographics.is_none() {
            report.unlabeled.push(subject.subject_id.clone());
        }
        for session in subject.sessions.values() {
            if session.len() < MIN_SESSION_EVENTS {
                report.short_sessions.push(ShortSession {
                    subject_id: subject.subject_id.clone(),
                    session_id: session.session_id.clone(),
                    events: session.len(),
                });
            }
        }
    }
    report
}
