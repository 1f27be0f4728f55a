//! Comparison plan generation and per-probe score aggregation.
//!
//! Every evaluation subject contributes 5 enrolment and 10 verification
//! sessions (the first 15 by session id). Each verification probe is compared
//! against all 5 enrolment sessions, so a subject owns 150 comparisons:
//! 50 genuine, 50 against verification sessions of impostors from its own
//! demographic group, and 50 against impostors differing in both age bin and
//! gender. Averaging over the enrolment sessions yields 10 scores per role.
//!
//! Impostor probes are drawn per owner without replacement from the pooled
//! verification sessions of the eligible subjects, using [`SplitMix64`]
//! seeded with the plan seed and consumed sequentially in owner order:
//! 10 similar draws, then 10 dissimilar draws, each via
//! [`SplitMix64::sample_distinct`] over the pool size. Pool slot `k` maps to
//! eligible subject `k / 10` (subjects in id order, dissimilar pools
//! concatenated in group order) and its verification session `k % 10`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DemographicGroup, MIN_EVALUATION_SESSIONS};
use crate::error::{KvcError, Result};
use crate::metrics;
use crate::rng::SplitMix64;
use crate::textio::{create, open_csv};

pub const ENROLMENT_SESSIONS: usize = 5;
pub const VERIFICATION_SESSIONS: usize = 10;
pub const PROBES_PER_ROLE: usize = 10;
pub const RECORDS_PER_SUBJECT: usize = 3 * PROBES_PER_ROLE * ENROLMENT_SESSIONS;

const PLAN_HEADER: [&str; 5] = [
    "owner_subject",
    "role",
    "probe_subject",
    "probe_session",
    "enrol_session",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Genuine,
    SimilarImpostor,
    DissimilarImpostor,
}

impl Role {
    pub const ALL: [Role; 3] = [
        Role::Genuine,
        Role::SimilarImpostor,
        Role::DissimilarImpostor,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Role::Genuine => "genuine",
            Role::SimilarImpostor => "similar_impostor",
            Role::DissimilarImpostor => "dissimilar_impostor",
        }
    }

    pub fn is_impostor(self) -> bool {
        self != Role::Genuine
    }
}

impl FromStr for Role {
    type Err = KvcError;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.token() == s)
            .ok_or_else(|| KvcError::Invalid(format!("unknown role {s:?}")))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Session assignment for one subject in a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanSubject {
    pub subject_id: String,
    pub enrolment: Vec<String>,
    pub verification: Vec<String>,
}

/// One 1-vs-1 comparison. Indices refer into [`ComparisonPlan::subjects`] and
/// the session lists of the owner (enrolment) and probe subject (verification).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonRecord {
    pub owner: u32,
    pub role: Role,
    /// Which of the owner's 10 probes for this role.
    pub probe_index: u8,
    pub enrol_index: u8,
    pub probe_subject: u32,
    pub probe_session: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonPlan {
    /// `None` for plans read back from a file.
    pub seed: Option<u64>,
    /// Sorted by subject id.
    pub subjects: Vec<PlanSubject>,
    pub records: Vec<ComparisonRecord>,
}

impl ComparisonPlan {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn owner_id(&self, r: &ComparisonRecord) -> &str {
        &self.subjects[r.owner as usize].subject_id
    }

    pub fn probe_subject_id(&self, r: &ComparisonRecord) -> &str {
        &self.subjects[r.probe_subject as usize].subject_id
    }

    pub fn enrol_session_id(&self, r: &ComparisonRecord) -> &str {
        &self.subjects[r.owner as usize].enrolment[r.enrol_index as usize]
    }

    pub fn probe_session_id(&self, r: &ComparisonRecord) -> &str {
        &self.subjects[r.probe_subject as usize].verification[r.probe_session as usize]
    }

    /// Number of subjects that own comparisons.
    pub fn owner_count(&self) -> usize {
        let owners: BTreeSet<u32> = self.records.iter().map(|r| r.owner).collect();
        owners.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let io = |e| KvcError::io(path, e);
        writeln!(out, "{}", PLAN_HEADER.join(",")).map_err(io)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.owner_id(r),
                r.role,
                self.probe_subject_id(r),
                self.probe_session_id(r),
                self.enrol_session_id(r)
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Blind variant for challenge-style use: only the session pair of each comparison.
    pub fn write_blind_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let io = |e| KvcError::io(path, e);
        writeln!(out, "probe_session,enrol_session").map_err(io)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{}",
                self.probe_session_id(r),
                self.enrol_session_id(r)
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads a full plan file. Record order is kept as in the file.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = open_csv(path, &PLAN_HEADER)?;
        let mut rows: Vec<(String, Role, String, String, String, u64)> = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                KvcError::format(path, line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != PLAN_HEADER.len() {
                return Err(KvcError::format(path, line, "expected 5 fields"));
            }
            let role: Role = row[1]
                .parse()
                .map_err(|e: KvcError| KvcError::format(path, line, e.to_string()))?;
            rows.push((
                row[0].to_owned(),
                role,
                row[2].to_owned(),
                row[3].to_owned(),
                row[4].to_owned(),
                line,
            ));
        }
        Self::from_rows(path, rows)
    }

    fn from_rows(
        path: &Path,
        rows: Vec<(String, Role, String, String, String, u64)>,
    ) -> Result<Self> {
        let mut enrol: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        let mut verif: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (owner, _, probe_subject, probe_session, enrol_session, _) in &rows {
            enrol.entry(owner).or_default().insert(enrol_session);
            verif
                .entry(probe_subject)
                .or_default()
                .insert(probe_session);
            verif.entry(owner).or_default();
        }
        let subjects: Vec<PlanSubject> = verif
            .iter()
            .map(|(id, v)| PlanSubject {
                subject_id: (*id).to_owned(),
                enrolment: enrol
                    .get(id)
                    .map(|e| e.iter().map(|s| (*s).to_owned()).collect())
                    .unwrap_or_default(),
                verification: v.iter().map(|s| (*s).to_owned()).collect(),
            })
            .collect();
        let subject_index: HashMap<&str, u32> = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.subject_id.as_str(), i as u32))
            .collect();
        let position =
            |list: &[String], id: &str| list.binary_search_by(|s| s.as_str().cmp(id)).ok();

        let mut probe_slots: HashMap<(u32, Role), Vec<(u32, u16)>> = HashMap::new();
        let mut records = Vec::with_capacity(rows.len());
        for (owner, role, probe_subject, probe_session, enrol_session, line) in &rows {
            let bad = |msg: String| KvcError::format(path, *line, msg);
            let owner_ix = subject_index[owner.as_str()];
            let probe_ix = subject_index[probe_subject.as_str()];
            if (*role == Role::Genuine) != (owner_ix == probe_ix) {
                return Err(bad(format!(
                    "{role} comparison between {owner:?} and {probe_subject:?}"
                )));
            }
            let owner_rec = &subjects[owner_ix as usize];
            let enrol_ix = position(&owner_rec.enrolment, enrol_session).expect("collected above");
            if enrol_ix >= ENROLMENT_SESSIONS {
                return Err(bad(format!(
                    "subject {owner:?} has more than {ENROLMENT_SESSIONS} enrolment sessions"
                )));
            }
            let session_ix = position(&subjects[probe_ix as usize].verification, probe_session)
                .expect("collected above");
            let session_ix = u16::try_from(session_ix)
                .map_err(|_| bad("too many verification sessions".into()))?;
            let slots = probe_slots.entry((owner_ix, *role)).or_default();
            let probe = match slots.iter().position(|&p| p == (probe_ix, session_ix)) {
                Some(p) => p,
                None => {
                    slots.push((probe_ix, session_ix));
                    slots.len() - 1
                }
            };
            if probe >= PROBES_PER_ROLE {
                return Err(bad(format!(
                    "subject {owner:?} has more than {PROBES_PER_ROLE} {role} probes"
                )));
            }
            records.push(ComparisonRecord {
                owner: owner_ix,
                role: *role,
                probe_index: probe as u8,
                enrol_index: enrol_ix as u8,
                probe_subject: probe_ix,
                probe_session: session_ix,
            });
        }
        let plan = ComparisonPlan {
            seed: None,
            subjects,
            records,
        };
        check_structure(&plan)?;
        Ok(plan)
    }
}

/// Every owner must have the full 10 probes x 5 enrolments for each role.
fn check_structure(plan: &ComparisonPlan) -> Result<()> {
    let mut seen: HashMap<u32, [[u8; PROBES_PER_ROLE]; 3]> = HashMap::new();
    for r in &plan.records {
        let cell = &mut seen.entry(r.owner).or_insert([[0; PROBES_PER_ROLE]; 3])[r.role as usize]
            [r.probe_index as usize];
        let bit = 1u8 << r.enrol_index;
        if *cell & bit != 0 {
            return Err(KvcError::Invalid(format!(
                "duplicate comparison for {} ({}, probe {}, enrolment {})",
                plan.owner_id(r),
                r.role,
                r.probe_index,
                r.enrol_index
            )));
        }
        *cell |= bit;
    }
    for (owner, roles) in &seen {
        if roles.iter().flatten().any(|&m| m != 0b1_1111) {
            return Err(KvcError::Invalid(format!(
                "subject {} does not have the full {RECORDS_PER_SUBJECT} comparisons",
                plan.subjects[*owner as usize].subject_id
            )));
        }
    }
    Ok(())
}

/// Builds the seeded comparison plan for every subject of `dataset`.
pub fn build_plan(dataset: &Dataset, seed: u64) -> Result<ComparisonPlan> {
    let mut subjects = Vec::with_capacity(dataset.subjects.len());
    let mut groups = Vec::with_capacity(dataset.subjects.len());
    for s in dataset.subjects.values() {
        if s.sessions.len() < MIN_EVALUATION_SESSIONS {
            return Err(KvcError::Protocol(format!(
                "subject {:?} has {} sessions, {MIN_EVALUATION_SESSIONS} required",
                s.subject_id,
                s.sessions.len()
            )));
        }
        let group = s.demographics.ok_or_else(|| {
            KvcError::Protocol(format!(
                "subject {:?} has no demographic label",
                s.subject_id
            ))
        })?;
        let ids: Vec<String> = s
            .sessions
            .keys()
            .take(MIN_EVALUATION_SESSIONS)
            .cloned()
            .collect();
        subjects.push(PlanSubject {
            subject_id: s.subject_id.clone(),
            enrolment: ids[..ENROLMENT_SESSIONS].to_vec(),
            verification: ids[ENROLMENT_SESSIONS..].to_vec(),
        });
        groups.push(group);
    }
    if subjects.is_empty() {
        return Err(KvcError::Protocol("dataset has no subjects".into()));
    }

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); DemographicGroup::COUNT];
    for (i, g) in groups.iter().enumerate() {
        members[g.index()].push(i as u32);
    }
    let all_groups = DemographicGroup::all();
    let mut dissimilar_pools: Vec<Vec<u32>> = vec![Vec::new(); DemographicGroup::COUNT];
    for g in all_groups {
        if members[g.index()].is_empty() {
            continue;
        }
        if members[g.index()].len() < 2 {
            return Err(KvcError::Protocol(format!(
                "demographic group {g} has a single subject: no similar impostor pool"
            )));
        }
        let pool: Vec<u32> = all_groups
            .iter()
            .filter(|other| g.fully_differs(**other))
            .flat_map(|other| members[other.index()].iter().copied())
            .collect();
        if pool.is_empty() {
            return Err(KvcError::Protocol(format!(
                "no dissimilar impostor pool for group {g}: no subject differs in both age bin and gender"
            )));
        }
        dissimilar_pools[g.index()] = pool;
    }

    let per_session = VERIFICATION_SESSIONS as u64;
    let mut rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(subjects.len() * RECORDS_PER_SUBJECT);
    let push_role =
        |records: &mut Vec<ComparisonRecord>, owner: u32, role, probes: &[(u32, u16)]| {
            for (p, &(probe_subject, probe_session)) in probes.iter().enumerate() {
                for e in 0..ENROLMENT_SESSIONS {
                    records.push(ComparisonRecord {
                        owner,
                        role,
                        probe_index: p as u8,
                        enrol_index: e as u8,
                        probe_subject,
                        probe_session,
                    });
                }
            }
        };
    for (owner, group) in groups.iter().enumerate() {
        let owner = owner as u32;
        let genuine: Vec<(u32, u16)> = (0..VERIFICATION_SESSIONS as u16)
            .map(|s| (owner, s))
            .collect();
        push_role(&mut records, owner, Role::Genuine, &genuine);

        let same = &members[group.index()];
        let owner_pos = same.binary_search(&owner).expect("owner is in its group");
        let similar: Vec<(u32, u16)> = rng
            .sample_distinct((same.len() as u64 - 1) * per_session, PROBES_PER_ROLE)
            .into_iter()
            .map(|k| {
                let j = (k / per_session) as usize;
                let subject = if j < owner_pos { same[j] } else { same[j + 1] };
                (subject, (k % per_session) as u16)
            })
            .collect();
        push_role(&mut records, owner, Role::SimilarImpostor, &similar);

        let pool = &dissimilar_pools[group.index()];
        let dissimilar: Vec<(u32, u16)> = rng
            .sample_distinct(pool.len() as u64 * per_session, PROBES_PER_ROLE)
            .into_iter()
            .map(|k| (pool[(k / per_session) as usize], (k % per_session) as u16))
            .collect();
        push_role(&mut records, owner, Role::DissimilarImpostor, &dissimilar);
    }

    Ok(ComparisonPlan {
        seed: Some(seed),
        subjects,
        records,
    })
}

/// Similarity scores aligned index-for-index with a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet(Vec<f64>);

impl ScoreSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(KvcError::ScoreOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Score submission file: one decimal score per line.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| KvcError::io(path, e))?;
        let mut values = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KvcError::io(path, e))?;
            let line_no = i as u64 + 1;
            let text = line.trim();
            if text.is_empty() {
                return Err(KvcError::format(path, line_no, "empty line"));
            }
            let v: f64 = text
                .parse()
                .map_err(|_| KvcError::format(path, line_no, format!("not a number: {text:?}")))?;
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(KvcError::format(
                    path,
                    line_no,
                    format!("score {v} outside [0, 1]"),
                ));
            }
            values.push(v);
        }
        Ok(Self(values))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let io = |e| KvcError::io(path, e);
        for v in &self.0 {
            writeln!(out, "{v}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScoreProfile {
    pub subject_id: String,
    pub genuine: Vec<f64>,
    pub similar_impostor: Vec<f64>,
    pub dissimilar_impostor: Vec<f64>,
}

impl SubjectScoreProfile {
    /// Similar then dissimilar impostor scores.
    pub fn impostor(&self) -> impl Iterator<Item = f64> + '_ {
        self.similar_impostor
            .iter()
            .chain(&self.dissimilar_impostor)
            .copied()
    }

    pub fn is_complete(&self) -> bool {
        self.genuine.len() == PROBES_PER_ROLE
            && self.similar_impostor.len() == PROBES_PER_ROLE
            && self.dissimilar_impostor.len() == PROBES_PER_ROLE
    }
}

pub fn write_profiles(profiles: &[SubjectScoreProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, profiles)?;
    out.flush().map_err(|e| KvcError::io(path, e))
}

/// One probe's score averaged over the owner's enrolment sessions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeScore {
    pub owner: u32,
    pub role: Role,
    pub probe_index: u8,
    pub probe_subject: u32,
    pub score: f64,
}

/// Enrolment-averaged probe scores, ordered by owner, role, probe index.
pub fn aggregate_probes(plan: &ComparisonPlan, scores: &ScoreSet) -> Result<Vec<ProbeScore>> {
    if plan.len() != scores.len() {
        return Err(KvcError::LengthMismatch {
            expected: plan.len(),
            actual: scores.len(),
        });
    }
    let n = plan.subjects.len();
    let slots = 3 * PROBES_PER_ROLE;
    let mut sum = vec![0.0f64; n * slots];
    let mut count = vec![0u8; n * slots];
    let mut probe_subject = vec![u32::MAX; n * slots];
    for (index, (r, &s)) in plan.records.iter().zip(scores.values()).enumerate() {
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            return Err(KvcError::ScoreOutOfRange { index, value: s });
        }
        let k =
            r.owner as usize * slots + r.role as usize * PROBES_PER_ROLE + r.probe_index as usize;
        sum[k] += s;
        count[k] += 1;
        probe_subject[k] = r.probe_subject;
    }
    let mut out = Vec::with_capacity(plan.len() / ENROLMENT_SESSIONS);
    for owner in 0..n {
        for role in Role::ALL {
            for p in 0..PROBES_PER_ROLE {
                let k = owner * slots + role as usize * PROBES_PER_ROLE + p;
                if count[k] == 0 {
                    continue;
                }
                out.push(ProbeScore {
                    owner: owner as u32,
                    role,
                    probe_index: p as u8,
                    probe_subject: probe_subject[k],
                    score: sum[k] / f64::from(count[k]),
                });
            }
        }
    }
    Ok(out)
}

/// Per-subject genuine / similar / dissimilar profiles, sorted by subject id.
pub fn aggregate(plan: &ComparisonPlan, scores: &ScoreSet) -> Result<Vec<SubjectScoreProfile>> {
    let probes = aggregate_probes(plan, scores)?;
    Ok(profiles_from_probes(plan, &probes))
}

pub fn profiles_from_probes(
    plan: &ComparisonPlan,
    probes: &[ProbeScore],
) -> Vec<SubjectScoreProfile> {
    let mut out: Vec<SubjectScoreProfile> = Vec::new();
    for p in probes {
        let id = &plan.subjects[p.owner as usize].subject_id;
        if out.last().is_none_or(|last| &last.subject_id != id) {
            out.push(SubjectScoreProfile {
                subject_id: id.clone(),
                genuine: Vec::with_capacity(PROBES_PER_ROLE),
                similar_impostor: Vec::with_capacity(PROBES_PER_ROLE),
                dissimilar_impostor: Vec::with_capacity(PROBES_PER_ROLE),
            });
        }
        let last = out.last_mut().expect("pushed above");
        match p.role {
            Role::Genuine => last.genuine.push(p.score),
            Role::SimilarImpostor => last.similar_impostor.push(p.score),
            Role::DissimilarImpostor => last.dissimilar_impostor.push(p.score),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    pub eers: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<f64>,
}

/// Rebuilds the plan for each seed, scores it and reports the spread of the global EER.
pub fn plan_stability_probe<F>(
    dataset: &Dataset,
    seeds: &[u64],
    mut score: F,
) -> Result<StabilityReport>
where
    F: FnMut(&ComparisonPlan) -> Result<ScoreSet>,
{
    if seeds.is_empty() {
        return Err(KvcError::Invalid("no seeds given".into()));
    }
    let mut eers = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let plan = build_plan(dataset, seed)?;
        let scores = score(&plan)?;
        let profiles = aggregate(&plan, &scores)?;
        eers.push(metrics::evaluate_global(&profiles)?.eer);
    }
    let n = eers.len() as f64;
    let mean = eers.iter().sum::<f64>() / n;
    let std = (eers.len() > 1)
        .then(|| (eers.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Ok(StabilityReport {
        seeds: seeds.to_vec(),
        eers,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AgeBin, Gender, KeyEvent, Scenario, Session, SubjectRecord};

    fn toy_dataset(groups: &[(DemographicGroup, usize)]) -> Dataset {
        let mut d = Dataset::new(Scenario::Desktop);
        let mut n = 0;
        for &(g, count) in groups {
            for _ in 0..count {
                let mut s = SubjectRecord::new(format!("U{n:04}"));
                for k in 0..16 {
                    let events = (0..4)
                        .map(|i| KeyEvent::new(97, i * 100, i * 100 + 40).unwrap())
                        .collect();
                    s.insert_session(Session::new(format!("U{n:04}_{k:02}"), events))
                        .unwrap();
                }
                s.demographics = Some(g);
                d.insert_subject(s).unwrap();
                n += 1;
            }
        }
        d
    }

    fn g(age: AgeBin, gender: Gender) -> DemographicGroup {
        DemographicGroup::new(age, gender)
    }

    fn balanced(per_group: usize) -> Dataset {
        let groups: Vec<_> = DemographicGroup::all()
            .into_iter()
            .map(|g| (g, per_group))
            .collect();
        toy_dataset(&groups)
    }

    #[test]
    fn plan_structure_and_constraints() {
        let d = balanced(3);
        let labels = d.demographics();
        let plan = build_plan(&d, 11).unwrap();
        assert_eq!(plan.len(), RECORDS_PER_SUBJECT * 36);
        for chunk in plan.records.chunks(RECORDS_PER_SUBJECT) {
            let owner = chunk[0].owner;
            assert!(chunk.iter().all(|r| r.owner == owner));
            for role in Role::ALL {
                assert_eq!(chunk.iter().filter(|r| r.role == role).count(), 50);
            }
            let mut impostor_sessions = BTreeSet::new();
            for r in chunk {
                let og = labels[plan.owner_id(r)];
                let pg = labels[plan.probe_subject_id(r)];
                match r.role {
                    Role::Genuine => assert_eq!(r.probe_subject, owner),
                    Role::SimilarImpostor => {
                        assert_ne!(r.probe_subject, owner);
                        assert_eq!(og, pg);
                    }
                    Role::DissimilarImpostor => {
                        assert!(og.fully_differs(pg));
                    }
                }
                if r.role.is_impostor() && r.enrol_index == 0 {
                    assert!(impostor_sessions.insert((r.probe_subject, r.probe_session)));
                }
            }
        }
        // Canonical order.
        let keys: Vec<_> = plan
            .records
            .iter()
            .map(|r| (r.owner, r.role, r.probe_index, r.enrol_index))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        // Split by sorted session id, 16th session unused.
        let s0 = &plan.subjects[0];
        assert_eq!(s0.enrolment[0], "U0000_00");
        assert_eq!(s0.verification[9], "U0000_14");
    }

    #[test]
    fn deterministic_per_seed() {
        let d = balanced(2);
        assert_eq!(build_plan(&d, 5).unwrap(), build_plan(&d, 5).unwrap());
        assert_ne!(
            build_plan(&d, 5).unwrap().records,
            build_plan(&d, 6).unwrap().records
        );
    }

    #[test]
    fn missing_pools_are_errors() {
        let d = toy_dataset(&[(g(AgeBin::Age10To13, Gender::Male), 2)]);
        let err = build_plan(&d, 1).unwrap_err().to_string();
        assert!(err.contains("no dissimilar impostor pool"), "{err}");

        let d = toy_dataset(&[
            (g(AgeBin::Age10To13, Gender::Male), 1),
            (g(AgeBin::Age14To17, Gender::Female), 2),
        ]);
        let err = build_plan(&d, 1).unwrap_err().to_string();
        assert!(err.contains("single subject"), "{err}");
    }

    #[test]
    fn unlabeled_or_short_subjects_rejected() {
        let mut d = balanced(2);
        d.subjects.values_mut().next().unwrap().demographics = None;
        assert!(build_plan(&d, 1).is_err());
        let mut d = balanced(2);
        let s = d.subjects.values_mut().next().unwrap();
        while s.sessions.len() > 14 {
            let k = s.sessions.keys().next().unwrap().clone();
            s.sessions.remove(&k);
        }
        assert!(build_plan(&d, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = balanced(2);
        let plan = build_plan(&d, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plan.csv");
        plan.write_csv(&p).unwrap();
        let back = ComparisonPlan::read_csv(&p).unwrap();
        assert_eq!(back.subjects, plan.subjects);
        assert_eq!(back.records, plan.records);

        let blind = dir.path().join("blind.csv");
        plan.write_blind_csv(&blind).unwrap();
        let text = std::fs::read_to_string(&blind).unwrap();
        assert!(text.starts_with("probe_session,enrol_session\n"));
        assert_eq!(text.lines().count(), plan.len() + 1);
    }

    #[test]
    fn truncated_plan_file_rejected() {
        let d = balanced(2);
        let plan = build_plan(&d, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plan.csv");
        plan.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let cut: Vec<&str> = text.lines().take(100).collect();
        std::fs::write(&p, cut.join("\n")).unwrap();
        assert!(ComparisonPlan::read_csv(&p).is_err());
    }

    #[test]
    fn aggregate_means() {
        let d = balanced(2);
        let plan = build_plan(&d, 3).unwrap();
        let raw: Vec<f64> = (0..plan.len())
            .map(|i| [0.2, 0.4, 0.6, 0.8, 1.0][i % 5])
            .collect();
        let profiles = aggregate(&plan, &ScoreSet::new(raw).unwrap()).unwrap();
        assert_eq!(profiles.len(), 24);
        for p in &profiles {
            assert!(p.is_complete());
            assert!(p
                .genuine
                .iter()
                .chain(p.impostor().collect::<Vec<_>>().iter())
                .all(|v| (v - 0.6).abs() < 1e-15));
        }
        let half = ScoreSet::new(vec![0.5; plan.len()]).unwrap();
        let profiles = aggregate(&plan, &half).unwrap();
        assert!(profiles.iter().all(|p| p.genuine.iter().all(|&v| v == 0.5)));
        let ids: Vec<_> = profiles.iter().map(|p| p.subject_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn aggregate_errors() {
        let d = balanced(2);
        let plan = build_plan(&d, 3).unwrap();
        let short = ScoreSet::new(vec![0.5; 10]).unwrap();
        assert!(matches!(
            aggregate(&plan, &short),
            Err(KvcError::LengthMismatch { .. })
        ));
        assert!(ScoreSet::new(vec![0.5, 1.5]).is_err());
        assert!(ScoreSet::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn aggregate_is_repeatable() {
        let d = balanced(2);
        let plan = build_plan(&d, 9).unwrap();
        let mut rng = SplitMix64::new(77);
        let scores = ScoreSet::new((0..plan.len()).map(|_| rng.next_f64()).collect()).unwrap();
        assert_eq!(
            aggregate(&plan, &scores).unwrap(),
            aggregate(&plan, &scores).unwrap()
        );
    }

    #[test]
    fn score_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let s = ScoreSet::new(vec![0.0, 0.125, 1.0, 0.1 + 0.2]).unwrap();
        s.write(&p).unwrap();
        assert_eq!(ScoreSet::read(&p).unwrap(), s);
        std::fs::write(&p, "0.5\nabc\n").unwrap();
        match ScoreSet::read(&p) {
            Err(KvcError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "0.5\n1.2\n").unwrap();
        assert!(ScoreSet::read(&p).is_err());
    }

    #[test]
    fn stability_probe_degenerate_cases() {
        let d = balanced(2);
        let score = |plan: &ComparisonPlan| {
            let mut rng = SplitMix64::new(1);
            ScoreSet::new((0..plan.len()).map(|_| rng.next_f64()).collect())
        };
        let r = plan_stability_probe(&d, &[7, 7, 7], score).unwrap();
        assert_eq!(r.std, Some(0.0));
        let r = plan_stability_probe(&d, &[7], score).unwrap();
        assert_eq!(r.std, None);
    }
}
