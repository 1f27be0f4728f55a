//! Plain-text event and metadata files.
//!
//! Events: `subject_id,session_id,key_code,press_ts_ms,release_ts_ms`, one row per keystroke.
//! Metadata: `subject_id,age_bin,gender`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{
    AgeBin, Dataset, DemographicGroup, Gender, KeyEvent, Scenario, Session, SubjectRecord,
};
use crate::error::{KvcError, Result};
use crate::textio::{create, open_csv};

const EVENT_HEADER: [&str; 5] = [
    "subject_id",
    "session_id",
    "key_code",
    "press_ts_ms",
    "release_ts_ms",
];
const METADATA_HEADER: [&str; 3] = ["subject_id", "age_bin", "gender"];

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| KvcError::format(path, line, format!("bad {name} {raw:?}: {e}")))
}

type RawSessions = BTreeMap<String, BTreeMap<String, Vec<(KeyEvent, u64)>>>;

/// Loads an event file. Line order is irrelevant; events are sorted by press time.
pub fn load_events(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &EVENT_HEADER)?;
    let mut raw: RawSessions = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            KvcError::format(path, line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != EVENT_HEADER.len() {
            return Err(KvcError::format(
                path,
                line,
                format!(
                    "expected {} fields, found {}",
                    EVENT_HEADER.len(),
                    record.len()
                ),
            ));
        }
        let subject_id = &record[0];
        let session_id = &record[1];
        if subject_id.is_empty() || session_id.is_empty() {
            return Err(KvcError::format(path, line, "empty subject or session id"));
        }
        let key_code: u8 = parse_field(path, line, "key_code", &record[2])?;
        let press: i64 = parse_field(path, line, "press_ts_ms", &record[3])?;
        let release: i64 = parse_field(path, line, "release_ts_ms", &record[4])?;
        let event = KeyEvent::new(key_code, press, release)
            .map_err(|e| KvcError::format(path, line, e.to_string()))?;
        raw.entry(subject_id.to_owned())
            .or_default()
            .entry(session_id.to_owned())
            .or_default()
            .push((event, line));
    }

    let mut dataset = Dataset::new(Scenario::Desktop);
    for (subject_id, sessions) in raw {
        let mut subject = SubjectRecord::new(subject_id);
        for (session_id, mut events) in sessions {
            events.sort_unstable();
            if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
                let (first, second) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
                return Err(KvcError::format(
                    path,
                    second,
                    format!(
                        "duplicate event in {}/{} (same as line {first})",
                        subject.subject_id, session_id
                    ),
                ));
            }
            let events = events.into_iter().map(|(e, _)| e).collect();
            subject
                .sessions
                .insert(session_id.clone(), Session { session_id, events });
        }
        dataset.subjects.insert(subject.subject_id.clone(), subject);
    }
    Ok(dataset)
}

pub fn save_events(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| KvcError::io(path, e);
    writeln!(out, "{}", EVENT_HEADER.join(",")).map_err(io)?;
    for subject in dataset.subjects.values() {
        for session in subject.sessions.values() {
            for e in &session.events {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    subject.subject_id, session.session_id, e.key_code, e.press_ts, e.release_ts
                )
                .map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

/// Reads a metadata file into subject id to group.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<BTreeMap<String, DemographicGroup>> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &METADATA_HEADER)?;
    let mut labels = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            KvcError::format(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != METADATA_HEADER.len() {
            return Err(KvcError::format(path, line, "expected 3 fields"));
        }
        let age: AgeBin = row[1]
            .parse()
            .map_err(|e: KvcError| KvcError::format(path, line, e.to_string()))?;
        let gender: Gender = row[2]
            .parse()
            .map_err(|e: KvcError| KvcError::format(path, line, e.to_string()))?;
        match labels.entry(row[0].to_owned()) {
            Entry::Vacant(v) => {
                v.insert(DemographicGroup::new(age, gender));
            }
            Entry::Occupied(o) => {
                return Err(KvcError::format(
                    path,
                    line,
                    format!("subject {:?} listed twice", o.key()),
                ));
            }
        }
    }
    Ok(labels)
}

/// Attaches the metadata file's labels. Ids absent from the dataset are logged and skipped.
pub fn load_metadata(path: impl AsRef<Path>, mut dataset: Dataset) -> Result<Dataset> {
    let labels = read_metadata(path.as_ref())?;
    let unknown = dataset.attach_demographics(&labels);
    if !unknown.is_empty() {
        log::warn!(
            "{}: {} subject(s) not in dataset, e.g. {:?}",
            path.as_ref().display(),
            unknown.len(),
            unknown[0]
        );
    }
    Ok(dataset)
}

pub fn save_metadata(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| KvcError::io(path, e);
    writeln!(out, "{}", METADATA_HEADER.join(",")).map_err(io)?;
    for subject in dataset.subjects.values() {
        if let Some(g) = subject.demographics {
            writeln!(out, "{},{},{}", subject.subject_id, g.age_bin, g.gender).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
