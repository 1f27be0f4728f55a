//! Per-keystroke timing features under the four privacy-graded feature sets.
//!
//! For keystroke `i` with press `p_i` and release `r_i`:
//!
//! | channel | value            | channel | value            |
//! |---------|------------------|---------|------------------|
//! | HT      | `r_i - p_i`      | IPT2    | `p_{i+2} - p_i`  |
//! | IPT     | `p_{i+1} - p_i`  | IRT2    | `r_{i+2} - r_i`  |
//! | IRT     | `r_{i+1} - r_i`  | IKT2    | `p_{i+2} - r_i`  |
//! | IKT     | `p_{i+1} - r_i`  | IPT3    | `p_{i+3} - p_i`  |
//! | ASCII   | `code / 255`     | IRT3    | `r_{i+3} - r_i`  |
//! |         |                  | IKT3    | `p_{i+3} - r_i`  |
//!
//! Times are in seconds. Rows near the end of a session whose look-ahead runs
//! past the last key hold 0 in the affected channels and are flagged padded;
//! statistics skip those entries. IKT is not clamped and may be negative.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Session, MIN_SESSION_EVENTS};
use crate::error::{KvcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Ht,
    Ipt,
    Irt,
    Ikt,
    Ascii,
    Ipt2,
    Irt2,
    Ikt2,
    Ipt3,
    Irt3,
    Ikt3,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Ht => "HT",
            Channel::Ipt => "IPT",
            Channel::Irt => "IRT",
            Channel::Ikt => "IKT",
            Channel::Ascii => "ASCII",
            Channel::Ipt2 => "IPT2",
            Channel::Irt2 => "IRT2",
            Channel::Ikt2 => "IKT2",
            Channel::Ipt3 => "IPT3",
            Channel::Irt3 => "IRT3",
            Channel::Ikt3 => "IKT3",
        }
    }

    /// How many keys past the current one the channel reads.
    pub fn lookahead(self) -> usize {
        match self {
            Channel::Ht | Channel::Ascii => 0,
            Channel::Ipt | Channel::Irt | Channel::Ikt => 1,
            Channel::Ipt2 | Channel::Irt2 | Channel::Ikt2 => 2,
            Channel::Ipt3 | Channel::Irt3 | Channel::Ikt3 => 3,
        }
    }
}

const F4: [Channel; 4] = [Channel::Ht, Channel::Ipt, Channel::Irt, Channel::Ikt];
const F5: [Channel; 5] = [
    Channel::Ht,
    Channel::Ipt,
    Channel::Irt,
    Channel::Ikt,
    Channel::Ascii,
];
const F10: [Channel; 10] = [
    Channel::Ht,
    Channel::Ipt,
    Channel::Irt,
    Channel::Ikt,
    Channel::Ipt2,
    Channel::Irt2,
    Channel::Ikt2,
    Channel::Ipt3,
    Channel::Irt3,
    Channel::Ikt3,
];
const F11: [Channel; 11] = [
    Channel::Ht,
    Channel::Ipt,
    Channel::Irt,
    Channel::Ikt,
    Channel::Ipt2,
    Channel::Irt2,
    Channel::Ikt2,
    Channel::Ipt3,
    Channel::Irt3,
    Channel::Ikt3,
    Channel::Ascii,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSetId {
    #[serde(rename = "4f")]
    F4,
    #[serde(rename = "5f")]
    F5,
    #[serde(rename = "10f")]
    F10,
    #[serde(rename = "11f")]
    F11,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 4] = [
        FeatureSetId::F4,
        FeatureSetId::F5,
        FeatureSetId::F10,
        FeatureSetId::F11,
    ];

    pub fn channels(self) -> &'static [Channel] {
        match self {
            FeatureSetId::F4 => &F4,
            FeatureSetId::F5 => &F5,
            FeatureSetId::F10 => &F10,
            FeatureSetId::F11 => &F11,
        }
    }

    pub fn width(self) -> usize {
        self.channels().len()
    }
}

impl FromStr for FeatureSetId {
    type Err = KvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "4f" | "f4" => Ok(FeatureSetId::F4),
            "5f" | "f5" => Ok(FeatureSetId::F5),
            "10f" | "f10" => Ok(FeatureSetId::F10),
            "11f" | "f11" => Ok(FeatureSetId::F11),
            _ => Err(KvcError::Invalid(format!("unknown feature set {s:?}"))),
        }
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureSetId::F4 => "4F",
            FeatureSetId::F5 => "5F",
            FeatureSetId::F10 => "10F",
            FeatureSetId::F11 => "11F",
        };
        f.write_str(s)
    }
}

/// Row-major feature matrix for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub feature_set: FeatureSetId,
    pub source_session_id: String,
    values: Vec<f64>,
    rows: usize,
    /// Per channel: entries at row index `>= valid_rows[c]` are padding.
    valid_rows: Vec<usize>,
}

impl FeatureSequence {
    /// Builds a sequence from explicit rows with no padding.
    pub fn from_rows(
        feature_set: FeatureSetId,
        source_session_id: impl Into<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let width = feature_set.width();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(KvcError::Invalid(format!(
                "row width {} does not match {feature_set} ({width})",
                bad.len()
            )));
        }
        Ok(Self {
            feature_set,
            source_session_id: source_session_id.into(),
            values: rows.iter().flatten().copied().collect(),
            rows: rows.len(),
            valid_rows: vec![rows.len(); width],
        })
    }

    pub fn width(&self) -> usize {
        self.feature_set.width()
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width())
    }

    /// True when any channel of row `i` is padding.
    pub fn is_padded(&self, i: usize) -> bool {
        self.valid_rows.iter().any(|&v| i >= v)
    }

    pub fn is_valid(&self, row: usize, channel: usize) -> bool {
        row < self.valid_rows[channel]
    }

    /// Non-padded values of one channel, in row order.
    pub fn channel_values(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.width();
        (0..self.valid_rows[channel]).map(move |i| self.values[i * w + channel])
    }

    /// Copy of this sequence with the ASCII channel removed (11F to 10F, 5F to 4F).
    pub fn without_ascii(&self) -> Option<FeatureSequence> {
        let target = match self.feature_set {
            FeatureSetId::F5 => FeatureSetId::F4,
            FeatureSetId::F11 => FeatureSetId::F10,
            _ => return None,
        };
        let channels = self.feature_set.channels();
        let keep: Vec<usize> = (0..channels.len())
            .filter(|&c| channels[c] != Channel::Ascii)
            .collect();
        let values = self
            .rows()
            .flat_map(|r| keep.iter().map(move |&c| r[c]))
            .collect();
        Some(FeatureSequence {
            feature_set: target,
            source_session_id: self.source_session_id.clone(),
            values,
            rows: self.rows,
            valid_rows: keep.iter().map(|&c| self.valid_rows[c]).collect(),
        })
    }

    /// CSV dump: channel names, then a `padded` flag column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = crate::textio::create(path)?;
        let io = |e| KvcError::io(path, e);
        let header: Vec<&str> = self
            .feature_set
            .channels()
            .iter()
            .map(|c| c.name())
            .collect();
        writeln!(out, "{},padded", header.join(",")).map_err(io)?;
        for (i, row) in self.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", cells.join(","), u8::from(self.is_padded(i))).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[inline]
fn seconds(delta_ms: i64) -> f64 {
    delta_ms as f64 / 1000.0
}

pub fn extract(session: &Session, feature_set: FeatureSetId) -> Result<FeatureSequence> {
    let n = session.len();
    if n < MIN_SESSION_EVENTS {
        return Err(KvcError::SessionTooShort {
            session_id: session.session_id.clone(),
            len: n,
            min: MIN_SESSION_EVENTS,
        });
    }
    let ev = &session.events;
    let channels = feature_set.channels();
    let mut values = Vec::with_capacity(n * channels.len());
    for i in 0..n {
        let (p, r) = (ev[i].press_ts, ev[i].release_ts);
        let ahead = |k: usize| ev.get(i + k).map(|e| (e.press_ts, e.release_ts));
        for &ch in channels {
            let v = match ch {
                Channel::Ht => seconds(r - p),
                Channel::Ascii => f64::from(ev[i].key_code) / 255.0,
                Channel::Ipt | Channel::Ipt2 | Channel::Ipt3 => {
                    ahead(ch.lookahead()).map_or(0.0, |(pn, _)| seconds(pn - p))
                }
                Channel::Irt | Channel::Irt2 | Channel::Irt3 => {
                    ahead(ch.lookahead()).map_or(0.0, |(_, rn)| seconds(rn - r))
                }
                Channel::Ikt | Channel::Ikt2 | Channel::Ikt3 => {
                    ahead(ch.lookahead()).map_or(0.0, |(pn, _)| seconds(pn - r))
                }
            };
            values.push(v);
        }
    }
    Ok(FeatureSequence {
        feature_set,
        source_session_id: session.session_id.clone(),
        values,
        rows: n,
        valid_rows: channels.iter().map(|c| n - c.lookahead()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
}

/// Mean, population std and median per channel over non-padded entries.
/// A channel with no valid entries reports zeros.
pub fn feature_matrix_stats(seq: &FeatureSequence) -> Vec<ChannelStats> {
    let mut buf = Vec::with_capacity(seq.len());
    (0..seq.width())
        .map(|c| {
            buf.clear();
            buf.extend(seq.channel_values(c));
            channel_stats(&mut buf)
        })
        .collect()
}

fn channel_stats(values: &mut [f64]) -> ChannelStats {
    if values.is_empty() {
        return ChannelStats {
            mean: 0.0,
            std: 0.0,
            median: 0.0,
        };
    }
    let n = values.len() as f64;
    // Shifted by the first value so constant channels come out exact.
    let shift = values[0];
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + offset;
    let var = values
        .iter()
        .map(|v| (v - shift - offset) * (v - shift - offset))
        .sum::<f64>()
        / n;
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    };
    ChannelStats {
        mean,
        std: var.sqrt(),
        median,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::KeyEvent;
    use proptest::prelude::*;

    fn session(events: &[(u8, i64, i64)]) -> Session {
        Session::new(
            "s",
            events
                .iter()
                .map(|&(k, p, r)| KeyEvent::new(k, p, r).unwrap())
                .collect(),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn channel_counts() {
        assert_eq!(FeatureSetId::F4.width(), 4);
        assert_eq!(FeatureSetId::F5.width(), 5);
        assert_eq!(FeatureSetId::F10.width(), 10);
        assert_eq!(FeatureSetId::F11.width(), 11);
        assert_eq!("10f".parse::<FeatureSetId>().unwrap(), FeatureSetId::F10);
        assert!("7f".parse::<FeatureSetId>().is_err());
    }

    #[test]
    fn first_row_of_f4_and_f5() {
        let s = session(&[
            (97, 0, 100),
            (98, 150, 300),
            (99, 400, 450),
            (100, 500, 560),
        ]);
        let f4 = extract(&s, FeatureSetId::F4).unwrap();
        let want = [0.100, 0.150, 0.200, 0.050];
        for (got, want) in f4.row(0).iter().zip(want) {
            assert!(close(*got, want), "{got} vs {want}");
        }
        let f5 = extract(&s, FeatureSetId::F5).unwrap();
        assert!(close(f5.row(0)[4], 97.0 / 255.0));
        assert!((f5.row(0)[4] - 0.380392).abs() < 1e-6);
    }

    #[test]
    fn trigraph_and_padding() {
        // press 0,100,220,360; releases 50 ms after each press.
        let s = session(&[(97, 0, 50), (98, 100, 150), (99, 220, 270), (100, 360, 410)]);
        let f = extract(&s, FeatureSetId::F10).unwrap();
        // IPT3 is channel 7.
        assert!(close(f.row(0)[7], 0.360));
        assert!(close(f.row(0)[8], 0.360)); // IRT3
        assert!(close(f.row(0)[9], 0.310)); // IKT3
        assert!(!f.is_padded(0));
        for i in 1..4 {
            assert!(f.is_padded(i));
            assert_eq!(f.row(i)[7], 0.0);
        }
        // Row 2: IPT defined (0.140), IPT2 padded.
        assert!(close(f.row(2)[1], 0.140));
        assert_eq!(f.row(2)[4], 0.0);
        assert!(f.is_valid(2, 1) && !f.is_valid(2, 4));
        // Last row keeps HT.
        assert!(close(f.row(3)[0], 0.050));
        assert_eq!(f.row(3)[1], 0.0);
    }

    #[test]
    fn short_session_rejected() {
        let s = session(&[(97, 0, 50), (98, 100, 150), (99, 220, 270)]);
        assert!(matches!(
            extract(&s, FeatureSetId::F4),
            Err(KvcError::SessionTooShort { len: 3, .. })
        ));
    }

    #[test]
    fn negative_ikt_kept() {
        // Second key pressed before the first is released.
        let s = session(&[
            (97, 0, 200),
            (98, 100, 250),
            (99, 400, 450),
            (100, 500, 560),
        ]);
        let f = extract(&s, FeatureSetId::F4).unwrap();
        assert!(close(f.row(0)[3], -0.100));
    }

    #[test]
    fn stats_examples() {
        let seq = FeatureSequence::from_rows(
            FeatureSetId::F4,
            "x",
            &[
                vec![0.1, 1.0, 5.0, 0.0],
                vec![0.1, 2.0, 5.0, 0.0],
                vec![0.1, 3.0, 5.0, 0.0],
            ],
        )
        .unwrap();
        let st = feature_matrix_stats(&seq);
        assert!(close(st[0].mean, 0.1) && st[0].std == 0.0 && close(st[0].median, 0.1));
        assert!(close(st[1].mean, 2.0));
        assert!((st[1].std - 0.816497).abs() < 1e-6);
        assert!(close(st[1].median, 2.0));

        let single =
            FeatureSequence::from_rows(FeatureSetId::F5, "y", &[vec![0.1, 0.2, 0.3, 0.4, 0.5]])
                .unwrap();
        assert!(feature_matrix_stats(&single).iter().all(|s| s.std == 0.0));
    }

    #[test]
    fn stats_skip_padding() {
        let s = session(&[(97, 0, 50), (98, 100, 150), (99, 200, 250), (100, 300, 350)]);
        let f = extract(&s, FeatureSetId::F4).unwrap();
        let st = feature_matrix_stats(&f);
        // IPT is 0.1 on the three valid rows; the padded zero must not leak in.
        assert!(close(st[1].mean, 0.1));
        assert_eq!(st[1].std, 0.0);
    }

    #[test]
    fn even_median() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert!(close(channel_stats(&mut v).median, 2.5));
    }

    fn arb_session() -> impl Strategy<Value = Vec<(u8, i64, i64)>> {
        prop::collection::vec((any::<u8>(), 0i64..400, 0i64..300), 4..40).prop_map(|steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(k, gap, hold)| {
                    t += gap;
                    (k, t, t + hold)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn time_shift_invariance(events in arb_session(), shift in -1_000_000_000i64..1_000_000_000) {
            let a = session(&events);
            let shifted: Vec<_> = events.iter().map(|&(k, p, r)| (k, p + shift, r + shift)).collect();
            let b = session(&shifted);
            for fs in FeatureSetId::ALL {
                prop_assert_eq!(extract(&a, fs).unwrap().values, extract(&b, fs).unwrap().values);
            }
        }

        #[test]
        fn unit_laws(events in arb_session()) {
            let f = extract(&session(&events), FeatureSetId::F4).unwrap();
            let n = f.len();
            for i in 0..n - 1 {
                let (ht, ipt, irt, ikt) = (f.row(i)[0], f.row(i)[1], f.row(i)[2], f.row(i)[3]);
                prop_assert!((ikt - (ipt - ht)).abs() < 1e-12);
                prop_assert!((irt - (f.row(i + 1)[0] + ikt)).abs() < 1e-12);
            }
        }

        #[test]
        fn ascii_columns_are_the_only_difference(events in arb_session()) {
            let s = session(&events);
            let f5 = extract(&s, FeatureSetId::F5).unwrap();
            prop_assert_eq!(f5.without_ascii().unwrap(), extract(&s, FeatureSetId::F4).unwrap());
            let f11 = extract(&s, FeatureSetId::F11).unwrap();
            prop_assert_eq!(f11.without_ascii().unwrap(), extract(&s, FeatureSetId::F10).unwrap());
            let ascii = f11.width() - 1;
            prop_assert!(f11.channel_values(ascii).all(|v| (0.0..=1.0).contains(&v)));
        }
    }
}
