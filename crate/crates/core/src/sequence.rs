//! Event-log ingestion, sessionization and unit selection.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::ops::Range;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::stats;

/// Ordered set of state labels. The order fixes the row/column order of
/// every matrix derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(TnaError::Alphabet("no labels".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(TnaError::Alphabet("empty label".into()));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(TnaError::Alphabet(format!("duplicate label `{l}`")));
            }
        }
        Ok(Alphabet { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Encodes a slice of labels; fails on the first unknown label.
    pub fn encode(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| TnaError::invalid(format!("unknown state `{l}`")))
            })
            .collect()
    }

    /// Fails with the symmetric difference of labels when the two alphabets
    /// are not identical (including order).
    pub fn ensure_same(&self, other: &Alphabet) -> Result<()> {
        if self.labels == other.labels {
            return Ok(());
        }
        let only_first: Vec<String> = self
            .labels
            .iter()
            .filter(|l| other.index_of(l).is_none())
            .cloned()
            .collect();
        let only_second: Vec<String> = other
            .labels
            .iter()
            .filter(|l| self.index_of(l).is_none())
            .cloned()
            .collect();
        if only_first.is_empty() && only_second.is_empty() {
            return Err(TnaError::Alphabet(
                "alphabets contain the same labels in a different order".into(),
            ));
        }
        Err(TnaError::AlphabetMismatch {
            only_first,
            only_second,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub unit_id: String,
    pub actor_id: String,
    pub timestamp: NaiveDateTime,
    /// Index into the log's [`Alphabet`].
    pub code: usize,
    pub group: Option<String>,
    /// 1-based line in the source file (0 for synthetic events).
    pub line: u64,
}

/// Events of one analysis unit, sorted by timestamp (ties keep input order).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitLog {
    pub unit_id: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub alphabet: Alphabet,
    /// Units in order of first appearance.
    pub units: Vec<UnitLog>,
}

impl EventLog {
    /// Builds a log from events, grouping by unit and stably sorting each
    /// unit by timestamp.
    pub fn from_events(alphabet: Alphabet, events: Vec<Event>) -> Result<Self> {
        if events.is_empty() {
            return Err(TnaError::Empty("event log has no rows".into()));
        }
        let mut units: Vec<UnitLog> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for e in events {
            if e.code >= alphabet.len() {
                return Err(TnaError::Row {
                    line: e.line,
                    message: format!("state index {} outside alphabet", e.code),
                });
            }
            let k = *slot.entry(e.unit_id.clone()).or_insert_with(|| {
                units.push(UnitLog {
                    unit_id: e.unit_id.clone(),
                    events: Vec::new(),
                });
                units.len() - 1
            });
            units[k].events.push(e);
        }
        for u in &mut units {
            u.events.sort_by_key(|e| e.timestamp);
        }
        Ok(EventLog { alphabet, units })
    }

    pub fn n_events(&self) -> usize {
        self.units.iter().map(|u| u.events.len()).sum()
    }

    /// Within-unit inter-event gaps in seconds.
    pub fn gaps(&self) -> Vec<f64> {
        self.units
            .iter()
            .flat_map(|u| u.events.windows(2).map(|w| gap_seconds(&w[0], &w[1])))
            .collect()
    }
}

fn gap_seconds(a: &Event, b: &Event) -> f64 {
    (b.timestamp - a.timestamp).num_milliseconds() as f64 / 1000.0
}

/// Column mapping for delimiter-separated event files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub unit: String,
    /// Defaults to the unit column when absent.
    pub actor: Option<String>,
    pub timestamp: String,
    pub code: String,
    /// Optional per-row grouping attribute used for group comparisons.
    pub group: Option<String>,
    /// chrono format string, `"unix"` for numeric seconds, or `None` for
    /// ISO-8601 / RFC 3339.
    pub timestamp_format: Option<String>,
    pub delimiter: char,
    /// Fixed alphabet; when `None` labels are taken in first-appearance order.
    pub alphabet: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            unit: "unit".into(),
            actor: None,
            timestamp: "timestamp".into(),
            code: "code".into(),
            group: None,
            timestamp_format: None,
            delimiter: ',',
            alphabet: None,
        }
    }
}

pub fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    match format {
        Some("unix") => {
            let secs: f64 = raw.parse().ok()?;
            if !secs.is_finite() {
                return None;
            }
            let ms = (secs * 1000.0).round() as i64;
            DateTime::from_timestamp_millis(ms).map(|d| d.naive_utc())
        }
        Some(fmt) => NaiveDateTime::parse_from_str(raw, fmt).ok(),
        None => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
                return Some(dt.naive_utc());
            }
            [
                "%Y-%m-%dT%H:%M:%S%.f",
                "%Y-%m-%d %H:%M:%S%.f",
                "%Y-%m-%dT%H:%M",
                "%Y-%m-%d %H:%M",
            ]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| TnaError::MissingColumn(name.to_string()))
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| TnaError::invalid(format!("delimiter {c:?} is not ASCII")))
}

/// Reads a header-led delimited event file.
pub fn ingest<R: Read>(source: R, schema: &Schema) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(schema.delimiter)?)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(TnaError::Empty("event file has no header".into()));
    }
    let unit_col = column(&headers, &schema.unit)?;
    let actor_col = match &schema.actor {
        Some(a) => column(&headers, a)?,
        None => unit_col,
    };
    let ts_col = column(&headers, &schema.timestamp)?;
    let code_col = column(&headers, &schema.code)?;
    let group_col = schema.group.as_deref().map(|g| column(&headers, g)).transpose()?;

    let fixed = schema.alphabet.as_ref().map(Alphabet::new).transpose()?;
    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut events = Vec::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let raw_ts = field(ts_col);
        let timestamp = parse_timestamp(raw_ts, schema.timestamp_format.as_deref()).ok_or_else(
            || TnaError::Row {
                line,
                message: format!("unparseable timestamp `{raw_ts}`"),
            },
        )?;
        let raw_code = field(code_col);
        if raw_code.is_empty() {
            return Err(TnaError::Row {
                line,
                message: "empty code".into(),
            });
        }
        let code = match &fixed {
            Some(a) => a.index_of(raw_code).ok_or_else(|| TnaError::Row {
                line,
                message: format!("code `{raw_code}` not in the configured alphabet"),
            })?,
            None => *label_index.entry(raw_code.to_string()).or_insert_with(|| {
                labels.push(raw_code.to_string());
                labels.len() - 1
            }),
        };
        events.push(Event {
            unit_id: field(unit_col).to_string(),
            actor_id: field(actor_col).to_string(),
            timestamp,
            code,
            group: group_col.map(|g| field(g).to_string()),
            line,
        });
    }
    if events.is_empty() {
        return Err(TnaError::Empty("event file has no data rows".into()));
    }
    let alphabet = match fixed {
        Some(a) => a,
        None => Alphabet::new(labels)?,
    };
    EventLog::from_events(alphabet, events)
}

/// Numeric per-unit covariates, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: HashMap<String, Vec<f64>>,
}

pub fn read_covariates<R: Read>(source: R, unit_column: &str, delimiter: char) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(delimiter)?)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let unit_col = column(&headers, unit_column)?;
    let value_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != unit_col).collect();
    let names = value_cols.iter().map(|&i| headers[i].to_string()).collect();
    let mut rows = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let values = value_cols
            .iter()
            .map(|&i| {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| TnaError::Row {
                        line,
                        message: format!("non-numeric covariate `{raw}` in column `{}`", &headers[i]),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let unit = rec.get(unit_col).unwrap_or("").to_string();
        if rows.insert(unit.clone(), values).is_some() {
            return Err(TnaError::Row {
                line,
                message: format!("duplicate covariate row for unit `{unit}`"),
            });
        }
    }
    if rows.is_empty() {
        return Err(TnaError::Empty("covariate file has no data rows".into()));
    }
    Ok(CovariateTable { names, rows })
}

/// Ordered states of one (unit, session).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    pub unit_id: String,
    pub session_id: usize,
    pub states: Vec<usize>,
    /// Actor behind each state, parallel to `states`.
    pub actors: Vec<String>,
    pub group: Option<String>,
    /// Named numeric covariates in a fixed order; empty when none.
    pub covariates: Vec<(String, f64)>,
}

impl StateSequence {
    /// Sequence with no actor or covariate information, mostly for tests and
    /// simulation.
    pub fn from_states(unit_id: impl Into<String>, states: Vec<usize>) -> Self {
        let unit_id = unit_id.into();
        StateSequence {
            actors: vec![unit_id.clone(); states.len()],
            unit_id,
            session_id: 0,
            states,
            group: None,
            covariates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Copies each unit's covariate row onto its sequences.
pub fn attach_covariates(sequences: &mut [StateSequence], table: &CovariateTable) -> Result<()> {
    for s in sequences.iter_mut() {
        let row = table.rows.get(&s.unit_id).ok_or_else(|| {
            TnaError::Empty(format!("no covariate row for unit `{}`", s.unit_id))
        })?;
        s.covariates = table.names.iter().cloned().zip(row.iter().copied()).collect();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SessionizationPolicy {
    /// Split where the gap to the previous event exceeds `gap_seconds`.
    FixedGap { gap_seconds: f64 },
    /// Threshold is the given quantile of all within-unit gaps.
    QuantileGap { quantile: f64 },
    /// One sequence per unit.
    WholeUnit,
}

impl SessionizationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SessionizationPolicy::FixedGap { gap_seconds } if !(gap_seconds > 0.0) => {
                Err(TnaError::invalid(format!("session gap must be > 0, got {gap_seconds}")))
            }
            SessionizationPolicy::QuantileGap { quantile } if !(quantile > 0.0 && quantile < 1.0) => {
                Err(TnaError::invalid(format!("gap quantile must be in (0,1), got {quantile}")))
            }
            _ => Ok(()),
        }
    }
}

/// Type-7 quantile of within-unit gaps, in seconds.
pub fn gap_quantile(log: &EventLog, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(TnaError::invalid(format!("gap quantile must be in (0,1), got {q}")));
    }
    let gaps = log.gaps();
    if gaps.is_empty() {
        return Err(TnaError::Empty("no unit has two or more events".into()));
    }
    Ok(stats::quantile(&gaps, q))
}

/// Session boundaries of a time-sorted run of events: a gap strictly greater
/// than `threshold` seconds starts a new session.
pub fn split_sessions(events: &[Event], threshold: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    if events.is_empty() {
        return out;
    }
    let mut start = 0;
    for i in 1..events.len() {
        if gap_seconds(&events[i - 1], &events[i]) > threshold {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..events.len());
    out
}

/// Resolves the policy to a gap threshold in seconds (`None` = no splitting).
pub fn session_threshold(log: &EventLog, policy: &SessionizationPolicy) -> Result<Option<f64>> {
    policy.validate()?;
    Ok(match *policy {
        SessionizationPolicy::FixedGap { gap_seconds } => Some(gap_seconds),
        SessionizationPolicy::QuantileGap { quantile } => Some(gap_quantile(log, quantile)?),
        SessionizationPolicy::WholeUnit => None,
    })
}

pub fn sessionize(log: &EventLog, policy: &SessionizationPolicy) -> Result<Vec<StateSequence>> {
    let threshold = session_threshold(log, policy)?;
    let mut out = Vec::new();
    for unit in &log.units {
        let ranges = match threshold {
            Some(t) => split_sessions(&unit.events, t),
            None => vec![0..unit.events.len()],
        };
        for (session_id, r) in ranges.into_iter().enumerate() {
            let events = &unit.events[r];
            out.push(StateSequence {
                unit_id: unit.unit_id.clone(),
                session_id,
                states: events.iter().map(|e| e.code).collect(),
                actors: events.iter().map(|e| e.actor_id.clone()).collect(),
                group: events[0].group.clone(),
                covariates: Vec::new(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Unit(String),
    /// Keeps only the given actor's events within each sequence.
    Actor(String),
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Unit(u) => write!(f, "unit={u}"),
            Selector::Actor(a) => write!(f, "actor={a}"),
        }
    }
}

pub fn filter_unit(sequences: &[StateSequence], selector: &Selector) -> Result<Vec<StateSequence>> {
    let out: Vec<StateSequence> = match selector {
        Selector::Unit(u) => sequences.iter().filter(|s| &s.unit_id == u).cloned().collect(),
        Selector::Actor(a) => sequences
            .iter()
            .filter_map(|s| {
                let (states, actors): (Vec<usize>, Vec<String>) = s
                    .states
                    .iter()
                    .zip(&s.actors)
                    .filter(|(_, actor)| *actor == a)
                    .map(|(&st, actor)| (st, actor.clone()))
                    .unzip();
                (!states.is_empty()).then(|| StateSequence {
                    states,
                    actors,
                    ..s.clone()
                })
            })
            .collect(),
    };
    if out.is_empty() {
        return Err(TnaError::EmptySelection(selector.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(csv: &str) -> EventLog {
        ingest(csv.as_bytes(), &Schema::default()).unwrap()
    }

    fn minutes_log(unit_times: &[(&str, &[i64])]) -> EventLog {
        let mut s = String::from("unit,timestamp,code\n");
        for (u, times) in unit_times {
            for t in *times {
                s.push_str(&format!("{u},{},a\n", t * 60));
            }
        }
        ingest(
            s.as_bytes(),
            &Schema {
                timestamp_format: Some("unix".into()),
                ..Schema::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn ingest_three_rows() {
        let log = log_from(
            "unit,timestamp,code\n\
             g1,2024-01-01T10:00:00,plan\n\
             g1,2024-01-01T10:01:00,explore\n\
             g1,2024-01-01T10:02:00,plan\n",
        );
        assert_eq!(log.n_events(), 3);
        assert_eq!(log.alphabet.labels(), ["plan", "explore"]);
    }

    #[test]
    fn missing_timestamp_column_is_named() {
        let err = ingest("unit,time,code\ng,1,a\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(&err, TnaError::MissingColumn(c) if c == "timestamp"), "{err}");
        assert!(err.to_string().contains("timestamp"));
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let err = ingest(
            "unit,timestamp,code\ng,2024-01-01T10:00:00,a\ng,yesterday,b\n".as_bytes(),
            &Schema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TnaError::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(
            ingest("unit,timestamp,code\n".as_bytes(), &Schema::default()),
            Err(TnaError::Empty(_))
        ));
        assert!(ingest("".as_bytes(), &Schema::default()).is_err());
    }

    #[test]
    fn fixed_alphabet_rejects_unknown_codes() {
        let schema = Schema {
            alphabet: Some(vec!["b".into(), "a".into()]),
            ..Schema::default()
        };
        let log = ingest("unit,timestamp,code\ng,2024-01-01 00:00:00,a\n".as_bytes(), &schema).unwrap();
        assert_eq!(log.alphabet.labels(), ["b", "a"]);
        assert_eq!(log.units[0].events[0].code, 1);
        let err = ingest("unit,timestamp,code\ng,2024-01-01 00:00:00,c\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, TnaError::Row { line: 2, .. }));
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let log = log_from(
            "unit,timestamp,code\n\
             g,2024-01-01T10:05:00,c\n\
             g,2024-01-01T10:00:00,a\n\
             g,2024-01-01T10:00:00,b\n",
        );
        let codes: Vec<&str> = log.units[0].events.iter().map(|e| log.alphabet.label(e.code)).collect();
        assert_eq!(codes, ["a", "b", "c"]);
    }

    #[test]
    fn quantile_of_gaps() {
        let log = minutes_log(&[("u", &[0, 1, 3, 6, 10, 15, 21, 28, 36, 45, 55])]);
        assert_eq!(gap_quantile(&log, 0.5).unwrap(), 5.5 * 60.0);
        let single = minutes_log(&[("u", &[0, 7])]);
        assert_eq!(gap_quantile(&single, 0.2).unwrap(), 7.0 * 60.0);
        let constant = minutes_log(&[("u", &[0, 2, 4, 6])]);
        assert_eq!(gap_quantile(&constant, 0.9).unwrap(), 2.0 * 60.0);
        let none = minutes_log(&[("u", &[0]), ("v", &[5])]);
        assert!(gap_quantile(&none, 0.9).is_err());
    }

    #[test]
    fn fixed_gap_sessions() {
        let log = minutes_log(&[("u", &[0, 10, 40])]);
        let s = sessionize(&log, &SessionizationPolicy::FixedGap { gap_seconds: 1200.0 }).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].len(), s[1].len()), (2, 1));
        assert_eq!((s[0].session_id, s[1].session_id), (0, 1));
    }

    #[test]
    fn gap_equal_to_threshold_stays_in_session() {
        let log = minutes_log(&[("u", &[0, 20, 40])]);
        let s = sessionize(&log, &SessionizationPolicy::FixedGap { gap_seconds: 1200.0 }).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn quantile_policy_splits_at_long_gap() {
        let log = minutes_log(&[("u", &[0, 5, 35, 40])]);
        let policy = SessionizationPolicy::QuantileGap { quantile: 0.9 };
        assert_eq!(session_threshold(&log, &policy).unwrap(), Some(25.0 * 60.0));
        let s = sessionize(&log, &policy).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].len(), s[1].len()), (2, 2));
    }

    #[test]
    fn sessions_never_span_units() {
        let log = minutes_log(&[("u", &[0, 1]), ("v", &[2, 3])]);
        let s = sessionize(&log, &SessionizationPolicy::FixedGap { gap_seconds: 1e9 }).unwrap();
        assert_eq!(s.len(), 2);
        let whole = sessionize(&log, &SessionizationPolicy::WholeUnit).unwrap();
        assert_eq!(whole.len(), 2);
    }

    #[test]
    fn invalid_policies() {
        assert!(SessionizationPolicy::FixedGap { gap_seconds: 0.0 }.validate().is_err());
        assert!(SessionizationPolicy::QuantileGap { quantile: 1.0 }.validate().is_err());
        assert!(SessionizationPolicy::QuantileGap { quantile: 0.5 }.validate().is_ok());
    }

    #[test]
    fn actor_and_unit_selection() {
        let mut a = StateSequence::from_states("g1", vec![0, 1, 0, 1]);
        a.actors = vec!["A".into(), "B".into(), "A".into(), "B".into()];
        let b = StateSequence::from_states("g2", vec![1, 1]);
        let seqs = vec![a, b];
        let only_a = filter_unit(&seqs, &Selector::Actor("A".into())).unwrap();
        assert_eq!(only_a.len(), 1);
        assert_eq!(only_a[0].states, vec![0, 0]);
        let g2 = filter_unit(&seqs, &Selector::Unit("g2".into())).unwrap();
        assert_eq!(g2, vec![seqs[1].clone()]);
        let err = filter_unit(&seqs, &Selector::Actor("Z".into())).unwrap_err();
        assert!(err.to_string().contains("actor=Z"));
    }

    #[test]
    fn covariates_attach_by_unit() {
        let table = read_covariates("unit,grade,size\ng1,3.5,4\ng2,2,5\n".as_bytes(), "unit", ',').unwrap();
        assert_eq!(table.names, ["grade", "size"]);
        let mut seqs = vec![StateSequence::from_states("g2", vec![0])];
        attach_covariates(&mut seqs, &table).unwrap();
        assert_eq!(seqs[0].covariates, vec![("grade".into(), 2.0), ("size".into(), 5.0)]);
        let mut missing = vec![StateSequence::from_states("g9", vec![0])];
        assert!(attach_covariates(&mut missing, &table).is_err());
        assert!(read_covariates("unit,grade\ng1,high\n".as_bytes(), "unit", ',').is_err());
    }

    #[test]
    fn alphabet_checks() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
        let a = Alphabet::new(["x", "y"]).unwrap();
        let b = Alphabet::new(["y", "z"]).unwrap();
        match a.ensure_same(&b).unwrap_err() {
            TnaError::AlphabetMismatch { only_first, only_second } => {
                assert_eq!(only_first, ["x"]);
                assert_eq!(only_second, ["z"]);
            }
            e => panic!("{e}"),
        }
        assert!(a.ensure_same(&Alphabet::new(["y", "x"]).unwrap()).is_err());
    }
}
