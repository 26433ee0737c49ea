//! User traces, corpora and the line-delimited interchange format.
//!
//! A corpus file is UTF-8 text with one JSON object per line. The first line
//! is a header carrying `schema_version` (and optional provenance such as the
//! generator configuration); every following line is one [`UserTrace`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub type Timestamp = DateTime<Utc>;

/// ISO-8601 UTC timestamps at one-second precision (`2016-04-01T06:00:00Z`).
pub mod timestamp {
    use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }

    pub fn parse(raw: &str) -> Result<DateTime<Utc>, String> {
        DateTime::parse_from_rfc3339(raw.trim())
            .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
            .map_err(|e| format!("invalid timestamp `{raw}`: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerRecord {
    pub follower_id: String,
    #[serde(with = "timestamp")]
    pub account_created_at: Timestamp,
    #[serde(with = "timestamp")]
    pub first_followed_at: Timestamp,
    #[serde(default)]
    pub bio_topics: BTreeSet<String>,
    pub tweet_language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSnapshot {
    pub user_id: String,
    #[serde(with = "timestamp")]
    pub captured_at: Timestamp,
    pub follower_count: u64,
    pub friend_count: u64,
    pub tweet_count: u64,
    pub listed_count: u64,
    pub favorited_count: u64,
    pub has_bio: bool,
    pub has_profile_image: bool,
    pub is_verified: bool,
    pub is_celebrity: bool,
    #[serde(default)]
    pub bio_topics: BTreeSet<String>,
    pub tweet_language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friend_ids: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower_records: Option<Vec<FollowerRecord>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub user_id: String,
    #[serde(with = "timestamp")]
    pub posted_at: Timestamp,
    pub is_retweet: bool,
    pub mention_count: u32,
    pub hashtag_count: u32,
    pub url_count: u32,
    pub language: String,
}

/// Time-ordered observations of a single user.
///
/// Constructed only through [`UserTrace::new`], which enforces ordering and
/// identity invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserTrace {
    user_id: String,
    snapshots: Vec<UserSnapshot>,
    tweets: Vec<TweetRecord>,
    displayed_follower_count: u64,
}

impl UserTrace {
    /// Validates and orders the observations. Snapshots are sorted by
    /// `captured_at`; equal capture times are rejected.
    pub fn new(
        user_id: impl Into<String>,
        mut snapshots: Vec<UserSnapshot>,
        mut tweets: Vec<TweetRecord>,
    ) -> Result<Self> {
        let user_id = user_id.into();
        let invalid = |message: String| Error::InvalidTrace {
            user_id: user_id.clone(),
            message,
        };
        if snapshots.is_empty() {
            return Err(invalid("trace has no snapshots".into()));
        }
        snapshots.sort_by_key(|s| s.captured_at);
        for pair in snapshots.windows(2) {
            if pair[0].captured_at == pair[1].captured_at {
                return Err(invalid(format!(
                    "two snapshots captured at {}",
                    pair[0].captured_at
                )));
            }
        }
        for snap in &snapshots {
            if snap.user_id != user_id {
                return Err(invalid(format!(
                    "snapshot belongs to `{}`",
                    snap.user_id
                )));
            }
            if let Some(friends) = &snap.friend_ids {
                if friends.contains(&user_id) {
                    return Err(invalid("user listed among its own friends".into()));
                }
            }
            for rec in snap.follower_records.iter().flatten() {
                if rec.account_created_at > rec.first_followed_at {
                    return Err(invalid(format!(
                        "follower `{}` followed before its account was created",
                        rec.follower_id
                    )));
                }
            }
        }
        if let Some(t) = tweets.iter().find(|t| t.user_id != user_id) {
            return Err(invalid(format!("tweet belongs to `{}`", t.user_id)));
        }
        tweets.sort_by_key(|t| t.posted_at);
        let displayed_follower_count = snapshots.last().map(|s| s.follower_count).unwrap_or(0);
        Ok(UserTrace {
            user_id,
            snapshots,
            tweets,
            displayed_follower_count,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn snapshots(&self) -> &[UserSnapshot] {
        &self.snapshots
    }

    pub fn tweets(&self) -> &[TweetRecord] {
        &self.tweets
    }

    pub fn first(&self) -> &UserSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &UserSnapshot {
        self.snapshots.last().expect("trace is non-empty")
    }

    pub fn displayed_follower_count(&self) -> u64 {
        self.displayed_follower_count
    }

    /// Follower records from the final snapshot, the only ones the feature
    /// pipeline reads.
    pub fn final_followers(&self) -> &[FollowerRecord] {
        self.last().follower_records.as_deref().unwrap_or(&[])
    }

    /// Elapsed time between first and last snapshot, in days.
    pub fn span_days(&self) -> f64 {
        (self.last().captured_at - self.first().captured_at).num_seconds() as f64 / 86_400.0
    }

    pub fn into_parts(self) -> (String, Vec<UserSnapshot>, Vec<TweetRecord>) {
        (self.user_id, self.snapshots, self.tweets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Random,
    Customer,
    Unlabeled,
}

/// A set of traces keyed by user id, with optional ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    traces: BTreeMap<String, UserTrace>,
    labels: BTreeMap<String, Label>,
    provenance: Option<serde_json::Value>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, trace: UserTrace, label: Option<Label>) -> Result<()> {
        let id = trace.user_id().to_owned();
        if self.traces.contains_key(&id) {
            return Err(Error::CorpusConflict {
                user_id: id,
                first_line: 0,
                line: 0,
            });
        }
        if let Some(label) = label {
            self.labels.insert(id.clone(), label);
        }
        self.traces.insert(id, trace);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn get(&self, user_id: &str) -> Option<&UserTrace> {
        self.traces.get(user_id)
    }

    /// Traces in ascending user-id order.
    pub fn traces(&self) -> impl Iterator<Item = &UserTrace> {
        self.traces.values()
    }

    pub fn label(&self, user_id: &str) -> Option<Label> {
        self.labels.get(user_id).copied()
    }

    pub fn labels(&self) -> &BTreeMap<String, Label> {
        &self.labels
    }

    pub fn provenance(&self) -> Option<&serde_json::Value> {
        self.provenance.as_ref()
    }

    pub fn set_provenance(&mut self, value: Option<serde_json::Value>) {
        self.provenance = value;
    }

    /// Sub-corpus of the users carrying `label`.
    pub fn filter_label(&self, label: Label) -> Corpus {
        let mut out = Corpus::new();
        for (id, trace) in &self.traces {
            if self.label(id) == Some(label) {
                out.traces.insert(id.clone(), trace.clone());
                out.labels.insert(id.clone(), label);
            }
        }
        out.provenance = self.provenance.clone();
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRecordIn {
    user_id: String,
    #[serde(default)]
    label: Option<Label>,
    displayed_follower_count: u64,
    snapshots: Vec<UserSnapshot>,
    #[serde(default)]
    tweets: Vec<TweetRecord>,
}

#[derive(Serialize)]
struct TraceRecordOut<'a> {
    user_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    displayed_follower_count: u64,
    snapshots: &'a [UserSnapshot],
    tweets: &'a [TweetRecord],
}

/// A record line that failed validation and was left out of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl From<Rejection> for Error {
    fn from(r: Rejection) -> Self {
        Error::Validation {
            line: r.line,
            field: r.field,
            message: r.message,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub rejections: Vec<Rejection>,
    /// Number of record lines read (header excluded, blank lines ignored).
    pub records_read: usize,
}

pub fn load_corpus(path: impl AsRef<Path>, schema_version: u32) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), schema_version).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus<R: BufRead>(reader: R, schema_version: u32) -> Result<LoadedCorpus> {
    let mut corpus = Corpus::new();
    let mut rejections = Vec::new();
    let mut records_read = 0;
    let mut first_seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut saw_header = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: HeaderRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Schema(format!("line {line_no}: expected header record: {e}"))
            })?;
            if header.schema_version != schema_version {
                return Err(Error::Schema(format!(
                    "file has schema_version {}, expected {schema_version}",
                    header.schema_version
                )));
            }
            corpus.provenance = header.provenance;
            saw_header = true;
            continue;
        }
        records_read += 1;
        let (trace, label) = match parse_trace_line(&line, line_no) {
            Ok(parsed) => parsed,
            Err(rejection) => {
                rejections.push(rejection);
                continue;
            }
        };
        if let Some(&first_line) = first_seen.get(trace.user_id()) {
            return Err(Error::CorpusConflict {
                user_id: trace.user_id().to_owned(),
                first_line,
                line: line_no,
            });
        }
        first_seen.insert(trace.user_id().to_owned(), line_no);
        corpus.insert(trace, label)?;
    }
    if !saw_header {
        return Err(Error::Schema("missing header record".into()));
    }
    Ok(LoadedCorpus {
        corpus,
        rejections,
        records_read,
    })
}

fn parse_line<T: DeserializeOwned>(line: &str, line_no: usize) -> Result<T, Rejection> {
    let mut de = serde_json::Deserializer::from_str(line);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        Rejection {
            line: line_no,
            field: if field == "." { "<record>".into() } else { field },
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| Rejection {
        line: line_no,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn parse_trace_line(line: &str, line_no: usize) -> Result<(UserTrace, Option<Label>), Rejection> {
    let record: TraceRecordIn = parse_line(line, line_no)?;
    let reject = |field: &str, message: String| Rejection {
        line: line_no,
        field: field.to_owned(),
        message,
    };
    let trace = UserTrace::new(record.user_id, record.snapshots, record.tweets)
        .map_err(|e| reject("snapshots", e.to_string()))?;
    if trace.displayed_follower_count() != record.displayed_follower_count {
        return Err(reject(
            "displayed_follower_count",
            format!(
                "{} does not match final snapshot follower_count {}",
                record.displayed_follower_count,
                trace.displayed_follower_count()
            ),
        ));
    }
    Ok((trace, record.label))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(corpus, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<corpus>", e);
    let header = HeaderRecord {
        schema_version: SCHEMA_VERSION,
        provenance: corpus.provenance.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for trace in corpus.traces() {
        let record = TraceRecordOut {
            user_id: trace.user_id(),
            label: corpus.label(trace.user_id()),
            displayed_follower_count: trace.displayed_follower_count(),
            snapshots: trace.snapshots(),
            tweets: trace.tweets(),
        };
        serde_json::to_writer(&mut w, &record).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

/// Line-delimited records of one type, with the lines that failed to parse.
#[derive(Debug, Clone)]
pub struct LoadedRecords<T> {
    pub records: Vec<T>,
    pub rejections: Vec<Rejection>,
}

/// Reads one JSON record per non-blank line.
pub fn read_records<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<LoadedRecords<T>> {
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<records>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, idx + 1) {
            Ok(r) => records.push(r),
            Err(r) => rejections.push(r),
        }
    }
    Ok(LoadedRecords { records, rejections })
}

pub fn load_records<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<LoadedRecords<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_records<'a, T: Serialize + 'a, W: Write>(
    records: impl IntoIterator<Item = &'a T>,
    mut w: W,
) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<records>", e);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::{Duration, TimeZone};

    pub fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2016, 4, 1, 0, 0, 0).unwrap()
    }

    pub fn snapshot(user: &str, hours: i64, followers: u64) -> UserSnapshot {
        UserSnapshot {
            user_id: user.into(),
            captured_at: t0() + Duration::hours(hours),
            follower_count: followers,
            friend_count: 10,
            tweet_count: 100,
            listed_count: 1,
            favorited_count: 5,
            has_bio: true,
            has_profile_image: true,
            is_verified: false,
            is_celebrity: false,
            bio_topics: BTreeSet::new(),
            tweet_language: "en".into(),
            friend_ids: None,
            follower_records: None,
        }
    }

    pub fn trace(user: &str, followers: &[u64]) -> UserTrace {
        let snaps = followers
            .iter()
            .enumerate()
            .map(|(i, &f)| snapshot(user, 6 * i as i64, f))
            .collect();
        UserTrace::new(user, snaps, vec![]).unwrap()
    }
}
