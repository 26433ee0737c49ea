//! User embedding: static counters, posting behavior and temporal signatures.
//!
//! Every user becomes an 18-dimensional [`FeatureVector`]. The displayed
//! follower count is deliberately not part of it: it is the quantity being
//! estimated and the one a manipulator controls.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Timestamp, UserTrace};
use crate::stats;

pub const DIM: usize = 18;

/// Column names, in vector order.
pub const FEATURE_NAMES: [&str; DIM] = [
    "has_bio",
    "has_profile_image",
    "tweet_count",
    "friend_count",
    "listed_count",
    "is_verified",
    "is_celebrity",
    "topic_count",
    "topic_overlap_with_followers",
    "favorited_count",
    "tweet_gain_per_day",
    "language_entropy_of_tweets",
    "language_overlap_with_followers",
    "follower_gain_per_day",
    "friend_gain_per_day",
    "creation_time_spike_score",
    "follow_time_spike_score",
    "unfollow_entropy",
];

pub mod dims {
    pub const HAS_BIO: usize = 0;
    pub const HAS_PROFILE_IMAGE: usize = 1;
    pub const TWEET_COUNT: usize = 2;
    pub const FRIEND_COUNT: usize = 3;
    pub const LISTED_COUNT: usize = 4;
    pub const IS_VERIFIED: usize = 5;
    pub const IS_CELEBRITY: usize = 6;
    pub const TOPIC_COUNT: usize = 7;
    pub const TOPIC_OVERLAP: usize = 8;
    pub const FAVORITED_COUNT: usize = 9;
    pub const TWEET_GAIN: usize = 10;
    pub const LANGUAGE_ENTROPY: usize = 11;
    pub const LANGUAGE_OVERLAP: usize = 12;
    pub const FOLLOWER_GAIN: usize = 13;
    pub const FRIEND_GAIN: usize = 14;
    pub const CREATION_SPIKE: usize = 15;
    pub const FOLLOW_SPIKE: usize = 16;
    pub const UNFOLLOW_ENTROPY: usize = 17;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counter {
    Followers,
    Friends,
    Tweets,
}

/// Net change of a profile counter per elapsed day between the first and
/// last snapshot. Zero for single-snapshot traces.
pub fn gain_per_day(trace: &UserTrace, counter: Counter) -> f64 {
    let span = trace.span_days();
    if span <= 0.0 {
        return 0.0;
    }
    let read = |s: &crate::model::UserSnapshot| match counter {
        Counter::Followers => s.follower_count,
        Counter::Friends => s.friend_count,
        Counter::Tweets => s.tweet_count,
    } as f64;
    (read(trace.last()) - read(trace.first())) / span
}

/// Per-friend unfollow event counts: a friend present in one snapshot and
/// absent from the next counts once. Transitions where either side lacks a
/// friend list are skipped.
pub fn unfollow_events(trace: &UserTrace) -> BTreeMap<&str, u64> {
    let mut counts = BTreeMap::new();
    for pair in trace.snapshots().windows(2) {
        let (Some(before), Some(after)) = (&pair[0].friend_ids, &pair[1].friend_ids) else {
            continue;
        };
        for friend in before.difference(after) {
            *counts.entry(friend.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Repeated-unfollow entropy in `[0, 1]`.
///
/// With `c_f` unfollow events for each of `k` distinct friends and
/// `U = sum(c_f)`, this is the Shannon entropy of `c_f / U` divided by
/// `ln(max(2, k))`. A lone unfollowed friend has zero Shannon entropy, so
/// that case scores `U / (U + 1)` instead: the result is zero exactly when
/// there are no unfollow events.
pub fn unfollow_entropy(trace: &UserTrace) -> f64 {
    let counts: Vec<u64> = unfollow_events(trace).into_values().collect();
    match counts.as_slice() {
        [] => 0.0,
        [c] => *c as f64 / (*c as f64 + 1.0),
        _ => stats::normalized_entropy(counts),
    }
}

/// Burst score of a set of event times histogrammed into consecutive
/// buckets starting at the earliest event:
/// `(max count - mean count) / max(std dev of counts, 1)`.
pub fn spike_score(event_times: &[Timestamp], bucket: Duration) -> f64 {
    let width = bucket.num_seconds();
    assert!(width > 0, "spike bucket must be positive");
    let Some(start) = event_times.iter().min().map(|t| t.timestamp()) else {
        return 0.0;
    };
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for t in event_times {
        *counts.entry((t.timestamp() - start).div_euclid(width)).or_insert(0) += 1;
    }
    // Buckets run from 0 to the last occupied one; empty ones count as zero.
    let n_buckets = (*counts.keys().next_back().expect("non-empty") + 1) as f64;
    let total = event_times.len() as f64;
    let max = *counts.values().max().expect("non-empty") as f64;
    let mean = total / n_buckets;
    let sum_sq: f64 = counts.values().map(|&c| (c as f64) * (c as f64)).sum();
    let var = (sum_sq / n_buckets - mean * mean).max(0.0);
    (max - mean) / var.sqrt().max(1.0)
}

fn canonical<'a>(items: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Jaccard similarity after trimming and lowercasing; two empty sets give 0.
pub fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let a = canonical(a);
    let b = canonical(b);
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn bool_dim(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn featurize(trace: &UserTrace) -> FeatureVector {
    let last = trace.last();
    let followers = trace.final_followers();
    let mut v = [0.0; DIM];

    v[dims::HAS_BIO] = bool_dim(last.has_bio);
    v[dims::HAS_PROFILE_IMAGE] = bool_dim(last.has_profile_image);
    v[dims::TWEET_COUNT] = last.tweet_count as f64;
    v[dims::FRIEND_COUNT] = last.friend_count as f64;
    v[dims::LISTED_COUNT] = last.listed_count as f64;
    v[dims::IS_VERIFIED] = bool_dim(last.is_verified);
    v[dims::IS_CELEBRITY] = bool_dim(last.is_celebrity);
    v[dims::TOPIC_COUNT] = canonical(&last.bio_topics).len() as f64;
    v[dims::FAVORITED_COUNT] = last.favorited_count as f64;

    if !followers.is_empty() {
        let n = followers.len() as f64;
        v[dims::TOPIC_OVERLAP] = followers
            .iter()
            .map(|f| overlap(&last.bio_topics, &f.bio_topics))
            .sum::<f64>()
            / n;
        let own_language: BTreeSet<String> = [last.tweet_language.clone()].into();
        v[dims::LANGUAGE_OVERLAP] = followers
            .iter()
            .map(|f| overlap(&own_language, &[f.tweet_language.clone()].into()))
            .sum::<f64>()
            / n;
        let created: Vec<Timestamp> = followers.iter().map(|f| f.account_created_at).collect();
        let followed: Vec<Timestamp> = followers.iter().map(|f| f.first_followed_at).collect();
        v[dims::CREATION_SPIKE] = spike_score(&created, Duration::days(1));
        v[dims::FOLLOW_SPIKE] = spike_score(&followed, Duration::days(1));
    }

    let mut languages: BTreeMap<String, u64> = BTreeMap::new();
    for tweet in trace.tweets() {
        let tag = tweet.language.trim().to_lowercase();
        if !tag.is_empty() {
            *languages.entry(tag).or_insert(0) += 1;
        }
    }
    v[dims::LANGUAGE_ENTROPY] = stats::normalized_entropy(languages.into_values());

    v[dims::TWEET_GAIN] = gain_per_day(trace, Counter::Tweets);
    v[dims::FOLLOWER_GAIN] = gain_per_day(trace, Counter::Followers);
    v[dims::FRIEND_GAIN] = gain_per_day(trace, Counter::Friends);
    v[dims::UNFOLLOW_ENTROPY] = unfollow_entropy(trace);

    FeatureVector(v)
}

/// Per-dimension robust scaling: `(value - median) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationModel {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Spreads at or below this are treated as degenerate.
pub const SCALE_FLOOR: f64 = 1e-9;

/// Median and interquartile range per dimension.
///
/// Where the IQR collapses (more than half the population shares one value,
/// as with rare booleans or mostly-zero signals) the full range is used
/// instead, and a constant dimension gets scale 1.
pub fn fit_normalizer(vectors: &[FeatureVector]) -> Result<NormalizationModel> {
    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    fit_normalizer_rows(&rows, DIM)
}

pub(crate) fn fit_normalizer_rows(rows: &[&[f64]], dim: usize) -> Result<NormalizationModel> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalizer needs at least 2 vectors, got {}",
            rows.len()
        )));
    }
    let mut location = Vec::with_capacity(dim);
    let mut scale = Vec::with_capacity(dim);
    for d in 0..dim {
        let column = stats::sorted_copy(&rows.iter().map(|r| r[d]).collect::<Vec<_>>());
        let q = |p| stats::quantile_sorted(&column, p).expect("non-empty");
        let iqr = q(0.75) - q(0.25);
        let range = column[column.len() - 1] - column[0];
        location.push(q(0.5));
        scale.push(if iqr > SCALE_FLOOR {
            iqr
        } else if range > SCALE_FLOOR {
            range
        } else {
            1.0
        });
    }
    Ok(NormalizationModel { location, scale })
}

impl NormalizationModel {
    pub fn normalize(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; DIM];
        for (d, o) in out.iter_mut().enumerate() {
            *o = (v.0[d] - self.location[d]) / self.scale[d];
        }
        FeatureVector(out)
    }
}

pub fn normalize(v: &FeatureVector, model: &NormalizationModel) -> FeatureVector {
    model.normalize(v)
}

/// Writes a comma-separated feature matrix: a header with `user_id` and the
/// canonical dimension names, then one row per user.
pub fn write_feature_matrix<'a, W: Write>(
    rows: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>,
    w: W,
) -> Result<()> {
    let to_err = |e: csv::Error| Error::io("<features>", e.into());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["user_id"];
    header.extend(FEATURE_NAMES);
    out.write_record(&header).map_err(to_err)?;
    for (id, v) in rows {
        let mut record = vec![id.to_owned()];
        record.extend(v.0.iter().map(|x| x.to_string()));
        out.write_record(&record).map_err(to_err)?;
    }
    out.flush().map_err(|e| Error::io("<features>", e))
}

/// Reads a matrix produced by [`write_feature_matrix`].
pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<Vec<(String, FeatureVector)>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let headers = reader.headers().map_err(|e| Error::io(path, e.into()))?.clone();
    if headers.len() != DIM + 1 || headers.iter().skip(1).ne(FEATURE_NAMES) {
        return Err(Error::Schema(format!(
            "{}: unexpected feature header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::io(path, e.into()))?;
        let mut v = [0.0; DIM];
        for d in 0..DIM {
            v[d] = record[d + 1].parse().map_err(|_| Error::Validation {
                line: i + 2,
                field: FEATURE_NAMES[d].into(),
                message: format!("not a number: `{}`", &record[d + 1]),
            })?;
        }
        rows.push((record[0].to_owned(), FeatureVector(v)));
    }
    Ok(rows)
}
