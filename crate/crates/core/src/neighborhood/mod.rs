//! Local-neighborhood follower count estimation.
//!
//! A query user is compared against every user of a reference population.
//! The ranked distances define an interquartile fence
//! `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`; reference users inside it are the
//! neighborhood, and the estimate is their inverse-distance weighted mean
//! follower count:
//!
//! ```text
//! f = sum(f_i / d_i) / sum(1 / d_i),   d_i floored at 1e-9
//! ```
//!
//! The fence spans all reference distances, with no nearest-k cutoff in
//! front of it. Quartiles interpolate linearly between closest ranks, and
//! equal distances are ordered by user id so every backend returns the same
//! neighbor list.
//!
//! The normalizer in the weighted mean is `sum(1 / d_i)`. A plain
//! `sum(d_i)` would not be scale consistent and could place the estimate
//! outside the range of neighbor counts.

mod balltree;
mod kdtree;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureVector, NormalizationModel};
use crate::model::{Corpus, UserTrace};
use crate::stats::{quantile_sorted, quantile_upper_rank};

/// Distances below this are treated as this when weighting.
pub const DISTANCE_FLOOR: f64 = 1e-9;
pub const FENCE_FACTOR: f64 = 1.5;

/// Euclidean distance, accumulated in dimension order. Every backend calls
/// this same function so distances agree bit for bit.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    sum.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    KdTree,
    BallTree,
    LinearScan,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::KdTree, Backend::BallTree, Backend::LinearScan];

    pub fn name(self) -> &'static str {
        match self {
            Backend::KdTree => "kd_tree",
            Backend::BallTree => "ball_tree",
            Backend::LinearScan => "linear_scan",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "kd_tree" | "kdtree" => Ok(Backend::KdTree),
            "ball_tree" | "balltree" => Ok(Backend::BallTree),
            "linear_scan" | "linear" => Ok(Backend::LinearScan),
            _ => Err(Error::InvalidParameter(format!("unknown backend `{s}`"))),
        }
    }
}

/// Row-major point storage.
#[derive(Debug, Clone)]
pub(crate) struct Points {
    coords: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// One member of the reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub user_id: String,
    pub vector: Vec<f64>,
    pub follower_count: u64,
}

#[derive(Debug, Clone)]
enum Structure {
    Linear,
    Tree(tree::Tree),
}

/// Exact ranked search over a reference population.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    backend: Backend,
    points: Points,
    ids: Vec<String>,
    followers: Vec<u64>,
    /// Position of each point in (user_id, insertion order) order.
    tie_rank: Vec<usize>,
    structure: Structure,
}

pub fn build_index(population: Vec<ReferencePoint>, backend: Backend) -> Result<NeighborIndex> {
    if population.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "reference population needs at least 2 points, got {}",
            population.len()
        )));
    }
    let dim = population[0].vector.len();
    if dim == 0 {
        return Err(Error::Shape {
            expected: 1,
            found: 0,
        });
    }
    let mut coords = Vec::with_capacity(dim * population.len());
    let mut ids = Vec::with_capacity(population.len());
    let mut followers = Vec::with_capacity(population.len());
    for p in population {
        if p.vector.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: p.vector.len(),
            });
        }
        if let Some(bad) = p.vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite coordinate {bad} for `{}`",
                p.user_id
            )));
        }
        coords.extend_from_slice(&p.vector);
        ids.push(p.user_id);
        followers.push(p.follower_count);
    }
    let points = Points { coords, dim };

    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]).then(a.cmp(&b)));
    let mut tie_rank = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        tie_rank[i] = rank;
    }

    let structure = match backend {
        Backend::LinearScan => Structure::Linear,
        Backend::KdTree => Structure::Tree(kdtree::build(&points)),
        Backend::BallTree => Structure::Tree(balltree::build(&points)),
    };
    Ok(NeighborIndex {
        backend,
        points,
        ids,
        followers,
        tie_rank,
        structure,
    })
}

impl NeighborIndex {
    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Every reference point as `(index, distance)`, ascending by distance
    /// then user id.
    fn ranked<'a>(&'a self, query: &'a [f64]) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match &self.structure {
            Structure::Linear => {
                let mut all: Vec<(usize, f64)> = (0..self.len())
                    .map(|i| (i, distance(query, self.points.row(i))))
                    .collect();
                all.sort_by(|a, b| {
                    a.1.total_cmp(&b.1)
                        .then_with(|| self.tie_rank[a.0].cmp(&self.tie_rank[b.0]))
                });
                Box::new(all.into_iter())
            }
            Structure::Tree(t) => Box::new(tree::RankedTraversal::new(
                t,
                &self.points,
                &self.tie_rank,
                query,
            )),
        }
    }

    fn neighbor(&self, i: usize, d: f64) -> Neighbor {
        Neighbor {
            user_id: self.ids[i].clone(),
            distance: d,
            follower_count: self.followers[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub user_id: String,
    pub distance: f64,
    pub follower_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fence {
    pub lower: f64,
    pub upper: f64,
}

impl Fence {
    pub fn contains(&self, d: f64) -> bool {
        self.lower <= d && d <= self.upper
    }
}

/// Reference users inside the distance fence, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
    pub fence: Fence,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The interquartile fence over an ascending list of distances.
pub fn distance_fence(sorted: &[f64]) -> Option<Fence> {
    let q1 = quantile_sorted(sorted, 0.25)?;
    let q3 = quantile_sorted(sorted, 0.75)?;
    let iqr = q3 - q1;
    Some(Fence {
        lower: q1 - FENCE_FACTOR * iqr,
        upper: q3 + FENCE_FACTOR * iqr,
    })
}

pub fn query_neighbors(index: &NeighborIndex, query: &[f64]) -> Result<NeighborSet> {
    if query.len() != index.dim() {
        return Err(Error::Shape {
            expected: index.dim(),
            found: query.len(),
        });
    }
    if let Some(bad) = query.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite query coordinate {bad}"
        )));
    }
    let mut ranked = index.ranked(query);
    // The quartiles only read ranks up to the upper one, so the ranked
    // stream is consumed that far, then only as far as the upper fence.
    let needed = quantile_upper_rank(index.len(), 0.75) + 1;
    let mut seen: Vec<(usize, f64)> = ranked.by_ref().take(needed).collect();
    let mut dists: Vec<f64> = seen.iter().map(|&(_, d)| d).collect();
    dists.resize(index.len(), f64::INFINITY);
    let fence = distance_fence(&dists).expect("index is non-empty");
    for (i, d) in ranked {
        if d > fence.upper {
            break;
        }
        seen.push((i, d));
    }
    let entries = seen
        .into_iter()
        .filter(|&(_, d)| fence.contains(d))
        .map(|(i, d)| index.neighbor(i, d))
        .collect();
    Ok(NeighborSet { entries, fence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user_id: String,
    pub predicted_followers: f64,
    pub neighbor_count: usize,
    pub neighbor_set: NeighborSet,
}

/// Inverse-distance weighted mean follower count of the neighbors.
pub fn weighted_follower_count(ns: &NeighborSet) -> Result<f64> {
    if ns.entries.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for n in &ns.entries {
        let w = 1.0 / n.distance.max(DISTANCE_FLOOR);
        let f = n.follower_count as f64;
        num += w * f;
        den += w;
        lo = lo.min(f);
        hi = hi.max(f);
    }
    // Rounding can leave the quotient an ulp outside the neighbor range.
    Ok((num / den).clamp(lo, hi))
}

pub fn predict_followers(user_id: impl Into<String>, ns: NeighborSet) -> Result<Prediction> {
    let predicted_followers = weighted_follower_count(&ns)?;
    Ok(Prediction {
        user_id: user_id.into(),
        predicted_followers,
        neighbor_count: ns.entries.len(),
        neighbor_set: ns,
    })
}

/// Featurize, normalize, fence and weight: the whole estimate for one user.
pub fn predict_for_user(
    trace: &UserTrace,
    index: &NeighborIndex,
    normalizer: &NormalizationModel,
) -> Result<Prediction> {
    let v = normalizer.normalize(&features::featurize(trace));
    let ns = query_neighbors(index, v.as_slice())?;
    predict_followers(trace.user_id(), ns)
}

/// A reference index together with the normalizer fitted on the same
/// population.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub index: NeighborIndex,
    pub normalizer: NormalizationModel,
}

impl Predictor {
    /// Fits the normalizer on the reference users' features and indexes
    /// their normalized vectors with displayed follower counts as payload.
    pub fn fit(reference: &Corpus, backend: Backend) -> Result<Predictor> {
        let rows: Vec<(&UserTrace, FeatureVector)> = reference
            .traces()
            .map(|t| (t, features::featurize(t)))
            .collect();
        let vectors: Vec<FeatureVector> = rows.iter().map(|(_, v)| *v).collect();
        let normalizer = features::fit_normalizer(&vectors)?;
        let population = rows
            .into_iter()
            .map(|(t, v)| ReferencePoint {
                user_id: t.user_id().to_owned(),
                vector: normalizer.normalize(&v).0.to_vec(),
                follower_count: t.displayed_follower_count(),
            })
            .collect();
        Ok(Predictor {
            index: build_index(population, backend)?,
            normalizer,
        })
    }

    pub fn predict(&self, trace: &UserTrace) -> Result<Prediction> {
        predict_for_user(trace, &self.index, &self.normalizer)
    }
}

/// One line of a prediction batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub user_id: String,
    pub predicted: f64,
    pub displayed: u64,
    pub neighbor_count: usize,
}

impl PredictionRecord {
    pub fn new(p: &Prediction, displayed: u64) -> Self {
        PredictionRecord {
            user_id: p.user_id.clone(),
            predicted: p.predicted_followers,
            displayed,
            neighbor_count: p.neighbor_count,
        }
    }
}
