//! Spectral clustering of per-user unfollow time series.
//!
//! Each user becomes the series of how many previously-followed friends it
//! dropped between consecutive snapshots. Series are compared with
//! Euclidean distance after zero-padding to a common length, turned into a
//! Gaussian affinity whose bandwidth is the median pairwise distance, and
//! embedded with the smallest eigenvectors of the symmetric normalized
//! Laplacian. k-means with farthest-point seeding labels the embedding.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UserTrace;
use crate::stats;

pub const DEFAULT_K: usize = 3;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnfollowSeries {
    pub user_id: String,
    pub counts: Vec<u64>,
}

impl UnfollowSeries {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `counts[i]` is the number of friends present at snapshot `i` and gone at
/// `i + 1`. Transitions without friend lists on both sides count zero.
pub fn unfollow_series(trace: &UserTrace) -> UnfollowSeries {
    let counts = trace
        .snapshots()
        .windows(2)
        .map(|pair| match (&pair[0].friend_ids, &pair[1].friend_ids) {
            (Some(before), Some(after)) => before.difference(after).count() as u64,
            _ => 0,
        })
        .collect();
    UnfollowSeries {
        user_id: trace.user_id().to_owned(),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<String, usize>,
    pub k: usize,
    /// Members per label.
    pub sizes: Vec<usize>,
    /// Set when every series was identical and all users share label 0.
    pub degenerate: bool,
}

/// Clusters by unfollow behavior.
///
/// Input order does not matter: series are processed in user-id order.
/// Labels are ordered by ascending mean total unfollows, so label 0 is the
/// least active cluster.
pub fn spectral_cluster(series: &[UnfollowSeries], k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if series.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} series cannot form {k} clusters",
            series.len()
        )));
    }
    let mut ordered: Vec<&UnfollowSeries> = series.iter().collect();
    ordered.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    if let Some(w) = ordered.windows(2).find(|w| w[0].user_id == w[1].user_id) {
        return Err(Error::InvalidParameter(format!(
            "user `{}` appears twice",
            w[0].user_id
        )));
    }
    let n = ordered.len();
    let len = ordered.iter().map(|s| s.counts.len()).max().unwrap_or(0);
    let rows: Vec<Vec<f64>> = ordered
        .iter()
        .map(|s| {
            let mut r: Vec<f64> = s.counts.iter().map(|&c| c as f64).collect();
            r.resize(len, 0.0);
            r
        })
        .collect();

    if rows.iter().all(|r| *r == rows[0]) {
        let mut sizes = vec![0; k];
        sizes[0] = n;
        return Ok(ClusterAssignment {
            labels: ordered.iter().map(|s| (s.user_id.clone(), 0)).collect(),
            k,
            sizes,
            degenerate: true,
        });
    }

    let mut dist = DMatrix::<f64>::zeros(n, n);
    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = crate::neighborhood::distance(&rows[i], &rows[j]);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
            pairwise.push(d);
        }
    }
    let mut sigma = stats::median(&pairwise).expect("n >= 2");
    if sigma <= 0.0 {
        // More than half the pairs coincide; fall back to the typical
        // nonzero separation.
        let nonzero: Vec<f64> = pairwise.iter().copied().filter(|&d| d > 0.0).collect();
        sigma = stats::median(&nonzero).expect("series are not all identical");
    }

    let affinity = dist.map(|d| (-(d * d) / (2.0 * sigma * sigma)).exp());
    let degree: Vec<f64> = (0..n).map(|i| affinity.row(i).sum()).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut laplacian = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            laplacian[(i, j)] -= inv_sqrt[i] * affinity[(i, j)] * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    // Rescaling by D^-1/2 makes the trivial eigenvector constant, so it
    // shifts every row equally and drops out of the k-means distances.
    let embedding: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            order[..k]
                .iter()
                .map(|&c| eig.eigenvectors[(i, c)] * inv_sqrt[i])
                .collect()
        })
        .collect();

    let raw = kmeans(&embedding, k, seed);

    // Canonical labels: ascending mean total unfollows, then first member.
    let totals: Vec<f64> = ordered.iter().map(|s| s.total() as f64).collect();
    let mut groups: Vec<(f64, usize, usize)> = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| raw[i] == c).collect();
            let mean = if members.is_empty() {
                f64::INFINITY
            } else {
                members.iter().map(|&i| totals[i]).sum::<f64>() / members.len() as f64
            };
            (mean, members.first().copied().unwrap_or(usize::MAX), c)
        })
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut relabel = vec![0; k];
    for (new, &(_, _, old)) in groups.iter().enumerate() {
        relabel[old] = new;
    }

    let mut sizes = vec![0; k];
    let labels = ordered
        .iter()
        .zip(&raw)
        .map(|(s, &c)| {
            sizes[relabel[c]] += 1;
            (s.user_id.clone(), relabel[c])
        })
        .collect();
    Ok(ClusterAssignment {
        labels,
        k,
        sizes,
        degenerate: false,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from farthest-point seeds. The first seed is drawn
/// from `seed`; each further seed is the point farthest from those chosen
/// (lowest index on ties).
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        for i in 1..n {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        centers.push(points[best].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = sq_dist(p, &centers[0]);
                for (c, center) in centers.iter().enumerate().skip(1) {
                    let d = sq_dist(p, center);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..KMEANS_MAX_ITER {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Members of the cluster with the highest mean total unfollow count that
/// also have more than one unfollow event.
pub fn select_aggressive(assignment: &ClusterAssignment, series: &[UnfollowSeries]) -> BTreeSet<String> {
    let mut sums = vec![(0u64, 0usize); assignment.k];
    for s in series {
        if let Some(&label) = assignment.labels.get(&s.user_id) {
            sums[label].0 += s.total();
            sums[label].1 += 1;
        }
    }
    let top = sums
        .iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .max_by(|a, b| {
            let ma = a.1 .0 as f64 / a.1 .1 as f64;
            let mb = b.1 .0 as f64 / b.1 .1 as f64;
            ma.total_cmp(&mb).then(b.0.cmp(&a.0))
        })
        .map(|(label, _)| label);
    let Some(top) = top else {
        return BTreeSet::new();
    };
    series
        .iter()
        .filter(|s| assignment.labels.get(&s.user_id) == Some(&top) && s.total() > 1)
        .map(|s| s.user_id.clone())
        .collect()
}

/// Rule-only selection: users with more than one unfollow event.
pub fn repeated_unfollowers(series: &[UnfollowSeries]) -> BTreeSet<String> {
    series
        .iter()
        .filter(|s| s.total() > 1)
        .map(|s| s.user_id.clone())
        .collect()
}

/// One line of a cluster report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub user_id: String,
    pub label: usize,
    pub total_unfollows: u64,
    /// Selected by [`select_aggressive`].
    pub aggressive: bool,
}
