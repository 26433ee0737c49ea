use super::tree::{Bound, Tree};
use super::{distance, Points};

pub(crate) fn build(points: &Points) -> Tree {
    Tree::build(points, bounding_ball)
}

/// Centroid and the largest centroid-to-member distance.
fn bounding_ball(points: &Points, idx: &[usize]) -> Bound {
    let mut center = vec![0.0; points.dim()];
    for &i in idx {
        for (c, &x) in center.iter_mut().zip(points.row(i)) {
            *c += x;
        }
    }
    let n = idx.len().max(1) as f64;
    center.iter_mut().for_each(|c| *c /= n);
    let radius = idx
        .iter()
        .map(|&i| distance(&center, points.row(i)))
        .fold(0.0, f64::max);
    Bound::Ball { center, radius }
}
