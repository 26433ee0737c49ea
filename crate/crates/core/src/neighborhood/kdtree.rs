use super::tree::{Bound, Tree};
use super::Points;

pub(crate) fn build(points: &Points) -> Tree {
    Tree::build(points, bounding_box)
}

fn bounding_box(points: &Points, idx: &[usize]) -> Bound {
    let mut lo = vec![f64::INFINITY; points.dim()];
    let mut hi = vec![f64::NEG_INFINITY; points.dim()];
    for &i in idx {
        for (d, &x) in points.row(i).iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    Bound::Box { lo, hi }
}
