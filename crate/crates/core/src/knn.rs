//! Small static k-d tree for k-nearest-neighbour distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

pub struct KdTree<'a> {
    points: &'a [Vec3],
    /// Point indices permuted into tree order; node `lo..hi` splits at its middle.
    order: Vec<usize>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        KdTree { points, order }
    }

    /// Squared distances to the `k` nearest other points of point `query`,
    /// ascending. Fewer are returned when the tree is small.
    pub fn nearest_excluding(&self, query: usize, k: usize) -> Vec<f64> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.points[query], query, k, 0, self.order.len(), 0, &mut heap);
        }
        let mut out: Vec<f64> = heap.into_iter().map(|c| c.0).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn search(&self, q: &Vec3, skip: usize, k: usize, lo: usize, hi: usize, axis: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if idx != skip {
            let d2 = (p - q).norm_squared();
            if heap.len() < k {
                heap.push(Candidate(d2, idx));
            } else if d2 < heap.peek().map_or(f64::INFINITY, |c| c.0) {
                heap.pop();
                heap.push(Candidate(d2, idx));
            }
        }
        let diff = q[axis] - p[axis];
        let next = (axis + 1) % 3;
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, skip, k, near.0, near.1, next, heap);
        let worst = if heap.len() < k { f64::INFINITY } else { heap.peek().map_or(f64::INFINITY, |c| c.0) };
        if diff * diff <= worst {
            self.search(q, skip, k, far.0, far.1, next, heap);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, (axis + 1) % 3);
    build(points, &mut right[1..], (axis + 1) % 3);
}
