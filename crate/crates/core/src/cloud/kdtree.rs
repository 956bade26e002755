//! kd-tree for k-nearest-neighbour and radius queries.
//!
//! Results are defined to match a brute-force scan exactly, including
//! tie-breaking: candidates are ordered by (squared distance, index).

use nalgebra::Point3;
use std::collections::BinaryHeap;

pub struct KnnIndex {
    pts: Vec<[f64; 3]>,
    /// Tree layout: every subrange stores its median-split node in the
    /// middle, children in the left/right halves. Split axis cycles with
    /// depth.
    order: Vec<u32>,
}

#[derive(PartialEq)]
struct Cand(f64, u32);

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KnnIndex {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_rec(&pts, &mut order, 0);
        KnnIndex { pts, order }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// The `min(k, len)` nearest points to `query`, as `(index, distance)`
    /// sorted ascending by (distance, index). A point of the indexed cloud
    /// coinciding with `query` is included (distance 0).
    pub fn nearest(&self, query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.pts.is_empty() {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(&q, k, 0, self.order.len(), 0, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|Cand(d2, id)| (id as usize, d2.sqrt()))
            .collect();
        out.truncate(k);
        out
    }

    fn knn_rec(
        &self,
        q: &[f64; 3],
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<Cand>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid];
        let p = &self.pts[id as usize];
        let cand = Cand(dist2(q, p), id);
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.push(cand);
            heap.pop();
        }

        let dim = depth % 3;
        let delta = q[dim] - p[dim];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, k, near.0, near.1, depth + 1, heap);
        // The far half can only contain closer candidates (or index-ties at
        // equal distance) when the splitting plane is not strictly farther
        // than the current worst.
        if heap.len() < k || delta * delta <= heap.peek().unwrap().0 {
            self.knn_rec(q, k, far.0, far.1, depth + 1, heap);
        }
    }

    /// Indices of all points within `radius` (inclusive) of `query`, sorted
    /// ascending by index.
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let q = [query.x, query.y, query.z];
        let mut out = Vec::new();
        self.radius_rec(&q, radius * radius, 0, self.order.len(), 0, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(
        &self,
        q: &[f64; 3],
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid];
        let p = &self.pts[id as usize];
        if dist2(q, p) <= r2 {
            out.push(id as usize);
        }
        let dim = depth % 3;
        let delta = q[dim] - p[dim];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_rec(q, r2, near.0, near.1, depth + 1, out);
        if delta * delta <= r2 {
            self.radius_rec(q, r2, far.0, far.1, depth + 1, out);
        }
    }
}

fn build_rec(pts: &[[f64; 3]], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let dim = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        pts[a as usize][dim]
            .total_cmp(&pts[b as usize][dim])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_rec(pts, left, depth + 1);
    build_rec(pts, &mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(pts: &[Point3<f64>], q: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let qa = [q.x, q.y, q.z];
        let mut all: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (dist2(&[p.x, p.y, p.z], &qa), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn brute_radius(pts: &[Point3<f64>], q: &Point3<f64>, r: f64) -> Vec<usize> {
        let qa = [q.x, q.y, q.z];
        pts.iter()
            .enumerate()
            .filter(|(_, p)| dist2(&[p.x, p.y, p.z], &qa) <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    /// Integer-grid points force exact distance ties, so tie-breaking by
    /// index is exercised.
    fn tie_heavy_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-3..=3i32) as f64,
                    rng.random_range(-3..=3i32) as f64,
                    rng.random_range(-3..=3i32) as f64,
                )
            })
            .collect()
    }

    #[test]
    fn knn_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for n in [1usize, 2, 7, 64, 257] {
            let pts = tie_heavy_cloud(&mut rng, n);
            let index = KnnIndex::build(&pts);
            for _ in 0..40 {
                let q = Point3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                );
                for k in [1usize, 3, 10, n, n + 5] {
                    assert_eq!(index.nearest(&q, k), brute_nearest(&pts, &q, k));
                }
            }
        }
    }

    #[test]
    fn knn_query_on_cloud_point_returns_self_first() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        let index = KnnIndex::build(&pts);
        let nn = index.nearest(&pts[1], 2);
        assert_eq!(nn[0], (1, 0.0));
        assert_eq!(nn[1].0, 0);
    }

    #[test]
    fn radius_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let pts = tie_heavy_cloud(&mut rng, 300);
        let index = KnnIndex::build(&pts);
        for _ in 0..50 {
            let q = Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            for r in [0.0, 0.5, 1.0, 2.0, 10.0] {
                assert_eq!(index.within_radius(&q, r), brute_radius(&pts, &q, r));
            }
        }
    }

    #[test]
    fn radius_boundary_is_inclusive() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let index = KnnIndex::build(&pts);
        assert_eq!(index.within_radius(&pts[0], 1.0), vec![0, 1]);
    }

    #[test]
    fn empty_and_degenerate_queries() {
        let index = KnnIndex::build(&[]);
        assert!(index.nearest(&Point3::origin(), 3).is_empty());
        assert!(index.within_radius(&Point3::origin(), 1.0).is_empty());

        let index = KnnIndex::build(&[Point3::origin()]);
        assert!(index.nearest(&Point3::origin(), 0).is_empty());
        assert_eq!(index.nearest(&Point3::origin(), 5), vec![(0, 0.0)]);
    }
}
