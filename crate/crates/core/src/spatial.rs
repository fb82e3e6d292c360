//! Static k-d tree over 3-D points with exact nearest and k-nearest queries
//! under the Euclidean or L1 metric.

use crate::network::Vec3;

const LEAF_SIZE: usize = 8;

/// Distance used for a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    /// Monotone surrogate of the distance used during search (squared
    /// distance for Euclidean).
    #[inline]
    fn key(self, a: &Vec3, b: &Vec3) -> f64 {
        match self {
            Metric::Euclidean => (a - b).norm_squared(),
            Metric::Manhattan => (a - b).abs().sum(),
        }
    }

    #[inline]
    fn axis_key(self, d: f64) -> f64 {
        match self {
            Metric::Euclidean => d * d,
            Metric::Manhattan => d.abs(),
        }
    }

    #[inline]
    fn finish(self, key: f64) -> f64 {
        match self {
            Metric::Euclidean => key.sqrt(),
            Metric::Manhattan => key,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Neighbor returned by a query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Closest point to `q`. Ties resolve to the smaller index.
    pub fn nearest(&self, q: &Vec3, metric: Metric) -> Option<Neighbor> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_in(0, q, metric, &mut best);
        Some(Neighbor {
            index: best.1,
            distance: metric.finish(best.0),
        })
    }

    fn nearest_in(&self, node: usize, q: &Vec3, metric: Metric, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = metric.key(q, &self.points[i]);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, metric, best);
                if metric.axis_key(diff) <= best.0 {
                    self.nearest_in(far, q, metric, best);
                }
            }
        }
    }

    /// The `k` closest points in ascending distance (ties by index), skipping
    /// the point with index `exclude` when given.
    pub fn k_nearest(&self, q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut found: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_in(0, q, k, exclude, &mut found);
        }
        found
            .into_iter()
            .map(|(d, index)| Neighbor {
                index,
                distance: d.sqrt(),
            })
            .collect()
    }

    fn knn_in(&self, node: usize, q: &Vec3, k: usize, exclude: Option<usize>, found: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = (q - self.points[i]).norm_squared();
                    let full = found.len() == k;
                    if full {
                        let worst = found[k - 1];
                        if d > worst.0 || (d == worst.0 && i > worst.1) {
                            continue;
                        }
                    }
                    let pos = found.partition_point(|&(fd, fi)| fd < d || (fd == d && fi < i));
                    found.insert(pos, (d, i));
                    if found.len() > k {
                        found.pop();
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_in(near, q, k, exclude, found);
                if found.len() < k || diff * diff <= found[k - 1].0 {
                    self.knn_in(far, q, k, exclude, found);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[Vec3], q: &Vec3, metric: Metric) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = match metric {
                Metric::Euclidean => (q - p).norm(),
                Metric::Manhattan => (q - p).abs().sum(),
            };
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let n = rng.random_range(1..300);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let tree = KdTree::new(&pts);
            for _ in 0..50 {
                let q = Vec3::new(rng.random(), rng.random(), rng.random()) * 1.2;
                for metric in [Metric::Euclidean, Metric::Manhattan] {
                    let got = tree.nearest(&q, metric).unwrap();
                    let (_, d) = brute_nearest(&pts, &q, metric);
                    assert_eq!(got.distance, d, "trial {trial} metric {metric:?}");
                }
            }
        }
    }

    #[test]
    fn knn_matches_sorted_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..250)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::new(&pts);
        for i in (0..250).step_by(7) {
            let got = tree.k_nearest(&pts[i], 20, Some(i));
            let mut all: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| (pts[i] - p).norm())
                .collect();
            all.sort_by(f64::total_cmp);
            let dists: Vec<f64> = got.iter().map(|n| n.distance).collect();
            assert_eq!(dists, all[..20].to_vec());
        }
    }

    #[test]
    fn empty_and_tiny_trees() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&Vec3::zeros(), Metric::Euclidean).is_none());
        assert!(tree.k_nearest(&Vec3::zeros(), 3, None).is_empty());
        let one = KdTree::new(&[Vec3::x()]);
        assert_eq!(one.nearest(&Vec3::zeros(), Metric::Manhattan).unwrap().distance, 1.0);
        assert_eq!(one.k_nearest(&Vec3::zeros(), 3, None).len(), 1);
    }
}
