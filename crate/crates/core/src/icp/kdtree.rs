//! Static 3-d tree for exact nearest-neighbour queries.

use nalgebra::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Nearest-neighbour index over a fixed point set. Ties on distance resolve to
/// the lower original index, so results match [`nearest_linear`] exactly.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut tree = KdTree {
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

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (lo, hi) =
            self.order[start..end]
                .iter()
                .fold(([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]), |(mut lo, mut hi), &i| {
                    for k in 0..3 {
                        lo[k] = lo[k].min(self.points[i][k]);
                        hi[k] = hi[k].max(self.points[i][k]);
                    }
                    (lo, hi)
                });
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
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

    /// Index and squared distance of the nearest point, or `None` when empty.
    pub fn nearest(&self, query: &Point3<f64>) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
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
                self.search(near, q, best);
                // Equal distance is still searched so lower-index ties are found.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Reference nearest neighbour by linear scan, lowest index on ties.
pub fn nearest_linear(points: &[Point3<f64>], query: &Point3<f64>) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - query).norm_squared()))
        .fold(None, |best, (i, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((i, d)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_tree() {
        assert!(KdTree::new(&[]).nearest(&Point3::origin()).is_none());
    }

    #[test]
    fn duplicates_resolve_to_lowest_index() {
        let mut pts = vec![Point3::new(5.0, 5.0, 5.0); 40];
        pts.push(Point3::new(0.0, 0.0, 0.0));
        pts.push(Point3::new(0.0, 0.0, 0.0));
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Point3::new(0.1, 0.0, 0.0)).unwrap().0, 40);
        assert_eq!(tree.nearest(&Point3::new(5.0, 5.0, 5.1)).unwrap().0, 0);
    }

    #[test]
    fn equidistant_points_pick_lower_index() {
        let pts: Vec<_> = (0..50)
            .map(|i| Point3::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, i as f64 * 0.0))
            .collect();
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Point3::origin()).unwrap().0, 0);
    }

    proptest! {
        #[test]
        fn matches_linear_scan(seed in any::<u64>(), n in 1usize..300, grid in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // A coarse grid produces many exact ties.
            let coord = |rng: &mut ChaCha8Rng| if grid { rng.random_range(0..4) as f64 } else { rng.random_range(-1.0..1.0) };
            let pts: Vec<_> = (0..n).map(|_| Point3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng))).collect();
            let tree = KdTree::new(&pts);
            for _ in 0..50 {
                let q = Point3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
                prop_assert_eq!(tree.nearest(&q), nearest_linear(&pts, &q));
            }
        }
    }
}
