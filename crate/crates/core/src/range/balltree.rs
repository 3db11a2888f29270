use serde::{Deserialize, Serialize};

use crate::metric::{l2, Points};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    center: Vec<f64>,
    radius: f64,
    /// Range into `order` covered by this node.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Ball tree over a fixed point set answering radius queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallTree {
    points: Points,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl BallTree {
    pub fn new(points: Points) -> Self {
        let order: Vec<usize> = (0..points.len()).collect();
        let mut tree = BallTree {
            points,
            order,
            nodes: Vec::new(),
        };
        if !tree.order.is_empty() {
            tree.build(0, tree.order.len());
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
        let dim = self.points.dim();
        let mut center = vec![0.0; dim];
        for &i in &self.order[start..end] {
            for (c, x) in center.iter_mut().zip(self.points.row(i)) {
                *c += x;
            }
        }
        let n = (end - start) as f64;
        center.iter_mut().for_each(|c| *c /= n);
        let radius = self.order[start..end]
            .iter()
            .map(|&i| l2(self.points.row(i), &center))
            .fold(0.0, f64::max);
        let id = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE && radius > 0.0 {
            // Split on the coordinate of largest spread at its median.
            let axis = (0..dim)
                .map(|a| {
                    let (lo, hi) = self.order[start..end].iter().fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), &i| {
                            let x = self.points.row(i)[a];
                            (lo.min(x), hi.max(x))
                        },
                    );
                    (hi - lo, a)
                })
                .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)))
                .map(|x| x.1)
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points.row(a)[axis]
                    .total_cmp(&points.row(b)[axis])
                    .then(a.cmp(&b))
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    /// Ids of all points within `radius` of `center`, ascending.
    pub fn within(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            // Slack keeps boundary points from being lost to rounding; leaves test exactly.
            if l2(center, &node.center) > (radius + node.radius) * (1.0 + 1e-9) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if l2(center, self.points.row(i)) <= radius {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
