//! Fixed-radius neighbor queries over events embedded as `(x, y, t * time_scale)`.

use crate::error::{Error, Result};
use crate::geometry::Event;
use crate::solver::MIN_EVENTS;

const LEAF_SIZE: usize = 8;

/// Static k-d tree over event coordinates.
///
/// Points are stored in tree order; each node covers a contiguous range and
/// splits at its median along the axis of widest spread. Queries are exact.
#[derive(Debug, Clone)]
pub struct SpatioTemporalIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
    time_scale: f64,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { lo: usize, hi: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

pub fn embed(e: &Event, time_scale: f64) -> [f64; 3] {
    [e.x, e.y, e.t * time_scale]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Indexes all events; ids are positions in `events`.
pub fn build_index(events: &[Event], time_scale: f64) -> Result<SpatioTemporalIndex> {
    let ids: Vec<usize> = (0..events.len()).collect();
    SpatioTemporalIndex::build(events, &ids, time_scale)
}

impl SpatioTemporalIndex {
    /// Indexes the subset `ids` of `events`; queries report those ids.
    pub fn build(events: &[Event], ids: &[usize], time_scale: f64) -> Result<Self> {
        if ids.len() < MIN_EVENTS {
            return Err(Error::TooFewEvents { required: MIN_EVENTS, got: ids.len() });
        }
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("time scale must be positive, got {time_scale}")));
        }
        let mut order: Vec<(usize, [f64; 3])> = ids.iter().map(|&i| (i, embed(&events[i], time_scale))).collect();
        let mut nodes = Vec::with_capacity(2 * ids.len() / LEAF_SIZE + 1);
        let n = order.len();
        build_node(&mut order, 0, n, &mut nodes);
        let (ids, points) = order.into_iter().unzip();
        Ok(Self { points, ids, nodes, time_scale })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Event ids in storage order.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn point_of_slot(&self, slot: usize) -> &[f64; 3] {
        &self.points[slot]
    }

    /// Ids of all indexed events within `radius` (inclusive) of `p`.
    pub fn query(&self, p: &[f64; 3], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_into(p, radius, &mut out);
        out
    }

    pub fn query_into(&self, p: &[f64; 3], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if !self.nodes.is_empty() {
            self.visit(0, p, radius, radius * radius, out);
        }
    }

    fn visit(&self, node: usize, p: &[f64; 3], r: f64, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for s in lo..hi {
                    if dist2(&self.points[s], p) <= r2 {
                        out.push(self.ids[s]);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let d = p[axis] - value;
                if d <= r {
                    self.visit(left, p, r, r2, out);
                }
                if d >= -r {
                    self.visit(right, p, r, r2, out);
                }
            }
        }
    }
}

/// Builds the subtree over `order[lo..hi]`, returning its node index.
/// Left children hold coordinates `<= value`, right children `>= value`.
fn build_node(order: &mut [(usize, [f64; 3])], lo: usize, hi: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    if hi - lo <= LEAF_SIZE {
        nodes.push(Node::Leaf { lo, hi });
        return me;
    }
    let slice = &mut order[lo..hi];
    let axis = (0..3)
        .max_by(|&a, &b| spread(slice, a).total_cmp(&spread(slice, b)))
        .unwrap_or(0);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]));
    let value = slice[mid].1[axis];
    nodes.push(Node::Leaf { lo, hi });
    let left = build_node(order, lo, lo + mid, nodes);
    let right = build_node(order, lo + mid, hi, nodes);
    nodes[me] = Node::Split { axis, value, left, right };
    me
}

fn spread(points: &[(usize, [f64; 3])], axis: usize) -> f64 {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1[axis]), hi.max(p.1[axis])));
    hi - lo
}
