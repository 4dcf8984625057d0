use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;

use crate::edges::EdgeMap;
use crate::error::{Error, Result};
use crate::filter::MatchSet;
use crate::superpixels::SuperpixelSegmentation;

use super::InterpParams;

/// Support of one superpixel: `(match index, distance)` sorted by distance,
/// then by index.
pub type Support = Vec<(usize, f64)>;

/// Weighted adjacency of the superpixel graph.
#[derive(Debug, Clone)]
pub struct SuperpixelGraph {
    /// Per node: `(neighbor, step cost)`, neighbors ascending.
    pub edges: Vec<Vec<(u32, f64)>>,
}

impl SuperpixelGraph {
    /// Step cost between adjacent superpixels: mean edge strength over their
    /// shared pixel boundary plus `offset` times the centroid distance.
    pub fn build(seg: &SuperpixelSegmentation, edges: &EdgeMap, offset: f64) -> Result<Self> {
        if edges.dims() != (seg.width, seg.height) {
            return Err(Error::DimensionMismatch {
                expected: (seg.width, seg.height),
                found: edges.dims(),
            });
        }
        let (w, h) = (seg.width, seg.height);
        let mut boundary: HashMap<(u32, u32), (f64, usize)> = HashMap::new();
        let mut add = |a: u32, b: u32, s: f64| {
            let key = (a.min(b), a.max(b));
            let e = boundary.entry(key).or_insert((0.0, 0));
            e.0 += s;
            e.1 += 1;
        };
        for y in 0..h {
            for x in 0..w {
                let l = seg.label(x, y);
                let e = edges.at(x, y) as f64;
                if x + 1 < w && seg.label(x + 1, y) != l {
                    add(l, seg.label(x + 1, y), 0.5 * (e + edges.at(x + 1, y) as f64));
                }
                if y + 1 < h && seg.label(x, y + 1) != l {
                    add(l, seg.label(x, y + 1), 0.5 * (e + edges.at(x, y + 1) as f64));
                }
            }
        }
        let n = seg.count();
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &(sum, count)) in &boundary {
            let ca = &seg.centers[a as usize];
            let cb = &seg.centers[b as usize];
            let cost = sum / count as f64 + offset * (ca.x - cb.x).hypot(ca.y - cb.y);
            adj[a as usize].push((b, cost));
            adj[b as usize].push((a, cost));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(SuperpixelGraph { edges: adj })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Shortest-path costs from `source` to every node.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            for &(j, c) in &self.edges[i] {
                let nd = d + c;
                if nd < dist[j as usize] {
                    dist[j as usize] = nd;
                    heap.push(Entry(nd, j as usize));
                }
            }
        }
        dist
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Selects, for every superpixel, the `neighborhood_size` matches closest to
/// its centroid.
///
/// The distance to a match is its Euclidean distance from the centroid,
/// scaled by the offset, plus the excess of the graph path to the match's
/// superpixel over the straight centroid-to-centroid line. On an edge-free
/// map with straight paths this is the scaled Euclidean distance; boundary
/// strength along the path adds to it.
pub fn assign_support(
    matches: &MatchSet,
    seg: &SuperpixelSegmentation,
    edges: &EdgeMap,
    params: &InterpParams,
) -> Result<Vec<Support>> {
    if matches.is_empty() {
        return Err(Error::InterpolationImpossible("no matches to interpolate".into()));
    }
    params.validate()?;
    let graph = SuperpixelGraph::build(seg, edges, params.euclidean_offset)?;
    let (w, h) = (seg.width, seg.height);
    let mut home = Vec::with_capacity(matches.len());
    for m in matches.iter() {
        let (x, y) = (m.x.round(), m.y.round());
        if !(x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h) {
            return Err(Error::OutOfBounds {
                x: m.x as f64,
                y: m.y as f64,
                width: w,
                height: h,
            });
        }
        home.push(seg.label(x as usize, y as usize) as usize);
    }
    let k = params.neighborhood_size.min(matches.len());
    let offset = params.euclidean_offset;
    let supports = (0..seg.count())
        .into_par_iter()
        .map(|i| {
            let graph_dist = graph.distances_from(i);
            let c = &seg.centers[i];
            let mut cand: Vec<(usize, f64)> = matches
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let s = &seg.centers[home[j]];
                    let straight = offset * (s.x - c.x).hypot(s.y - c.y);
                    let excess = (graph_dist[home[j]] - straight).max(0.0);
                    (j, offset * (m.x as f64 - c.x).hypot(m.y as f64 - c.y) + excess)
                })
                .collect();
            let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand
        })
        .collect();
    Ok(supports)
}
