#![allow(dead_code)]

use flowfields::edges::{Connectivity, EdgeMap};
use flowfields::pipeline::prepare_frames;
use flowfields::synthetic::Scene;
use flowfields::{FlowField, Image};

/// Both frames of a scene in CIELab.
pub fn lab(scene: &Scene) -> (Image, Image) {
    prepare_frames(&scene.img1, &scene.img2).unwrap()
}

/// Pixels at least `margin` away from every border.
pub fn interior(width: usize, height: usize, margin: usize) -> impl Iterator<Item = (usize, usize)> {
    (margin..height - margin).flat_map(move |y| (margin..width - margin).map(move |x| (x, y)))
}

pub fn endpoint_error(a: &FlowField, b: &FlowField, x: usize, y: usize) -> f64 {
    let (au, av) = a.get(x, y);
    let (bu, bv) = b.get(x, y);
    (au as f64 - bu as f64).hypot(av as f64 - bv as f64)
}

/// Textbook Dijkstra with a linear scan for the closest unsettled pixel.
/// Step cost is `length * (mean endpoint strength + 0.002)`.
pub fn brute_force_dijkstra(edges: &EdgeMap, source: (usize, usize), connectivity: Connectivity) -> Vec<f64> {
    let (w, h) = edges.dims();
    let n = w * h;
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    dist[source.1 * w + source.0] = 0.0;
    for _ in 0..n {
        let mut best = usize::MAX;
        for i in 0..n {
            if !settled[i] && dist[i].is_finite() && (best == usize::MAX || dist[i] < dist[best]) {
                best = i;
            }
        }
        if best == usize::MAX {
            break;
        }
        settled[best] = true;
        let (x, y) = ((best % w) as i64, (best / w) as i64);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let diagonal = dx != 0 && dy != 0;
                if (dx == 0 && dy == 0) || (diagonal && connectivity == Connectivity::Four) {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                let length = if diagonal { 2f64.sqrt() } else { 1.0 };
                let strength = (edges.values()[best] as f64 + edges.values()[j] as f64) / 2.0;
                let candidate = dist[best] + length * (strength + 0.002);
                if candidate < dist[j] {
                    dist[j] = candidate;
                }
            }
        }
    }
    dist
}
