//! SLIC over-segmentation with connectivity enforcement.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Image;

pub const COMPACTNESS: f64 = 10.0;
pub const SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelCenter {
    pub x: f64,
    pub y: f64,
    pub color: [f64; 3],
    pub area: usize,
}

#[derive(Debug, Clone)]
pub struct SuperpixelSegmentation {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub centers: Vec<SuperpixelCenter>,
    /// Sorted neighbor labels per superpixel.
    pub neighbors: Vec<Vec<u32>>,
}

impl SuperpixelSegmentation {
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Label pairs `(a, b)` with `a < b` that share a 4-neighbor boundary.
    pub fn adjacency(&self) -> BTreeSet<(u32, u32)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| (a as u32) < b).map(move |&b| (a as u32, b)))
            .collect()
    }

    /// Writes the label map as a 16-bit grayscale PNG.
    pub fn save_labels_png(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.count() > u16::MAX as usize + 1 {
            return Err(Error::Format("more than 65536 superpixels".into()));
        }
        let raw: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size");
        buf.save(path.as_ref())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cluster {
    x: f64,
    y: f64,
    color: [f64; 3],
}

fn color_at(img: &Image, x: usize, y: usize) -> [f64; 3] {
    let ch = img.channels();
    std::array::from_fn(|c| if c < ch { img.at(x, y, c) } else { 0.0 })
}

fn color_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Segments `img` with seeds on a grid of spacing `grid_step`.
///
/// Distance is `|lab - lab_c| + (m / S) |xy - xy_c|` with `m = 10`; each
/// label's largest connected piece is kept and orphan pieces are merged into
/// the largest adjacent region.
pub fn segment(img: &Image, grid_step: usize) -> Result<SuperpixelSegmentation> {
    let (w, h) = img.dims();
    if grid_step < 5 || grid_step > w.min(h) / 2 {
        return Err(Error::invalid(format!(
            "superpixel grid step {grid_step} outside [5, {}]",
            w.min(h) / 2
        )));
    }
    let step = grid_step as f64;
    let mut clusters = seed_clusters(img, grid_step);
    let spatial_weight = COMPACTNESS / step;
    let window = 2 * grid_step;
    let mut labels = vec![0u32; w * h];

    for _ in 0..SLIC_ITERATIONS {
        // assignment: each pixel looks at clusters whose 2S window covers it
        let grid = ClusterGrid::new(&clusters, w, h, grid_step);
        labels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, label) in row.iter_mut().enumerate() {
                let c = color_at(img, x, y);
                let mut best = (f64::INFINITY, u32::MAX);
                for k in grid.candidates(x, y) {
                    let cl = &clusters[k];
                    let dx = x as f64 - cl.x;
                    let dy = y as f64 - cl.y;
                    if dx.abs() > window as f64 / 2.0 + 0.5 || dy.abs() > window as f64 / 2.0 + 0.5 {
                        continue;
                    }
                    let d = color_dist(&c, &cl.color) + spatial_weight * (dx * dx + dy * dy).sqrt();
                    if d < best.0 || (d == best.0 && (k as u32) < best.1) {
                        best = (d, k as u32);
                    }
                }
                if best.1 == u32::MAX {
                    // window missed every cluster; fall back to nearest center
                    best.1 = nearest_center(&clusters, x, y) as u32;
                }
                *label = best.1;
            }
        });
        // update
        let mut sums = vec![[0.0f64; 6]; clusters.len()];
        for y in 0..h {
            for x in 0..w {
                let s = &mut sums[labels[y * w + x] as usize];
                let c = color_at(img, x, y);
                s[0] += x as f64;
                s[1] += y as f64;
                s[2] += c[0];
                s[3] += c[1];
                s[4] += c[2];
                s[5] += 1.0;
            }
        }
        for (cl, s) in clusters.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *cl = Cluster {
                    x: s[0] / s[5],
                    y: s[1] / s[5],
                    color: [s[2] / s[5], s[3] / s[5], s[4] / s[5]],
                };
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h);
    Ok(finalize(img, labels, w, h))
}

fn seed_clusters(img: &Image, grid_step: usize) -> Vec<Cluster> {
    let (w, h) = img.dims();
    let nx = ((w as f64 / grid_step as f64).round() as usize).max(1);
    let ny = ((h as f64 / grid_step as f64).round() as usize).max(1);
    let sx = w as f64 / nx as f64;
    let sy = h as f64 / ny as f64;
    let mut clusters = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = ((i as f64 + 0.5) * sx) as usize;
            let cy = ((j as f64 + 0.5) * sy) as usize;
            // move the seed to the lowest-gradient pixel of its 3x3 neighborhood
            let mut best = (f64::INFINITY, cx, cy);
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient_energy(img, x, y);
                    if g < best.0 {
                        best = (g, x, y);
                    }
                }
            }
            let (_, x, y) = best;
            clusters.push(Cluster {
                x: x as f64,
                y: y as f64,
                color: color_at(img, x, y),
            });
        }
    }
    clusters
}

fn gradient_energy(img: &Image, x: usize, y: usize) -> f64 {
    let (w, h) = img.dims();
    let l = color_at(img, x.saturating_sub(1), y);
    let r = color_at(img, (x + 1).min(w - 1), y);
    let u = color_at(img, x, y.saturating_sub(1));
    let d = color_at(img, x, (y + 1).min(h - 1));
    color_dist(&l, &r).powi(2) + color_dist(&u, &d).powi(2)
}

fn nearest_center(clusters: &[Cluster], x: usize, y: usize) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in clusters.iter().enumerate() {
        let d = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Buckets cluster indices by center position so assignment only scans
/// clusters within reach.
struct ClusterGrid {
    cell: usize,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl ClusterGrid {
    fn new(clusters: &[Cluster], w: usize, h: usize, step: usize) -> Self {
        let cell = step;
        let cols = w.div_ceil(cell);
        let rows = h.div_ceil(cell);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (k, c) in clusters.iter().enumerate() {
            let bx = ((c.x.max(0.0) as usize) / cell).min(cols - 1);
            let by = ((c.y.max(0.0) as usize) / cell).min(rows - 1);
            buckets[by * cols + bx].push(k);
        }
        ClusterGrid {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    fn candidates(&self, x: usize, y: usize) -> impl Iterator<Item = usize> + '_ {
        let bx = x / self.cell;
        let by = y / self.cell;
        let xs = bx.saturating_sub(2)..=(bx + 2).min(self.cols - 1);
        let ys = by.saturating_sub(2)..=(by + 2).min(self.rows - 1);
        ys.flat_map(move |yy| xs.clone().map(move |xx| yy * self.cols + xx))
            .flat_map(move |b| self.buckets[b].iter().copied())
    }
}

/// Relabels so that every label is one 4-connected piece.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize) -> Vec<u32> {
    // connected pieces of the raw label map
    let mut piece = vec![u32::MAX; w * h];
    let mut piece_label = Vec::new();
    let mut piece_area = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if piece[start] != u32::MAX {
            continue;
        }
        let id = piece_label.len() as u32;
        let lab = labels[start];
        let mut area = 0;
        piece[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = (i % w, i / w);
            for j in grid_neighbors(x, y, w, h) {
                if piece[j] == u32::MAX && labels[j] == lab {
                    piece[j] = id;
                    stack.push(j);
                }
            }
        }
        piece_label.push(lab);
        piece_area.push(area);
    }
    let n_pieces = piece_label.len();

    // keep the largest piece of each label (first in raster order on ties)
    let max_label = piece_label.iter().copied().max().unwrap_or(0) as usize;
    let mut keeper = vec![usize::MAX; max_label + 1];
    for p in 0..n_pieces {
        let l = piece_label[p] as usize;
        if keeper[l] == usize::MAX || piece_area[p] > piece_area[keeper[l]] {
            keeper[l] = p;
        }
    }

    // piece adjacency
    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_pieces];
    for y in 0..h {
        for x in 0..w {
            let a = piece[y * w + x] as usize;
            if x + 1 < w {
                let b = piece[y * w + x + 1] as usize;
                if a != b {
                    adjacent[a].insert(b);
                    adjacent[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = piece[(y + 1) * w + x] as usize;
                if a != b {
                    adjacent[a].insert(b);
                    adjacent[b].insert(a);
                }
            }
        }
    }

    // region each piece ends up in, identified by its keeper piece
    let mut owner: Vec<usize> = vec![usize::MAX; n_pieces];
    let mut region_area = vec![0usize; n_pieces];
    for p in 0..n_pieces {
        if keeper[piece_label[p] as usize] == p {
            owner[p] = p;
            region_area[p] = piece_area[p];
        }
    }
    let mut pending: Vec<usize> = (0..n_pieces).filter(|&p| owner[p] == usize::MAX).collect();
    while !pending.is_empty() {
        let mut rest = Vec::new();
        for &p in &pending {
            let target = adjacent[p]
                .iter()
                .filter(|&&q| owner[q] != usize::MAX)
                .map(|&q| owner[q])
                .max_by(|&a, &b| region_area[a].cmp(&region_area[b]).then(b.cmp(&a)));
            match target {
                Some(r) => {
                    owner[p] = r;
                    region_area[r] += piece_area[p];
                }
                None => rest.push(p),
            }
        }
        if rest.len() == pending.len() {
            // isolated from every kept piece; cannot happen on a connected grid
            for &p in &rest {
                owner[p] = p;
            }
            break;
        }
        pending = rest;
    }

    // compact region ids in raster order of first appearance
    let mut compact = vec![u32::MAX; n_pieces];
    let mut next = 0u32;
    let mut out = vec![0u32; w * h];
    for i in 0..w * h {
        let r = owner[piece[i] as usize];
        if compact[r] == u32::MAX {
            compact[r] = next;
            next += 1;
        }
        out[i] = compact[r];
    }
    out
}

#[inline]
pub(crate) fn grid_neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let mut n = [usize::MAX; 4];
    if x > 0 {
        n[0] = y * w + x - 1;
    }
    if x + 1 < w {
        n[1] = y * w + x + 1;
    }
    if y > 0 {
        n[2] = (y - 1) * w + x;
    }
    if y + 1 < h {
        n[3] = (y + 1) * w + x;
    }
    n.into_iter().filter(|&i| i != usize::MAX)
}

fn finalize(img: &Image, labels: Vec<u32>, w: usize, h: usize) -> SuperpixelSegmentation {
    let count = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut sums = vec![[0.0f64; 6]; count];
    let mut neighbors: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); count];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            let c = color_at(img, x, y);
            let s = &mut sums[l as usize];
            s[0] += x as f64;
            s[1] += y as f64;
            s[2] += c[0];
            s[3] += c[1];
            s[4] += c[2];
            s[5] += 1.0;
            if x + 1 < w && labels[y * w + x + 1] != l {
                let m = labels[y * w + x + 1];
                neighbors[l as usize].insert(m);
                neighbors[m as usize].insert(l);
            }
            if y + 1 < h && labels[(y + 1) * w + x] != l {
                let m = labels[(y + 1) * w + x];
                neighbors[l as usize].insert(m);
                neighbors[m as usize].insert(l);
            }
        }
    }
    let centers = sums
        .iter()
        .map(|s| SuperpixelCenter {
            x: s[0] / s[5],
            y: s[1] / s[5],
            color: [s[2] / s[5], s[3] / s[5], s[4] / s[5]],
            area: s[5] as usize,
        })
        .collect();
    SuperpixelSegmentation {
        width: w,
        height: h,
        labels,
        centers,
        neighbors: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;

    fn check_partition(seg: &SuperpixelSegmentation) {
        let (w, h) = (seg.width, seg.height);
        let mut area = vec![0; seg.count()];
        for &l in &seg.labels {
            area[l as usize] += 1;
        }
        assert_eq!(area.iter().sum::<usize>(), w * h);
        assert!(area.iter().all(|&a| a > 0));
        // each label is one 4-connected component
        let mut seen = vec![false; w * h];
        let mut components = 0;
        for s in 0..w * h {
            if seen[s] {
                continue;
            }
            components += 1;
            let l = seg.labels[s];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for j in grid_neighbors(i % w, i / w, w, h) {
                    if !seen[j] && seg.labels[j] == l {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        assert_eq!(components, seg.count());
    }

    #[test]
    fn constant_image_gives_regular_grid() {
        let img = Image::constant(100, 80, ColorSpace::CieLab, 50.0);
        let seg = segment(&img, 20).unwrap();
        check_partition(&seg);
        assert_eq!(seg.count(), 5 * 4);
        for c in &seg.centers {
            assert!(c.area as f64 >= 0.25 * 400.0 && c.area as f64 <= 4.0 * 400.0);
        }
    }

    #[test]
    fn textured_image_partitions_and_is_deterministic() {
        let img = Image::from_fn(90, 70, ColorSpace::CieLab, |x, y, c| {
            let v = ((x as f64 * 0.3).sin() + (y as f64 * 0.21 + c as f64).cos()) * 20.0;
            if c == 0 {
                50.0 + v
            } else {
                v
            }
        });
        let a = segment(&img, 10).unwrap();
        let b = segment(&img, 10).unwrap();
        check_partition(&a);
        assert_eq!(a.labels, b.labels);
        let expected = 9.0 * 7.0;
        assert!((a.count() as f64 - expected).abs() <= 0.3 * expected, "{}", a.count());
    }

    #[test]
    fn adjacency_is_symmetric_and_exact() {
        let img = Image::from_fn(60, 40, ColorSpace::CieLab, |x, y, _| {
            ((x / 7 + y / 5) % 3) as f64 * 30.0
        });
        let seg = segment(&img, 8).unwrap();
        let mut expected = BTreeSet::new();
        for y in 0..40 {
            for x in 0..60 {
                let l = seg.label(x, y);
                if x + 1 < 60 && seg.label(x + 1, y) != l {
                    expected.insert((l.min(seg.label(x + 1, y)), l.max(seg.label(x + 1, y))));
                }
                if y + 1 < 40 && seg.label(x, y + 1) != l {
                    expected.insert((l.min(seg.label(x, y + 1)), l.max(seg.label(x, y + 1))));
                }
            }
        }
        assert_eq!(seg.adjacency(), expected);
        for (a, ns) in seg.neighbors.iter().enumerate() {
            for &b in ns {
                assert!(seg.neighbors[b as usize].contains(&(a as u32)));
            }
        }
    }

    #[test]
    fn grid_step_bounds() {
        let img = Image::constant(40, 40, ColorSpace::CieLab, 0.0);
        assert!(segment(&img, 4).is_err());
        assert!(segment(&img, 21).is_err());
        assert!(segment(&img, 20).is_ok());
    }
}
