//! Boundary-strength maps and grid geodesic distances over them.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{open_error, Error, Result};
use crate::raster::{gaussian_blur, percentile, Image};

/// Offset added to per-step edge cost so that flat regions accumulate
/// distance in proportion to path length.
pub const EUCLIDEAN_OFFSET: f64 = 0.002;

const MAGIC: &[u8; 4] = b"EDG1";

/// Per-pixel boundary strength in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    strength: Vec<f32>,
}

impl EdgeMap {
    /// Values are clamped to [0, 1]; non-finite values are rejected.
    pub fn new(width: usize, height: usize, strength: Vec<f32>) -> Result<Self> {
        if strength.len() != width * height {
            return Err(Error::invalid("edge map length does not match dimensions"));
        }
        if strength.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge map".into()));
        }
        Ok(EdgeMap {
            width,
            height,
            strength: strength.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            strength: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let strength = (0..width * height).map(|i| f(i % width, i / width)).collect();
        EdgeMap::new(width, height, strength).expect("generator produced an invalid edge map")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.strength[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.strength
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + 4 * self.strength.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.strength {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Reads an edge file, optionally checking it against reference dimensions.
    pub fn load(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| open_error(path, e))?
            .read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                detail: "expected EDG1".into(),
            });
        }
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let needed = 12 + 4 * w * h;
        if bytes.len() < needed {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: needed,
                found: bytes.len(),
            });
        }
        if let Some(dims) = expected {
            if dims != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: (w, h),
                });
            }
        }
        let strength = bytes[12..needed]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EdgeMap::new(w, h, strength)
    }
}

/// Gaussian-smoothed (sigma 1) multi-channel gradient magnitude, divided by
/// its 99th percentile and clamped to [0, 1].
pub fn detect_edges(img: &Image) -> EdgeMap {
    let (w, h) = img.dims();
    let mut mag2 = vec![0.0; w * h];
    for c in 0..img.channels() {
        let smooth = gaussian_blur(&img.plane(c), w, h, 1.0);
        for y in 0..h {
            for x in 0..w {
                let gx = 0.5 * (smooth[y * w + (x + 1).min(w - 1)] - smooth[y * w + x.saturating_sub(1)]);
                let gy = 0.5 * (smooth[(y + 1).min(h - 1) * w + x] - smooth[y.saturating_sub(1) * w + x]);
                mag2[y * w + x] += gx * gx + gy * gy;
            }
        }
    }
    let mag: Vec<f64> = mag2.into_iter().map(f64::sqrt).collect();
    let mut scale = percentile(&mag, 0.99);
    if scale <= 1e-12 {
        scale = mag.iter().cloned().fold(0.0, f64::max);
    }
    if scale <= 1e-12 {
        return EdgeMap::zeros(w, h);
    }
    let strength = mag.iter().map(|&m| (m / scale).clamp(0.0, 1.0) as f32).collect();
    EdgeMap {
        width: w,
        height: h,
        strength,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicParams {
    pub euclidean_offset: f64,
    pub connectivity: Connectivity,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        GeodesicParams {
            euclidean_offset: EUCLIDEAN_OFFSET,
            connectivity: Connectivity::Eight,
        }
    }
}

/// Cost of one grid step between adjacent pixels `p` and `q`.
#[inline]
pub fn step_cost(edges: &EdgeMap, p: (usize, usize), q: (usize, usize), params: &GeodesicParams) -> f64 {
    let diagonal = p.0 != q.0 && p.1 != q.1;
    let len = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
    let mean = 0.5 * (edges.at(p.0, p.1) as f64 + edges.at(q.0, q.1) as f64);
    len * (mean + params.euclidean_offset)
}

pub(crate) fn neighbor_offsets(connectivity: Connectivity) -> &'static [(isize, isize)] {
    match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    }
}

/// Settled distances from one source, keyed by `(x, y)`.
#[derive(Debug, Clone, Default)]
pub struct GeodesicDistances {
    pub distances: HashMap<(usize, usize), f64>,
}

impl GeodesicDistances {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.distances.get(&(x, y)).copied()
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    index: usize,
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Single-source Dijkstra over the pixel grid. Pixels farther than
/// `radius_limit` are not reported.
pub fn geodesic_distances(
    edges: &EdgeMap,
    source: (usize, usize),
    params: &GeodesicParams,
    radius_limit: f64,
) -> Result<GeodesicDistances> {
    let (w, h) = edges.dims();
    if source.0 >= w || source.1 >= h {
        return Err(Error::OutOfBounds {
            x: source.0 as f64,
            y: source.1 as f64,
            width: w,
            height: h,
        });
    }
    let offsets = neighbor_offsets(params.connectivity);
    let mut best = vec![f64::INFINITY; w * h];
    let mut done = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    let start = source.1 * w + source.0;
    best[start] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        index: start,
    });
    let mut out = GeodesicDistances::default();
    while let Some(Frontier { dist, index }) = heap.pop() {
        if done[index] || dist > best[index] {
            continue;
        }
        if dist > radius_limit {
            break;
        }
        done[index] = true;
        let (x, y) = (index % w, index / w);
        out.distances.insert((x, y), dist);
        for &(dx, dy) in offsets {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let j = ny * w + nx;
            if done[j] {
                continue;
            }
            let nd = dist + step_cost(edges, (x, y), (nx, ny), params);
            if nd < best[j] {
                best[j] = nd;
                heap.push(Frontier { dist: nd, index: j });
            }
        }
    }
    Ok(out)
}
