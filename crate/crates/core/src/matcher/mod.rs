//! Coarse-to-fine dense correspondence search.
//!
//! The coarsest pyramid level is initialized by nearest-neighbor lookup of
//! Walsh-Hadamard descriptors in a kD-tree. Every level then runs
//! `iterations` rounds of four diagonal propagation sweeps; after each of the
//! last `random_searches_per_iteration` sweeps of a round, every pixel also
//! tries its current flow plus a uniform random offset. Flow and cost are
//! carried to the next finer level by bilinear upscaling.
//!
//! Candidates are only ever adopted on a strict cost improvement, so the
//! per-pixel cost is non-increasing through every pass.

mod cost;
mod kdtree;

use rand::Rng;
use rayon::prelude::*;

use crate::descriptors::{wh_at, WhDescriptor, WH_LEN};
use crate::error::{Error, Result};
use crate::pyramid::{build_pyramid, PyramidConfig};
use crate::raster::{note_resample, FlowField, Image};
use crate::rng;

pub use cost::matching_cost;
pub(crate) use cost::CostModel;
pub use kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DescriptorKind {
    /// Hamming distance of census strings over all CIELab channels.
    CensusCieLab,
    /// Euclidean distance of dense SIFT descriptors on luminance.
    Sift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingParams {
    pub iterations: usize,
    pub descriptor: DescriptorKind,
    /// Census window half-width, or SIFT patch radius.
    pub patch_radius: usize,
    /// Half-width of the uniform random-search offset, in level pixels.
    pub random_search_radius: f64,
    pub random_searches_per_iteration: usize,
    /// Leaf visits per kD-tree query; `None` for exact search.
    pub kd_leaf_budget: Option<usize>,
    pub pyramid: PyramidConfig,
    pub seed: u64,
}

impl Default for MatchingParams {
    fn default() -> Self {
        MatchingParams::census()
    }
}

impl MatchingParams {
    pub fn census() -> Self {
        MatchingParams {
            iterations: 12,
            descriptor: DescriptorKind::CensusCieLab,
            patch_radius: crate::descriptors::CENSUS_RADIUS,
            random_search_radius: 1.0,
            random_searches_per_iteration: 3,
            kd_leaf_budget: Some(32),
            pyramid: PyramidConfig::default(),
            seed: 0,
        }
    }

    pub fn sift() -> Self {
        MatchingParams {
            descriptor: DescriptorKind::Sift,
            patch_radius: crate::descriptors::SIFT_RADIUS as usize,
            ..MatchingParams::census()
        }
    }

    /// Parameters for the second, independent backward field: one pixel
    /// larger window and a different seed.
    pub fn alternate(&self) -> Self {
        MatchingParams {
            patch_radius: self.patch_radius + 1,
            seed: self.seed ^ 0xa5a5_5a5a_c3c3_3c3c,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("matching iterations must be at least 1"));
        }
        if !(self.random_search_radius > 0.0) {
            return Err(Error::invalid("random search radius must be positive"));
        }
        if self.random_searches_per_iteration > 4 {
            return Err(Error::invalid("at most 4 random searches per iteration"));
        }
        if self.patch_radius == 0 {
            return Err(Error::invalid("patch radius must be positive"));
        }
        if self.descriptor == DescriptorKind::CensusCieLab
            && crate::descriptors::census_bits(self.patch_radius, 3) > crate::descriptors::MAX_CENSUS_BITS
        {
            return Err(Error::invalid("census window larger than 9x9"));
        }
        Ok(())
    }
}

/// Per-pixel best flow and its matching cost at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    width: usize,
    height: usize,
    flow: Vec<[f32; 2]>,
    cost: Vec<f64>,
}

impl CostField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn flow_at(&self, x: usize, y: usize) -> [f32; 2] {
        self.flow[y * self.width + x]
    }

    pub fn cost_at(&self, x: usize, y: usize) -> f64 {
        self.cost[y * self.width + x]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.iter().sum()
    }

    pub fn to_flow_field(&self) -> FlowField {
        FlowField::from_fn(self.width, self.height, |x, y| {
            let f = self.flow_at(x, y);
            (f[0], f[1])
        })
    }

    /// Field holding the given flow, with costs evaluated for `img1 -> img2`.
    pub fn from_flow(img1: &Image, img2: &Image, flow: &FlowField, params: &MatchingParams) -> Result<CostField> {
        check_pair(img1, img2)?;
        if flow.dims() != img1.dims() {
            return Err(Error::DimensionMismatch {
                expected: img1.dims(),
                found: flow.dims(),
            });
        }
        let model = CostModel::new(img1, img2, params);
        let (w, h) = flow.dims();
        let vectors = (0..w * h).map(|i| [flow.u()[i], flow.v()[i]]).collect();
        Ok(CostField::evaluate(w, h, vectors, &model))
    }

    fn evaluate(width: usize, height: usize, flow: Vec<[f32; 2]>, model: &CostModel) -> CostField {
        let cost = flow
            .par_iter()
            .enumerate()
            .map(|(i, f)| model.cost(i % width, i / width, f[0], f[1]))
            .collect();
        CostField {
            width,
            height,
            flow,
            cost,
        }
    }
}

fn check_pair(img1: &Image, img2: &Image) -> Result<()> {
    if img1.dims() != img2.dims() {
        return Err(Error::DimensionMismatch {
            expected: img1.dims(),
            found: img2.dims(),
        });
    }
    if img1.channels() != img2.channels() {
        return Err(Error::invalid("frames have different channel counts"));
    }
    Ok(())
}

/// kD-tree initialization at the coarsest level.
pub fn init_coarsest(img1: &Image, img2: &Image, params: &MatchingParams) -> Result<CostField> {
    check_pair(img1, img2)?;
    params.validate()?;
    let model = CostModel::new(img1, img2, params);
    Ok(init_with_model(img1, img2, params, &model))
}

fn init_with_model(img1: &Image, img2: &Image, params: &MatchingParams, model: &CostModel) -> CostField {
    let (w, h) = img1.dims();
    let lum1 = img1.luminance();
    let lum2 = img2.luminance();
    let targets: Vec<WhDescriptor> = (0..w * h)
        .into_par_iter()
        .map(|i| wh_at(&lum2, (i % w) as isize, (i / w) as isize))
        .collect();
    let tree = KdTree::new(targets.iter().flat_map(|d| d.0).collect(), WH_LEN);
    let flow = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let query = wh_at(&lum1, x as isize, y as isize);
            let (j, _) = tree
                .nearest(&query.0, params.kd_leaf_budget)
                .expect("tree is non-empty");
            [(j % w) as f32 - x as f32, (j / w) as f32 - y as f32]
        })
        .collect();
    CostField::evaluate(w, h, flow, model)
}

/// Which pass just finished, reported to propagation observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Sweep { iteration: usize, direction: usize },
    RandomSearch { iteration: usize, direction: usize },
}

/// Runs `params.iterations` rounds of sweeps and random searches.
pub fn propagate_scale(img1: &Image, img2: &Image, init: &CostField, params: &MatchingParams) -> Result<CostField> {
    propagate_scale_observed(img1, img2, init, params, |_, _| {})
}

/// As [`propagate_scale`], calling `observer` after every sweep and every
/// random-search pass.
pub fn propagate_scale_observed(
    img1: &Image,
    img2: &Image,
    init: &CostField,
    params: &MatchingParams,
    observer: impl FnMut(Pass, &CostField),
) -> Result<CostField> {
    check_pair(img1, img2)?;
    params.validate()?;
    if (init.width, init.height) != img1.dims() {
        return Err(Error::DimensionMismatch {
            expected: img1.dims(),
            found: (init.width, init.height),
        });
    }
    let model = CostModel::new(img1, img2, params);
    let mut field = init.clone();
    propagate(&mut field, &model, params, 0, observer);
    Ok(field)
}

// Sweep order: TL->BR, BR->TL, TR->BL, BL->TR.
// (reverse rows, reverse columns, causal neighbor offsets)
type Sweep = (bool, bool, [(isize, isize); 2]);

const SWEEPS: [Sweep; 4] = [
    (false, false, [(-1, 0), (0, -1)]),
    (true, true, [(1, 0), (0, 1)]),
    (false, true, [(1, 0), (0, -1)]),
    (true, false, [(-1, 0), (0, 1)]),
];

fn propagate(
    field: &mut CostField,
    model: &CostModel,
    params: &MatchingParams,
    level: u64,
    mut observer: impl FnMut(Pass, &CostField),
) {
    let first_search = SWEEPS.len() - params.random_searches_per_iteration;
    for iteration in 0..params.iterations {
        for (direction, sweep_def) in SWEEPS.iter().enumerate() {
            sweep(field, model, *sweep_def);
            observer(Pass::Sweep { iteration, direction }, field);
            if direction >= first_search {
                let ids = [level, iteration as u64, direction as u64];
                random_search(field, model, params, &ids);
                observer(Pass::RandomSearch { iteration, direction }, field);
            }
        }
    }
}

fn sweep(field: &mut CostField, model: &CostModel, (rev_rows, rev_cols, neighbors): Sweep) {
    let (w, h) = (field.width as isize, field.height as isize);
    for ry in 0..h {
        let y = if rev_rows { h - 1 - ry } else { ry };
        for rx in 0..w {
            let x = if rev_cols { w - 1 - rx } else { rx };
            let i = (y * w + x) as usize;
            for &(dx, dy) in &neighbors {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let candidate = field.flow[(ny * w + nx) as usize];
                if candidate == field.flow[i] {
                    continue;
                }
                let c = model.cost(x as usize, y as usize, candidate[0], candidate[1]);
                if c < field.cost[i] {
                    field.flow[i] = candidate;
                    field.cost[i] = c;
                }
            }
        }
    }
}

fn random_search(field: &mut CostField, model: &CostModel, params: &MatchingParams, ids: &[u64]) {
    let w = field.width;
    let r = params.random_search_radius;
    field
        .flow
        .par_chunks_mut(w)
        .zip(field.cost.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (flow_row, cost_row))| {
            let mut stream_ids = ids.to_vec();
            stream_ids.push(y as u64);
            let mut rng = rng::stream(params.seed, &stream_ids);
            for x in 0..w {
                let f = flow_row[x];
                let du: f64 = rng.random_range(-r..=r);
                let dv: f64 = rng.random_range(-r..=r);
                let candidate = [(f[0] as f64 + du) as f32, (f[1] as f64 + dv) as f32];
                if candidate == f {
                    continue;
                }
                let c = model.cost(x, y, candidate[0], candidate[1]);
                if c < cost_row[x] {
                    flow_row[x] = candidate;
                    cost_row[x] = c;
                }
            }
        });
}

/// Bilinearly resamples a flow raster to `fine_w x fine_h` (pixel-center
/// aligned) and multiplies the vectors by `scale_ratio`.
pub fn upscale_vectors(coarse: &FlowField, fine_w: usize, fine_h: usize, scale_ratio: f64) -> FlowField {
    note_resample();
    let (cw, ch) = coarse.dims();
    let sx = cw as f64 / fine_w as f64;
    let sy = ch as f64 / fine_h as f64;
    FlowField::from_fn(fine_w, fine_h, |x, y| {
        if cw == fine_w && ch == fine_h {
            let (u, v) = coarse.get(x, y);
            return ((u as f64 * scale_ratio) as f32, (v as f64 * scale_ratio) as f32);
        }
        let xc = (x as f64 + 0.5) * sx - 0.5;
        let yc = (y as f64 + 0.5) * sy - 0.5;
        let (u, v) = coarse.sample_clamped(xc, yc);
        ((u * scale_ratio) as f32, (v * scale_ratio) as f32)
    })
}

/// Carries a coarse cost field to the resolution of `img1`, recomputing costs.
pub fn upscale_flow(
    coarse: &CostField,
    img1: &Image,
    img2: &Image,
    scale_ratio: f64,
    params: &MatchingParams,
) -> Result<CostField> {
    check_pair(img1, img2)?;
    if !(scale_ratio >= 1.0) {
        return Err(Error::invalid("upscale ratio must be at least 1"));
    }
    let model = CostModel::new(img1, img2, params);
    Ok(upscale_with_model(
        coarse,
        img1.width(),
        img1.height(),
        scale_ratio,
        &model,
    ))
}

fn upscale_with_model(coarse: &CostField, w: usize, h: usize, ratio: f64, model: &CostModel) -> CostField {
    let fine = upscale_vectors(&coarse.to_flow_field(), w, h, ratio);
    let vectors = (0..w * h).map(|i| [fine.u()[i], fine.v()[i]]).collect();
    CostField::evaluate(w, h, vectors, model)
}

/// Full coarse-to-fine matching; returns the level-0 cost field.
pub fn match_full_costs(img1: &Image, img2: &Image, params: &MatchingParams) -> Result<CostField> {
    check_pair(img1, img2)?;
    params.validate()?;
    let pyr1 = build_pyramid(img1, &params.pyramid)?;
    let pyr2 = build_pyramid(img2, &params.pyramid)?;
    let coarsest = pyr1.len() - 1;
    let mut field: Option<CostField> = None;
    for level in (0..=coarsest).rev() {
        let (l1, l2) = (&pyr1.levels[level], &pyr2.levels[level]);
        let model = CostModel::new(l1, l2, params);
        let mut current = match field.take() {
            None => init_with_model(l1, l2, params, &model),
            Some(coarse) => {
                let ratio = pyr1.scale_factors[level] / pyr1.scale_factors[level + 1];
                upscale_with_model(&coarse, l1.width(), l1.height(), ratio, &model)
            }
        };
        propagate(&mut current, &model, params, level as u64, |_, _| {});
        field = Some(current);
    }
    Ok(field.expect("pyramid has at least one level"))
}

/// Dense forward flow from `img1` to `img2`, all pixels valid.
pub fn match_full(img1: &Image, img2: &Image, params: &MatchingParams) -> Result<FlowField> {
    Ok(match_full_costs(img1, img2, params)?.to_flow_field())
}
