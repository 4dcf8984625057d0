//! Sparse-to-dense interpolation with one affine model per superpixel.
//!
//! Every superpixel draws its support from the matches nearest to it under
//! an edge-aware distance on the superpixel graph, estimates a model by
//! randomized consensus, and may then adopt better models from its
//! neighbors. Matches that are inliers of their own superpixel's model keep
//! their flow; every other pixel takes its superpixel's model.

mod affine;
mod consensus;
mod support;

use rayon::prelude::*;

use crate::edges::{EdgeMap, EUCLIDEAN_OFFSET};
use crate::error::{Error, Result};
use crate::filter::MatchSet;
use crate::raster::FlowField;
use crate::superpixels::SuperpixelSegmentation;

pub use affine::{fit_affine, fit_affine_unweighted, AffineModel, MAX_CONDITION, MIN_DETERMINANT};
pub use consensus::{propagate_models, robust_model, support_weights, ModelEstimate};
pub use support::{assign_support, SuperpixelGraph, Support};

#[derive(Debug, Clone, PartialEq)]
pub struct InterpParams {
    /// Support matches per superpixel.
    pub neighborhood_size: usize,
    /// Flow residual (px) below which a match is an inlier.
    pub inlier_threshold: f64,
    pub ransac_iterations: usize,
    pub propagation_rounds: usize,
    /// Refit weight sigma as a fraction of the image-diagonal distance.
    pub weight_sigma_factor: f64,
    /// Per-pixel distance cost added to edge strength.
    pub euclidean_offset: f64,
    pub seed: u64,
}

impl Default for InterpParams {
    fn default() -> Self {
        InterpParams {
            neighborhood_size: 150,
            inlier_threshold: 1.0,
            ransac_iterations: 150,
            propagation_rounds: 8,
            weight_sigma_factor: 0.05,
            euclidean_offset: EUCLIDEAN_OFFSET,
            seed: 0,
        }
    }
}

impl InterpParams {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood_size < 3 {
            return Err(Error::invalid("neighborhood size must be at least 3"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::invalid("inlier threshold must be positive"));
        }
        if !(self.weight_sigma_factor > 0.0) {
            return Err(Error::invalid("weight sigma factor must be positive"));
        }
        if !(self.euclidean_offset > 0.0) {
            return Err(Error::invalid("euclidean offset must be positive"));
        }
        Ok(())
    }

    /// Refit weight sigma in distance units for a `width x height` image.
    pub fn weight_sigma(&self, width: usize, height: usize) -> f64 {
        let diagonal = (width as f64).hypot(height as f64);
        self.weight_sigma_factor * self.euclidean_offset * diagonal
    }
}

/// Dense flow from per-superpixel models; pixels holding a match take its
/// flow verbatim.
pub fn densify(seg: &SuperpixelSegmentation, models: &[AffineModel], matches: &MatchSet) -> Result<FlowField> {
    if models.len() != seg.count() {
        return Err(Error::invalid(format!(
            "{} models for {} superpixels",
            models.len(),
            seg.count()
        )));
    }
    let (w, h) = (seg.width, seg.height);
    let mut u = vec![0.0f32; w * h];
    let mut v = vec![0.0f32; w * h];
    u.par_chunks_mut(w)
        .zip(v.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (ur, vr))| {
            for x in 0..w {
                let (fu, fv) = models[seg.label(x, y) as usize].flow_at(x as f64, y as f64);
                ur[x] = fu as f32;
                vr[x] = fv as f32;
            }
        });
    for m in matches.iter() {
        let (x, y) = (m.x.round(), m.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            let i = y as usize * w + x as usize;
            u[i] = m.u;
            v[i] = m.v;
        }
    }
    FlowField::from_parts(w, h, u, v, vec![true; w * h])
}

/// Everything the interpolation stage produces.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub flow: FlowField,
    pub estimates: Vec<ModelEstimate>,
    pub supports: Vec<Support>,
    /// Matches that are inliers of their own superpixel's final model.
    pub surviving: MatchSet,
}

/// Support assignment, consensus, propagation and densification.
pub fn interpolate(
    matches: &MatchSet,
    seg: &SuperpixelSegmentation,
    edges: &EdgeMap,
    params: &InterpParams,
) -> Result<Interpolation> {
    if matches.len() < 3 {
        return Err(Error::InterpolationImpossible(format!(
            "{} matches, at least 3 required",
            matches.len()
        )));
    }
    let supports = assign_support(matches, seg, edges, params)?;
    let sigma = params.weight_sigma(seg.width, seg.height);
    let initial: Vec<ModelEstimate> = supports
        .par_iter()
        .enumerate()
        .map(|(i, s)| robust_model(i, s, matches, params, sigma))
        .collect();
    let estimates = propagate_models(seg, &initial, &supports, matches, params, sigma);
    let surviving = MatchSet::new(
        matches
            .iter()
            .enumerate()
            .filter(|(j, m)| {
                let l = seg.label(m.x.round() as usize, m.y.round() as usize) as usize;
                estimates[l].inliers.binary_search(j).is_ok()
            })
            .map(|(_, m)| *m)
            .collect(),
    );
    let models: Vec<AffineModel> = estimates.iter().map(|e| e.model).collect();
    let flow = densify(seg, &models, &surviving)?;
    Ok(Interpolation {
        flow,
        estimates,
        supports,
        surviving,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Match;
    use crate::raster::{ColorSpace, Image};
    use crate::superpixels::segment;
    use rand::Rng;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, ColorSpace::CieLab, |x, y, c| {
            let t = (x as f64 * 0.37).sin() * (y as f64 * 0.23).cos() * 10.0;
            if c == 0 {
                50.0 + t
            } else {
                t * 0.5
            }
        })
    }

    fn affine_grid(model: &AffineModel, w: usize, h: usize, step: usize) -> MatchSet {
        let mut out = Vec::new();
        for y in (1..h).step_by(step) {
            for x in (1..w).step_by(step) {
                let (u, v) = model.flow_at(x as f64, y as f64);
                out.push(Match {
                    x: x as f32,
                    y: y as f32,
                    u: u as f32,
                    v: v as f32,
                    consistency_error: 0.0,
                });
            }
        }
        MatchSet::new(out)
    }

    #[test]
    fn constant_models_give_constant_flow() {
        let seg = segment(&Image::constant(40, 30, ColorSpace::CieLab, 10.0), 10).unwrap();
        let models = vec![AffineModel::translation(2.0, 0.0); seg.count()];
        let flow = densify(&seg, &models, &MatchSet::default()).unwrap();
        assert_eq!(flow.valid_count(), 40 * 30);
        assert!(flow.u().iter().all(|&u| u == 2.0) && flow.v().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn densify_keeps_match_flow_verbatim() {
        let seg = segment(&Image::constant(40, 30, ColorSpace::CieLab, 10.0), 10).unwrap();
        let models = vec![AffineModel::IDENTITY; seg.count()];
        let ms = MatchSet::new(vec![Match {
            x: 7.0,
            y: 9.0,
            u: 0.123,
            v: -4.5,
            consistency_error: 0.0,
        }]);
        let flow = densify(&seg, &models, &ms).unwrap();
        assert_eq!(flow.get(7, 9), (0.123, -4.5));
        assert_eq!(flow.get(8, 9), (0.0, 0.0));
    }

    #[test]
    fn affine_scene_is_reproduced() {
        let (w, h) = (120, 90);
        let img = textured(w, h);
        let seg = segment(&img, 15).unwrap();
        let truth = AffineModel::from_flow_coefficients([[0.02, -0.01, 3.0], [0.015, 0.01, -2.0]]);
        let ms = affine_grid(&truth, w, h, 3);
        let out = interpolate(&ms, &seg, &EdgeMap::zeros(w, h), &InterpParams::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (u, v) = out.flow.get(x, y);
                let (tu, tv) = truth.flow_at(x as f64, y as f64);
                assert!((u as f64 - tu).abs() < 1e-3 && (v as f64 - tv).abs() < 1e-3);
            }
        }
        assert_eq!(out.surviving.len(), ms.len());
    }

    #[test]
    fn propagation_spreads_the_true_model() {
        let (w, h) = (120, 90);
        let img = textured(w, h);
        let seg = segment(&img, 15).unwrap();
        let truth = AffineModel::from_flow_coefficients([[0.02, -0.01, 3.0], [0.015, 0.01, -2.0]]);
        let ms = affine_grid(&truth, w, h, 3);
        let params = InterpParams {
            propagation_rounds: 1,
            ..InterpParams::default()
        };
        let supports = assign_support(&ms, &seg, &EdgeMap::zeros(w, h), &params).unwrap();
        let sigma = params.weight_sigma(w, h);
        let mut rng = crate::rng::stream(1, &[]);
        let mut est: Vec<ModelEstimate> = (0..seg.count())
            .map(|i| {
                let model = if i == 0 {
                    truth
                } else {
                    AffineModel::translation(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0))
                };
                let inliers = supports[i]
                    .iter()
                    .filter(|&&(j, _)| model.residual(&ms.matches[j]) < 1.0)
                    .map(|&(j, _)| j)
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                ModelEstimate {
                    model,
                    inliers,
                    low_confidence: false,
                }
            })
            .collect();
        // rounds up to the graph diameter, checking monotone inlier counts
        for _ in 0..seg.count() {
            let next = propagate_models(&seg, &est, &supports, &ms, &params, sigma);
            for (a, b) in est.iter().zip(&next) {
                assert!(b.inlier_count() >= a.inlier_count());
            }
            if next == est {
                break;
            }
            est = next;
        }
        let good = est.iter().filter(|e| e.model.max_param_diff(&truth) < 1e-3).count();
        assert!(good as f64 >= 0.95 * seg.count() as f64, "{good}/{}", seg.count());
        // fixed point
        let again = propagate_models(&seg, &est, &supports, &ms, &params, sigma);
        assert_eq!(again, est);
    }

    #[test]
    fn too_few_matches() {
        let seg = segment(&Image::constant(40, 30, ColorSpace::CieLab, 10.0), 10).unwrap();
        let ms = affine_grid(&AffineModel::IDENTITY, 4, 2, 2);
        assert_eq!(ms.len(), 2);
        assert!(matches!(
            interpolate(&ms, &seg, &EdgeMap::zeros(40, 30), &InterpParams::default()),
            Err(Error::InterpolationImpossible(_))
        ));
    }
}
