use rand::seq::index::sample;
use rayon::prelude::*;

use crate::filter::{Match, MatchSet};
use crate::rng;
use crate::superpixels::SuperpixelSegmentation;

use super::affine::{fit_affine, fit_affine_unweighted, AffineModel};
use super::support::Support;
use super::InterpParams;

/// A superpixel's model with its inliers among its support.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate {
    pub model: AffineModel,
    /// Match indices, ascending.
    pub inliers: Vec<usize>,
    /// Set when no hypothesis reached three inliers and the model is a
    /// plain fit over the whole support.
    pub low_confidence: bool,
}

impl ModelEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.len()
    }
}

/// Gaussian weights of support distances, relative to the closest match so
/// that distant neighborhoods do not underflow.
pub fn support_weights(support: &Support, sigma: f64) -> Vec<f64> {
    let d0 = support.first().map_or(0.0, |s| s.1);
    support
        .iter()
        .map(|&(_, d)| (-(d * d - d0 * d0) / (2.0 * sigma * sigma)).exp().max(1e-12))
        .collect()
}

fn inliers_of(model: &AffineModel, support: &Support, matches: &[Match], threshold: f64) -> Vec<usize> {
    let mut out: Vec<usize> = support
        .iter()
        .filter(|&&(j, _)| model.residual(&matches[j]) < threshold)
        .map(|&(j, _)| j)
        .collect();
    out.sort_unstable();
    out
}

/// Least-squares refit on `inliers`, kept only if it loses no inliers.
fn refine(
    estimate: ModelEstimate,
    support: &Support,
    weights: &[f64],
    matches: &[Match],
    threshold: f64,
) -> ModelEstimate {
    let (pts, w): (Vec<Match>, Vec<f64>) = support
        .iter()
        .zip(weights)
        .filter(|((j, _), _)| estimate.inliers.binary_search(j).is_ok())
        .map(|(&(j, _), &w)| (matches[j], w))
        .unzip();
    match fit_affine(&pts, &w) {
        Ok(model) if model.is_acceptable() => {
            let inliers = inliers_of(&model, support, matches, threshold);
            if inliers.len() >= estimate.inlier_count() {
                ModelEstimate {
                    model,
                    inliers,
                    low_confidence: false,
                }
            } else {
                estimate
            }
        }
        _ => estimate,
    }
}

fn translation_fallback(support: &Support, weights: &[f64], matches: &[Match]) -> AffineModel {
    let total: f64 = weights.iter().sum();
    let (mut u, mut v) = (0.0, 0.0);
    for (&(j, _), &w) in support.iter().zip(weights) {
        u += w * matches[j].u as f64;
        v += w * matches[j].v as f64;
    }
    AffineModel::translation(u / total, v / total)
}

/// Randomized consensus over minimal three-match samples.
///
/// Hypotheses are scored by inlier count (residual below the threshold);
/// the first best hypothesis is refit on its inliers. Without any
/// three-inlier hypothesis the whole support is fit instead, or its
/// weighted mean translation if that fit is degenerate.
pub fn robust_model(
    superpixel: usize,
    support: &Support,
    matches: &MatchSet,
    params: &InterpParams,
    weight_sigma: f64,
) -> ModelEstimate {
    let all = &matches.matches;
    let n = support.len();
    let weights = support_weights(support, weight_sigma);
    let threshold = params.inlier_threshold;
    let mut best: Option<ModelEstimate> = None;
    let mut consider = |idx: &[usize]| {
        let pts: Vec<Match> = idx.iter().map(|&k| all[support[k].0]).collect();
        if let Ok(model) = fit_affine_unweighted(&pts) {
            if model.is_acceptable() {
                let inliers = inliers_of(&model, support, all, threshold);
                if best.as_ref().is_none_or(|b| inliers.len() > b.inlier_count()) {
                    best = Some(ModelEstimate {
                        model,
                        inliers,
                        low_confidence: false,
                    });
                }
            }
        }
    };
    if n == 3 {
        consider(&[0, 1, 2]);
    } else if n > 3 {
        let mut rng = rng::stream(params.seed, &[superpixel as u64]);
        for _ in 0..params.ransac_iterations {
            let idx = sample(&mut rng, n, 3).into_vec();
            consider(&idx);
        }
    }
    match best {
        Some(b) if b.inlier_count() >= 3 => refine(b, support, &weights, all, threshold),
        _ => {
            let pts: Vec<Match> = support.iter().map(|&(j, _)| all[j]).collect();
            let model = match fit_affine(&pts, &weights) {
                Ok(m) if m.is_acceptable() => m,
                _ => translation_fallback(support, &weights, all),
            };
            ModelEstimate {
                model,
                inliers: inliers_of(&model, support, all, threshold),
                low_confidence: true,
            }
        }
    }
}

/// Jacobi rounds of model propagation over the superpixel adjacency.
///
/// Each superpixel scores every neighbor's model of the previous round on
/// its own support and adopts the one with the most inliers if that beats
/// its current count; ties keep the incumbent. An adopted model is refit on
/// its inliers. Inlier counts never decrease.
pub fn propagate_models(
    seg: &SuperpixelSegmentation,
    estimates: &[ModelEstimate],
    supports: &[Support],
    matches: &MatchSet,
    params: &InterpParams,
    weight_sigma: f64,
) -> Vec<ModelEstimate> {
    let all = &matches.matches;
    let threshold = params.inlier_threshold;
    let mut current = estimates.to_vec();
    for _ in 0..params.propagation_rounds {
        let prev = current;
        current = (0..prev.len())
            .into_par_iter()
            .map(|i| {
                let mut chosen: Option<ModelEstimate> = None;
                let mut best_count = prev[i].inlier_count();
                for &j in &seg.neighbors[i] {
                    let candidate = &prev[j as usize].model;
                    if candidate == &prev[i].model {
                        continue;
                    }
                    let inliers = inliers_of(candidate, &supports[i], all, threshold);
                    if inliers.len() > best_count {
                        best_count = inliers.len();
                        chosen = Some(ModelEstimate {
                            model: *candidate,
                            inliers,
                            low_confidence: false,
                        });
                    }
                }
                match chosen {
                    Some(c) => {
                        let weights = support_weights(&supports[i], weight_sigma);
                        refine(c, &supports[i], &weights, all, threshold)
                    }
                    None => prev[i].clone(),
                }
            })
            .collect();
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn affine_matches(model: &AffineModel, n: usize, outlier_fraction: f64, seed: u64) -> MatchSet {
        let mut rng = rng::stream(seed, &[]);
        let out = (0..n)
            .map(|i| {
                let x = rng.random_range(0..200) as f32;
                let y = rng.random_range(0..150) as f32;
                let (mut u, mut v) = model.flow_at(x as f64, y as f64);
                if (i as f64) < outlier_fraction * n as f64 {
                    // residual well above 10 px
                    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let r: f64 = rng.random_range(12.0..40.0);
                    u += r * a.cos();
                    v += r * a.sin();
                }
                Match {
                    x,
                    y,
                    u: u as f32,
                    v: v as f32,
                    consistency_error: 0.0,
                }
            })
            .collect();
        MatchSet::new(out)
    }

    fn full_support(n: usize) -> Support {
        (0..n).map(|j| (j, 0.0)).collect()
    }

    fn truth() -> AffineModel {
        // flow coefficients exactly representable so samples are consistent
        AffineModel::from_flow_coefficients([[0.0625, -0.03125, 2.5], [0.015625, 0.046875, -1.25]])
    }

    #[test]
    fn clean_support_recovers_model_with_all_inliers() {
        let ms = affine_matches(&truth(), 150, 0.0, 3);
        let est = robust_model(0, &full_support(150), &ms, &InterpParams::default(), 1.0);
        assert!(est.model.max_param_diff(&truth()) < 1e-6, "{:?}", est.model);
        assert_eq!(est.inlier_count(), 150);
        assert!(!est.low_confidence);
    }

    #[test]
    fn thirty_percent_outliers_rejected() {
        let ms = affine_matches(&truth(), 200, 0.3, 11);
        let params = InterpParams {
            ransac_iterations: 500,
            ..InterpParams::default()
        };
        let est = robust_model(0, &full_support(200), &ms, &params, 1.0);
        assert!(est.model.max_param_diff(&truth()) < 1e-3, "{:?}", est.model);
        assert_eq!(est.inlier_count(), 140);
        assert!(est.inliers.iter().all(|&j| j >= 60));
    }

    #[test]
    fn three_matches_fit_exactly() {
        let ms = affine_matches(&truth(), 3, 0.0, 5);
        let est = robust_model(0, &full_support(3), &ms, &InterpParams::default(), 1.0);
        assert_eq!(est.inliers, vec![0, 1, 2]);
        for m in ms.iter() {
            assert!(est.model.residual(m) < 1e-4);
        }
    }

    #[test]
    fn collinear_support_falls_back_to_translation() {
        let ms = MatchSet::new(
            (0..6)
                .map(|i| Match {
                    x: i as f32,
                    y: i as f32,
                    u: 2.0,
                    v: -1.0,
                    consistency_error: 0.0,
                })
                .collect(),
        );
        let est = robust_model(0, &full_support(6), &ms, &InterpParams::default(), 1.0);
        assert!(est.low_confidence);
        assert!(est.model.max_param_diff(&AffineModel::translation(2.0, -1.0)) < 1e-9);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ms = affine_matches(&truth(), 120, 0.4, 8);
        let params = InterpParams::default();
        let a = robust_model(4, &full_support(120), &ms, &params, 1.0);
        let b = robust_model(4, &full_support(120), &ms, &params, 1.0);
        assert_eq!(a, b);
    }
}
