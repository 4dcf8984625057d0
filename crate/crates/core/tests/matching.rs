mod common;

use flowfields::matcher::{
    init_coarsest, match_full, match_full_costs, matching_cost, propagate_scale, upscale_flow, upscale_vectors,
    CostField, DescriptorKind, MatchingParams,
};
use flowfields::raster::{ColorSpace, FlowField, Image};
use flowfields::synthetic::{shift_scene, Texture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{interior, lab};

fn noise(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(width, height, ColorSpace::Gray, |_, _, _| rng.random_range(0.0..1.0))
}

fn exact() -> MatchingParams {
    MatchingParams {
        kd_leaf_budget: None,
        ..MatchingParams::census()
    }
}

#[test]
fn kd_initialization_finds_self_matches() {
    let img = noise(48, 40, 1);
    let field = init_coarsest(&img, &img, &MatchingParams::census()).unwrap();
    let zero = interior(48, 40, 0)
        .filter(|&(x, y)| field.flow_at(x, y) == [0.0, 0.0])
        .count();
    assert!(zero as f64 >= 0.95 * (48 * 40) as f64, "{zero} self-matches");
}

#[test]
fn kd_initialization_finds_wrapped_shift() {
    let (w, h) = (48, 40);
    let a = noise(w, h, 2);
    let b = Image::from_fn(w, h, ColorSpace::Gray, |x, y, _| a.at((x + w - 4) % w, y, 0));
    let field = init_coarsest(&a, &b, &exact()).unwrap();
    let mut votes = std::collections::HashMap::new();
    for (x, y) in interior(w, h, 0) {
        let f = field.flow_at(x, y);
        *votes.entry((f[0] as i32, f[1] as i32)).or_insert(0) += 1;
    }
    let mode = votes.iter().max_by_key(|(_, &n)| n).unwrap().0;
    assert_eq!(*mode, (4, 0));
}

#[test]
fn constant_images_cost_nothing() {
    let img = Image::constant(40, 36, ColorSpace::CieLab, 30.0);
    for params in [MatchingParams::census(), MatchingParams::sift()] {
        let field = init_coarsest(&img, &img, &params).unwrap();
        assert!(field.costs().iter().all(|&c| c == 0.0));
    }
}

#[test]
fn optimal_initialization_is_a_fixed_point() {
    let scene = shift_scene(&Texture::standard(5), 48, 40, 0.0, 0.0);
    let (a, _) = lab(&scene);
    let params = MatchingParams::census();
    let init = CostField::from_flow(&a, &a, &FlowField::zeros(48, 40), &params).unwrap();
    assert!(init.costs().iter().all(|&c| c == 0.0));
    assert_eq!(propagate_scale(&a, &a, &init, &params).unwrap(), init);
}

#[test]
fn single_seed_propagates_over_the_frame() {
    let (w, h) = (64, 48);
    let scene = shift_scene(&Texture::standard(6), w, h, 3.0, 0.0);
    let (a, b) = lab(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut init = FlowField::from_fn(w, h, |_, _| {
        (rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0))
    });
    init.set(w / 2, h / 2, 3.0, 0.0);
    let params = MatchingParams::census();
    let field = propagate_scale(&a, &b, &CostField::from_flow(&a, &b, &init, &params).unwrap(), &params).unwrap();
    let pixels: Vec<_> = interior(w, h, 4).filter(|&(x, _)| x + 3 < w - 4).collect();
    let good = pixels
        .iter()
        .filter(|&&(x, y)| {
            let f = field.flow_at(x, y);
            (f[0] as f64 - 3.0).hypot(f[1] as f64) <= 1.0
        })
        .count();
    assert!(good as f64 >= 0.9 * pixels.len() as f64, "{good} of {}", pixels.len());
}

#[test]
fn upscaling_examples() {
    let constant = FlowField::constant(10, 8, 2.0, 0.0);
    let up = upscale_vectors(&constant, 20, 16, 2.0);
    assert!(up.u().iter().all(|&u| u == 4.0) && up.v().iter().all(|&v| v == 0.0));

    let ramp = FlowField::from_fn(12, 10, |x, y| (0.5 * x as f32 - 1.0, 0.25 * y as f32));
    assert_eq!(upscale_vectors(&ramp, 12, 10, 1.0), ramp);
    let up = upscale_vectors(&ramp, 24, 20, 2.0);
    // fine pixel x sits at coarse coordinate (x + 0.5) / 2 - 0.5
    for (x, y) in interior(24, 20, 2) {
        let (xc, yc) = ((x as f64 + 0.5) / 2.0 - 0.5, (y as f64 + 0.5) / 2.0 - 0.5);
        let (u, v) = up.get(x, y);
        assert!((u as f64 - 2.0 * (0.5 * xc - 1.0)).abs() < 1e-4);
        assert!((v as f64 - 2.0 * 0.25 * yc).abs() < 1e-4);
    }

    let scene = shift_scene(&Texture::standard(8), 40, 32, 2.0, 0.0);
    let (a, b) = lab(&scene);
    let params = MatchingParams::census();
    let coarse = CostField::from_flow(&a, &b, &FlowField::constant(40, 32, 1.0, 0.0), &params).unwrap();
    let same = upscale_flow(&coarse, &a, &b, 2.0, &params).unwrap();
    assert_eq!(same.flow_at(10, 10), [2.0, 0.0]);
    assert!(same.cost_at(10, 10) < coarse.cost_at(10, 10));
    assert!(upscale_flow(&coarse, &a, &b, 0.5, &params).is_err());
}

#[test]
fn identical_frames_give_near_zero_flow() {
    let scene = shift_scene(&Texture::standard(9), 96, 72, 0.0, 0.0);
    let (a, _) = lab(&scene);
    for params in [MatchingParams::census(), MatchingParams::sift()] {
        let flow = match_full(&a, &a, &params).unwrap();
        let mean = flow
            .u()
            .iter()
            .zip(flow.v())
            .map(|(&u, &v)| (u as f64).hypot(v as f64))
            .sum::<f64>()
            / (96.0 * 72.0);
        assert!(mean < 0.5, "{:?}: mean |flow| {mean}", params.descriptor);
    }
}

#[test]
fn integer_shift_is_recovered() {
    let (w, h) = (128, 96);
    let scene = shift_scene(&Texture::standard(11), w, h, 5.0, 3.0);
    let (a, b) = lab(&scene);
    for params in [MatchingParams::census(), MatchingParams::sift()] {
        let flow = match_full(&a, &b, &params).unwrap();
        let crop: Vec<_> = interior(w, h, 12).collect();
        let good = crop
            .iter()
            .filter(|&&(x, y)| {
                let (u, v) = flow.get(x, y);
                (u as f64 - 5.0).hypot(v as f64 - 3.0) <= 1.0
            })
            .count();
        assert!(
            good as f64 >= 0.95 * crop.len() as f64,
            "{:?}: {good} of {}",
            params.descriptor,
            crop.len()
        );
    }
}

#[test]
fn matching_is_reproducible_for_a_seed() {
    let scene = shift_scene(&Texture::standard(12), 64, 48, 2.0, -1.0);
    let (a, b) = lab(&scene);
    let params = MatchingParams {
        seed: 99,
        ..MatchingParams::census()
    };
    assert_eq!(
        match_full(&a, &b, &params).unwrap(),
        match_full(&a, &b, &params).unwrap()
    );
}

#[test]
fn stored_costs_match_recomputation() {
    let scene = shift_scene(&Texture::standard(13), 64, 48, 2.5, 1.0);
    let (a, b) = lab(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for params in [MatchingParams::census(), MatchingParams::sift()] {
        let field = match_full_costs(&a, &b, &params).unwrap();
        let tolerance = if params.descriptor == DescriptorKind::Sift {
            1e-5
        } else {
            0.0
        };
        for _ in 0..60 {
            let (x, y) = (rng.random_range(0..64), rng.random_range(0..48));
            let f = field.flow_at(x, y);
            let fresh = matching_cost(&a, &b, x, y, f[0], f[1], &params);
            let stored = field.cost_at(x, y);
            assert!(
                (fresh - stored).abs() <= tolerance,
                "{:?} at {x},{y}: {stored} vs {fresh}",
                params.descriptor
            );
        }
    }
}

#[test]
fn backward_field_negates_forward_on_rigid_shift() {
    let (w, h) = (96, 72);
    let scene = shift_scene(&Texture::standard(14), w, h, 4.0, -2.0);
    let (a, b) = lab(&scene);
    let params = MatchingParams::census();
    let fwd = match_full(&a, &b, &params).unwrap();
    let bwd = match_full(&b, &a, &params).unwrap();
    let mut residuals: Vec<f64> = interior(w, h, 8)
        .map(|(x, y)| {
            let (u, v) = fwd.get(x, y);
            let (bu, bv) = bwd.sample_clamped(x as f64 + u as f64, y as f64 + v as f64);
            (u as f64 + bu).hypot(v as f64 + bv)
        })
        .collect();
    residuals.sort_by(f64::total_cmp);
    assert!(residuals[residuals.len() / 2] < 1.0);
}
