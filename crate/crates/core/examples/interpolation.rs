//! Robust edge-aware interpolation of sparse matches with gross outliers.

use flowfields::edges::EdgeMap;
use flowfields::filter::{Match, MatchSet};
use flowfields::interpolator::{interpolate, AffineModel, InterpParams};
use flowfields::pipeline::prepare_frames;
use flowfields::superpixels::segment;
use flowfields::synthetic::{affine_scene, Texture};

fn main() -> flowfields::Result<()> {
    let (w, h) = (160, 120);
    let model = AffineModel::from_flow_coefficients([[0.02, -0.01, 3.0], [0.01, 0.015, -1.0]]);
    let scene = affine_scene(&Texture::standard(6), w, h, &model);
    let (lab, _) = prepare_frames(&scene.img1, &scene.img2)?;
    let mut matches = Vec::new();
    for (k, (x, y)) in (0..h)
        .step_by(4)
        .flat_map(|y| (0..w).step_by(4).map(move |x| (x, y)))
        .enumerate()
    {
        let (u, v) = model.flow_at(x as f64, y as f64);
        // every fourth match is off by 12 px
        let bad = if k % 4 == 0 { 12.0 } else { 0.0 };
        matches.push(Match {
            x: x as f32,
            y: y as f32,
            u: (u + bad) as f32,
            v: v as f32,
            consistency_error: 0.0,
        });
    }
    let matches = MatchSet::new(matches);
    let seg = segment(&lab, 20)?;
    let result = interpolate(&matches, &seg, &EdgeMap::zeros(w, h), &InterpParams::default())?;
    let worst = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let (u, v) = result.flow.get(x, y);
            let (tu, tv) = model.flow_at(x as f64, y as f64);
            (u as f64 - tu).hypot(v as f64 - tv)
        })
        .fold(0.0, f64::max);
    println!(
        "{} matches, {} survive, {} superpixels",
        matches.len(),
        result.surviving.len(),
        seg.count()
    );
    println!("largest dense error {worst:.2e} px");
    Ok(())
}
