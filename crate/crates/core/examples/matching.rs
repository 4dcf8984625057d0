//! Coarse-to-fine census and SIFT matching on a synthetic shifted pair.

use flowfields::matcher::{match_full_costs, MatchingParams};
use flowfields::pipeline::prepare_frames;
use flowfields::synthetic::{shift_scene, Texture};

fn main() -> flowfields::Result<()> {
    let scene = shift_scene(&Texture::standard(1), 128, 96, 4.0, -2.0);
    let (a, b) = prepare_frames(&scene.img1, &scene.img2)?;
    for params in [MatchingParams::census(), MatchingParams::sift()] {
        let field = match_full_costs(&a, &b, &params)?;
        let flow = field.to_flow_field();
        let close = flow
            .u()
            .iter()
            .zip(flow.v())
            .filter(|(&u, &v)| (u as f64 - 4.0).hypot(v as f64 + 2.0) <= 1.0)
            .count();
        println!(
            "{:?}: {:.1}% of pixels within 1 px of (4, -2), total cost {:.1}",
            params.descriptor,
            100.0 * close as f64 / flow.u().len() as f64,
            field.total_cost()
        );
    }
    Ok(())
}
