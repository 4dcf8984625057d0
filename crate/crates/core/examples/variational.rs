//! Variational refinement of a coarse initialization to sub-pixel accuracy.

use flowfields::pipeline::prepare_frames;
use flowfields::synthetic::{shift_scene, Texture};
use flowfields::variational::{build_mask, energy, refine, VariationalParams};
use flowfields::FlowField;

fn main() -> flowfields::Result<()> {
    let (w, h) = (96, 72);
    let scene = shift_scene(&Texture::standard(7), w, h, 1.5, 0.25);
    let (a, b) = prepare_frames(&scene.img1, &scene.img2)?;
    let init = FlowField::constant(w, h, 1.0, 0.0);
    let mask = build_mask(&init, (w, h));
    for outer in [2, 5] {
        let params = VariationalParams {
            outer_iterations: outer,
            ..Default::default()
        };
        let out = refine(&a, &b, &init, &params)?;
        let (u, v) = out.get(w / 2, h / 2);
        println!(
            "{outer} outer iterations: energy {:.1} -> {:.1}, center flow ({u:.3}, {v:.3})",
            energy(&a, &b, &init, &params, &mask)?,
            energy(&a, &b, &out, &params, &mask)?
        );
    }
    println!("{} of {} pixels optimized", mask.active_count(), w * h);
    Ok(())
}
