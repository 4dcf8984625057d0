//! Forward-backward consistency with two backward fields, small-region
//! removal and sparsification to one match per 3x3 block.

use flowfields::filter::{region_filter, sparsify, two_pass_filter, FilterParams};
use flowfields::matcher::{match_full, MatchingParams};
use flowfields::pipeline::prepare_frames;
use flowfields::synthetic::{shift_scene, Texture};

fn main() -> flowfields::Result<()> {
    let scene = shift_scene(&Texture::standard(2), 128, 96, 3.0, 1.0);
    let (a, b) = prepare_frames(&scene.img1, &scene.img2)?;
    let params = MatchingParams::census();
    let fp = FilterParams::default();
    let forward = match_full(&a, &b, &params)?;
    let (checked, errors) = two_pass_filter(&a, &b, &forward, &params, &params.alternate(), &fp)?;
    let cleaned = region_filter(&checked, &fp);
    let matches = sparsify(&cleaned, &errors, &fp);
    println!(
        "{} of {} pixels pass the consistency check",
        checked.valid_count(),
        128 * 96
    );
    println!(
        "{} after region filtering, {} sparse matches",
        cleaned.valid_count(),
        matches.len()
    );
    if let Some(m) = matches.iter().next() {
        println!("first match: ({}, {}) -> ({:.2}, {:.2})", m.x, m.y, m.u, m.v);
    }
    Ok(())
}
