//! SLIC segmentation of a synthetic frame; writes the label image.

use flowfields::pipeline::prepare_frames;
use flowfields::superpixels::segment;
use flowfields::synthetic::{shift_scene, Texture};

fn main() -> flowfields::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "labels.png".into());
    let scene = shift_scene(&Texture::standard(5), 160, 120, 0.0, 0.0);
    let (lab, _) = prepare_frames(&scene.img1, &scene.img1)?;
    for step in [10, 20, 40] {
        let seg = segment(&lab, step)?;
        println!(
            "grid step {step}: {} superpixels, {} adjacent pairs",
            seg.count(),
            seg.adjacency().len()
        );
    }
    segment(&lab, 20)?.save_labels_png(&out)?;
    println!("labels written to {out}");
    Ok(())
}
