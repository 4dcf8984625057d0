//! Gradient edge map and edge-aware geodesic distances from one pixel.

use flowfields::edges::{detect_edges, geodesic_distances, GeodesicParams};
use flowfields::interpolator::AffineModel;
use flowfields::pipeline::prepare_frames;
use flowfields::synthetic::{two_motion_scene, Rect, Texture};

fn main() -> flowfields::Result<()> {
    let object = Rect {
        x0: 40.0,
        y0: 30.0,
        x1: 90.0,
        y1: 70.0,
    };
    let fg = Texture::standard(4).with_base([0.8, 0.3, 0.2]);
    let still = AffineModel::translation(0.0, 0.0);
    let scene = two_motion_scene(&Texture::standard(3), &fg, object, 128, 96, &still, &still);
    let (lab, _) = prepare_frames(&scene.img1, &scene.img1)?;
    let edges = detect_edges(&lab);
    let d = geodesic_distances(&edges, (64, 50), &GeodesicParams::default(), f64::INFINITY)?;
    // equal Euclidean distance, but the second point lies across the object outline
    for (x, y) in [(64, 35), (64, 20)] {
        println!(
            "distance (64, 50) -> ({x}, {y}): {:.4}",
            d.get(x, y).unwrap_or(f64::INFINITY)
        );
    }
    println!(
        "strongest edge: {:.3}",
        edges.values().iter().cloned().fold(0.0f32, f32::max)
    );
    Ok(())
}
