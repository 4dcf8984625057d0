//! `.flo` and KITTI PNG round trips and color-wheel rendering.

use flowfields::flowio::{read_flow, visualize, write_flow};
use flowfields::FlowField;

fn main() -> flowfields::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let flow = FlowField::from_fn(64, 48, |x, y| ((x as f32 - 32.0) * 0.25, (y as f32 - 24.0) * 0.25));
    for name in ["radial.flo", "radial.png"] {
        let path = dir.join(name);
        write_flow(&path, &flow)?;
        let back = read_flow(&path)?;
        let err = flow
            .u()
            .iter()
            .zip(back.u())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!(
            "{}: {} bytes, max u error {err}",
            path.display(),
            std::fs::metadata(&path)?.len()
        );
    }
    let viz = dir.join("radial_viz.png");
    visualize(&flow, None).save_png8(&viz)?;
    println!("visualization written to {}", viz.display());
    Ok(())
}
