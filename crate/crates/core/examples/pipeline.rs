//! Full pipeline on a synthetic two-motion pair with stage dumps.
//!
//! `cargo run --release --example pipeline -- [kitti|sintel] [DIR]`

use flowfields::eval::{epe, fl_outlier_rate};
use flowfields::pipeline::{run_pipeline, PipelineConfig, Preset};
use flowfields::synthetic::benchmark_set;

fn main() -> flowfields::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().as_deref().unwrap_or("kitti").parse()?;
    let dir = args.next().unwrap_or_else(|| "pipeline_stages".into());
    let (name, scene) = benchmark_set(160, 120).swap_remove(5);
    let out = run_pipeline(&PipelineConfig::preset(preset), &scene.img1, &scene.img2, None)?;
    out.dump(&dir)?;
    for (stage, t) in &out.timings {
        println!("{stage:>12}: {:.2}s", t.as_secs_f64());
    }
    println!(
        "{name} ({preset}): {} matches, {} superpixels, EPE {:.3} px, Fl {:.2}%; stages in {dir}/",
        out.matches.len(),
        out.segmentation.count(),
        epe(&out.flow, &scene.truth, None)?,
        fl_outlier_rate(&out.flow, &scene.truth, None)?
    );
    Ok(())
}
