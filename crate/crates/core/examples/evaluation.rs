//! Endpoint error and Fl outlier rate, per frame and per directory.

use flowfields::eval::{epe, fl_outlier_rate, run_eval};
use flowfields::flowio::write_flow;
use flowfields::FlowField;

fn main() -> flowfields::Result<()> {
    let truth = FlowField::from_fn(40, 30, |x, _| (2.0 + 0.1 * x as f32, 0.0));
    let estimate = FlowField::from_fn(40, 30, |x, y| {
        let (u, v) = truth.get(x, y);
        if x < 4 {
            (u + 6.0, v)
        } else {
            (u + 0.2, v)
        }
    });
    println!(
        "EPE {:.3} px, Fl {:.2}%",
        epe(&estimate, &truth, None)?,
        fl_outlier_rate(&estimate, &truth, None)?
    );

    let root = tempfile_dir()?;
    let (est, gt) = (root.join("est"), root.join("gt"));
    std::fs::create_dir_all(&est)?;
    std::fs::create_dir_all(&gt)?;
    write_flow(gt.join("000.flo"), &truth)?;
    write_flow(est.join("000.flo"), &estimate)?;
    write_flow(gt.join("001.flo"), &truth)?;
    write_flow(est.join("001.png"), &truth)?;
    print!("{}", run_eval(&est, &gt, None, None)?.to_table());
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("flowfields-eval-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
