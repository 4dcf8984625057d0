//! Endpoint error, Fl outlier rate and directory-level evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flowio::{read_flow, read_mask_png};
use crate::raster::{ColorSpace, FlowField, Image};

/// Endpoint error above which a pixel may count as an Fl outlier.
pub const FL_ABSOLUTE_PX: f64 = 3.0;
/// Fraction of the true magnitude the error must also exceed.
pub const FL_RELATIVE: f64 = 0.05;

fn check_dims(est: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<()> {
    if est.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: est.dims(),
        });
    }
    if let Some(m) = mask {
        if m.len() != gt.u().len() {
            return Err(Error::invalid("region mask size does not match the flow"));
        }
    }
    Ok(())
}

/// Per-pixel `|w_est - w_gt|`; NaN where the ground truth is invalid.
pub fn endpoint_errors(est: &FlowField, gt: &FlowField) -> Result<Vec<f64>> {
    check_dims(est, gt, None)?;
    Ok((0..gt.u().len())
        .map(|i| {
            if gt.valid()[i] {
                (est.u()[i] as f64 - gt.u()[i] as f64).hypot(est.v()[i] as f64 - gt.v()[i] as f64)
            } else {
                f64::NAN
            }
        })
        .collect())
}

#[inline]
fn is_outlier(err: f64, gt_mag: f64) -> bool {
    err > FL_ABSOLUTE_PX && err > FL_RELATIVE * gt_mag
}

fn evaluated<'a>(gt: &'a FlowField, mask: Option<&'a [bool]>) -> impl Iterator<Item = usize> + 'a {
    (0..gt.u().len()).filter(move |&i| gt.valid()[i] && mask.is_none_or(|m| m[i]))
}

/// Mean endpoint error over valid ground-truth pixels inside `mask`.
pub fn epe(est: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(est, gt, mask)?;
    let errs = endpoint_errors(est, gt)?;
    let (sum, n) = evaluated(gt, mask).fold((0.0, 0usize), |(s, n), i| (s + errs[i], n + 1));
    if n == 0 {
        return Err(Error::UndefinedMetric("no evaluated pixels".into()));
    }
    Ok(sum / n as f64)
}

/// Percentage of evaluated pixels whose error exceeds both 3 px and 5% of
/// the true magnitude.
pub fn fl_outlier_rate(est: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(est, gt, mask)?;
    let errs = endpoint_errors(est, gt)?;
    let (out, n) = evaluated(gt, mask).fold((0usize, 0usize), |(o, n), i| {
        let mag = (gt.u()[i] as f64).hypot(gt.v()[i] as f64);
        (o + is_outlier(errs[i], mag) as usize, n + 1)
    });
    if n == 0 {
        return Err(Error::UndefinedMetric("no evaluated pixels".into()));
    }
    Ok(100.0 * out as f64 / n as f64)
}

/// Grayscale error map: endpoint error divided by `max_error`, invalid
/// ground truth black.
pub fn error_image(est: &FlowField, gt: &FlowField, max_error: f64) -> Result<Image> {
    let errs = endpoint_errors(est, gt)?;
    let (w, h) = gt.dims();
    let data = errs
        .iter()
        .map(|&e| {
            if e.is_nan() {
                0.0
            } else {
                (e / max_error).clamp(0.0, 1.0)
            }
        })
        .collect();
    Image::new(w, h, ColorSpace::Gray, data)
}

/// Metrics of one frame (or a mean over frames). Split metrics are present
/// only when the corresponding mask was supplied and the category is
/// non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub epe_all: f64,
    pub epe_matched: Option<f64>,
    pub epe_unmatched: Option<f64>,
    pub fl_all: f64,
    pub fl_bg: Option<f64>,
    pub fl_fg: Option<f64>,
    pub pixels: usize,
    pub pixels_matched: usize,
    pub pixels_unmatched: usize,
    pub pixels_bg: usize,
    pub pixels_fg: usize,
}

/// Frame metrics. `matched` marks pixels visible in both frames; `foreground`
/// marks object pixels.
pub fn evaluate(
    est: &FlowField,
    gt: &FlowField,
    matched: Option<&[bool]>,
    foreground: Option<&[bool]>,
) -> Result<EvalReport> {
    check_dims(est, gt, matched)?;
    check_dims(est, gt, foreground)?;
    let n = gt.valid_count();
    let split = |mask: Option<&[bool]>, inside: bool| -> (Option<Vec<bool>>, usize) {
        match mask {
            None => (None, 0),
            Some(m) => {
                let sel: Vec<bool> = m.iter().map(|&b| b == inside).collect();
                let count = evaluated(gt, Some(&sel)).count();
                (Some(sel), count)
            }
        }
    };
    let optional = |sel: &Option<Vec<bool>>, count: usize, f: &dyn Fn(Option<&[bool]>) -> Result<f64>| match sel {
        Some(s) if count > 0 => f(Some(s)).map(Some),
        _ => Ok(None),
    };
    let epe_fn = |m: Option<&[bool]>| epe(est, gt, m);
    let fl_fn = |m: Option<&[bool]>| fl_outlier_rate(est, gt, m);
    let (m_in, n_m) = split(matched, true);
    let (m_out, n_u) = split(matched, false);
    let (bg, n_bg) = split(foreground, false);
    let (fg, n_fg) = split(foreground, true);
    Ok(EvalReport {
        epe_all: epe(est, gt, None)?,
        epe_matched: optional(&m_in, n_m, &epe_fn)?,
        epe_unmatched: optional(&m_out, n_u, &epe_fn)?,
        fl_all: fl_outlier_rate(est, gt, None)?,
        fl_bg: optional(&bg, n_bg, &fl_fn)?,
        fl_fg: optional(&fg, n_fg, &fl_fn)?,
        pixels: n,
        pixels_matched: n_m,
        pixels_unmatched: n_u,
        pixels_bg: n_bg,
        pixels_fg: n_fg,
    })
}

impl EvalReport {
    /// Per-metric mean over frames; pixel counts are summed.
    pub fn mean(reports: &[EvalReport]) -> Option<EvalReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mean_opt = |f: fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Some(EvalReport {
            epe_all: reports.iter().map(|r| r.epe_all).sum::<f64>() / n,
            epe_matched: mean_opt(|r| r.epe_matched),
            epe_unmatched: mean_opt(|r| r.epe_unmatched),
            fl_all: reports.iter().map(|r| r.fl_all).sum::<f64>() / n,
            fl_bg: mean_opt(|r| r.fl_bg),
            fl_fg: mean_opt(|r| r.fl_fg),
            pixels: reports.iter().map(|r| r.pixels).sum(),
            pixels_matched: reports.iter().map(|r| r.pixels_matched).sum(),
            pixels_unmatched: reports.iter().map(|r| r.pixels_unmatched).sum(),
            pixels_bg: reports.iter().map(|r| r.pixels_bg).sum(),
            pixels_fg: reports.iter().map(|r| r.pixels_fg).sum(),
        })
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        vec![
            ("epe_all", format!("{:.6}", self.epe_all)),
            ("epe_matched", opt(self.epe_matched)),
            ("epe_unmatched", opt(self.epe_unmatched)),
            ("fl_all", format!("{:.6}", self.fl_all)),
            ("fl_bg", opt(self.fl_bg)),
            ("fl_fg", opt(self.fl_fg)),
            ("pixels", self.pixels.to_string()),
            ("pixels_matched", self.pixels_matched.to_string()),
            ("pixels_unmatched", self.pixels_unmatched.to_string()),
            ("pixels_bg", self.pixels_bg.to_string()),
            ("pixels_fg", self.pixels_fg.to_string()),
        ]
    }

    /// `key=value` lines, keys prefixed with `prefix.` when non-empty.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            if prefix.is_empty() {
                let _ = writeln!(out, "{k}={v}");
            } else {
                let _ = writeln!(out, "{prefix}.{k}={v}");
            }
        }
        out
    }
}

/// Aligned text table, one row per named report.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let header = [
        "frame",
        "EPE-all",
        "EPE-match",
        "EPE-unm",
        "Fl-all%",
        "Fl-bg%",
        "Fl-fg%",
        "pixels",
    ];
    let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"));
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.clone(),
                format!("{:.3}", r.epe_all),
                opt(r.epe_matched, 3),
                opt(r.epe_unmatched, 3),
                format!("{:.2}", r.fl_all),
                opt(r.fl_bg, 2),
                opt(r.fl_fg, 2),
                r.pixels.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  "));
    };
    line(header.to_vec(), &mut out);
    for row in &body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Outcome of evaluating an estimate directory against ground truth.
#[derive(Debug, Clone, Default)]
pub struct DirEvaluation {
    /// Frame stem and its report, sorted by stem.
    pub frames: Vec<(String, EvalReport)>,
    /// Ground-truth stems with no estimate.
    pub missing: Vec<String>,
    /// Stems whose files could not be read or compared, with the reason.
    pub failed: Vec<(String, String)>,
}

impl DirEvaluation {
    pub fn mean(&self) -> Option<EvalReport> {
        EvalReport::mean(&self.frames.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.failed.is_empty()
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (stem, r) in &self.frames {
            out.push_str(&r.to_key_values(stem));
        }
        if let Some(m) = self.mean() {
            out.push_str(&m.to_key_values("mean"));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut rows = self.frames.clone();
        if let Some(m) = self.mean() {
            rows.push(("mean".into(), m));
        }
        format_table(&rows)
    }
}

fn flow_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| crate::error::open_error(dir, e))?;
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("flo") | Some("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.entry(stem.to_string()).or_insert(path);
            }
        }
    }
    Ok(out)
}

fn load_mask(dir: Option<&Path>, stem: &str, dims: (usize, usize)) -> Result<Option<Vec<bool>>> {
    let Some(dir) = dir else { return Ok(None) };
    let (w, h, m) = read_mask_png(dir.join(format!("{stem}.png")))?;
    if (w, h) != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: (w, h),
        });
    }
    Ok(Some(m))
}

/// Evaluates every ground-truth file against the estimate with the same
/// stem. Optional mask directories hold `<stem>.png` region masks.
pub fn run_eval(
    estimate_dir: &Path,
    gt_dir: &Path,
    matched_dir: Option<&Path>,
    foreground_dir: Option<&Path>,
) -> Result<DirEvaluation> {
    let estimates = flow_files(estimate_dir)?;
    let truths = flow_files(gt_dir)?;
    let mut result = DirEvaluation::default();
    for (stem, gt_path) in &truths {
        let Some(est_path) = estimates.get(stem) else {
            result.missing.push(stem.clone());
            continue;
        };
        let frame = (|| -> Result<EvalReport> {
            let gt = read_flow(gt_path)?;
            let est = read_flow(est_path)?;
            let matched = load_mask(matched_dir, stem, gt.dims())?;
            let fg = load_mask(foreground_dir, stem, gt.dims())?;
            evaluate(&est, &gt, matched.as_deref(), fg.as_deref())
        })();
        match frame {
            Ok(r) => result.frames.push((stem.clone(), r)),
            Err(e) => result.failed.push((stem.clone(), e.to_string())),
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn epe_examples() {
        let gt = FlowField::from_fn(5, 4, |x, y| (x as f32 * 0.3, -(y as f32)));
        assert_eq!(epe(&gt, &gt, None).unwrap(), 0.0);
        let shifted = FlowField::from_fn(5, 4, |x, y| (x as f32 * 0.3 + 1.0, -(y as f32)));
        assert!((epe(&shifted, &gt, None).unwrap() - 1.0).abs() < 1e-6);
        let gt2 = FlowField::zeros(2, 1);
        let est2 = FlowField::from_fn(2, 1, |x, _| if x == 0 { (3.0, 4.0) } else { (0.0, 0.0) });
        assert_eq!(epe(&est2, &gt2, None).unwrap(), 2.5);
    }

    #[test]
    fn empty_evaluation_is_undefined() {
        let mut gt = FlowField::zeros(2, 1);
        gt.set_valid(0, 0, false);
        gt.set_valid(1, 0, false);
        assert!(matches!(epe(&gt, &gt, None), Err(Error::UndefinedMetric(_))));
        let gt = FlowField::zeros(2, 1);
        assert!(matches!(
            fl_outlier_rate(&gt, &gt, Some(&[false, false])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn fl_dual_threshold() {
        let gt = FlowField::constant(1, 1, 100.0, 0.0);
        let est = FlowField::constant(1, 1, 104.0, 0.0);
        assert_eq!(fl_outlier_rate(&est, &gt, None).unwrap(), 0.0);
        let gt = FlowField::constant(1, 1, 10.0, 0.0);
        let est = FlowField::constant(1, 1, 14.0, 0.0);
        assert_eq!(fl_outlier_rate(&est, &gt, None).unwrap(), 100.0);
        assert_eq!(fl_outlier_rate(&gt, &gt, None).unwrap(), 0.0);
    }

    #[test]
    fn report_counts_partition() {
        let gt = FlowField::from_fn(4, 4, |x, y| (x as f32, y as f32));
        let est = FlowField::from_fn(4, 4, |x, y| (x as f32 + (x == y) as u8 as f32 * 5.0, y as f32));
        let matched: Vec<bool> = (0..16).map(|i| i % 3 != 0).collect();
        let fg: Vec<bool> = (0..16).map(|i| i < 6).collect();
        let r = evaluate(&est, &gt, Some(&matched), Some(&fg)).unwrap();
        assert_eq!(r.pixels_matched + r.pixels_unmatched, r.pixels);
        assert_eq!(r.pixels_bg + r.pixels_fg, r.pixels);
        for p in [Some(r.fl_all), r.fl_bg, r.fl_fg] {
            let p = p.unwrap();
            assert!((0.0..=100.0).contains(&p));
        }
        let kv = r.to_key_values("f");
        assert!(kv.contains("f.epe_all="));
        assert!(format_table(&[("f".into(), r)]).lines().count() == 2);
    }

    proptest! {
        #[test]
        fn mask_composition(errs in prop::collection::vec((-6.0f32..6.0, -6.0f32..6.0), 24), split in prop::collection::vec(any::<bool>(), 24)) {
            let gt = FlowField::from_fn(6, 4, |x, y| (x as f32 - 2.0, y as f32 * 0.5));
            let est = FlowField::from_fn(6, 4, |x, y| {
                let (du, dv) = errs[y * 6 + x];
                (x as f32 - 2.0 + du, y as f32 * 0.5 + dv)
            });
            let inv: Vec<bool> = split.iter().map(|b| !b).collect();
            let n_a = split.iter().filter(|&&b| b).count();
            let n_b = 24 - n_a;
            let all = epe(&est, &gt, None).unwrap();
            let fl_all = fl_outlier_rate(&est, &gt, None).unwrap();
            let mut combined = 0.0;
            let mut fl_combined = 0.0;
            if n_a > 0 {
                combined += n_a as f64 * epe(&est, &gt, Some(&split)).unwrap();
                fl_combined += n_a as f64 * fl_outlier_rate(&est, &gt, Some(&split)).unwrap();
            }
            if n_b > 0 {
                combined += n_b as f64 * epe(&est, &gt, Some(&inv)).unwrap();
                fl_combined += n_b as f64 * fl_outlier_rate(&est, &gt, Some(&inv)).unwrap();
            }
            prop_assert!((combined / 24.0 - all).abs() < 1e-9);
            prop_assert!((fl_combined / 24.0 - fl_all).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariance(errs in prop::collection::vec((-6.0f32..6.0, -6.0f32..6.0), 12), rot in 0usize..12) {
            let gt = FlowField::from_fn(12, 1, |x, _| (x as f32, 1.0));
            let est = FlowField::from_fn(12, 1, |x, _| (x as f32 + errs[x].0, 1.0 + errs[x].1));
            let gt_p = FlowField::from_fn(12, 1, |x, _| gt.get((x + rot) % 12, 0));
            let est_p = FlowField::from_fn(12, 1, |x, _| est.get((x + rot) % 12, 0));
            prop_assert!((epe(&est, &gt, None).unwrap() - epe(&est_p, &gt_p, None).unwrap()).abs() < 1e-9);
            prop_assert_eq!(fl_outlier_rate(&est, &gt, None).unwrap(), fl_outlier_rate(&est_p, &gt_p, None).unwrap());
        }
    }
}
