//! Outlier rejection and sparsification of dense matches.
//!
//! A forward field survives only where it agrees with two independently
//! computed backward fields, sits in a sufficiently large coherent region,
//! and is the most consistent pixel of a well-populated 3x3 block.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{open_error, Error, Result};
use crate::matcher::{match_full, MatchingParams};
use crate::raster::{FlowField, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub x: f32,
    pub y: f32,
    pub u: f32,
    pub v: f32,
    pub consistency_error: f32,
}

/// Sparse correspondences, in raster order of their 3x3 blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn new(matches: Vec<Match>) -> Self {
        MatchSet { matches }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }

    /// One `x y u v error` line per match.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.matches.len() * 32);
        for m in &self.matches {
            let _ = writeln!(out, "{} {} {} {} {}", m.x, m.y, m.u, m.v, m.consistency_error);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut matches = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("match line {}: {e}", lineno + 1)))?;
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "match line {}: expected 5 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("match line {}", lineno + 1)));
            }
            matches.push(Match {
                x: fields[0],
                y: fields[1],
                u: fields[2],
                v: fields[3],
                consistency_error: fields[4],
            });
        }
        Ok(MatchSet { matches })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(self.to_text().as_bytes())?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| open_error(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        MatchSet::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Consistency threshold in pixels.
    pub epsilon: f64,
    /// Minimum valid pixels for a 3x3 block to emit a match.
    pub min_matches: usize,
    /// Coherent regions smaller than this (pixels) are removed.
    pub min_region_area: usize,
    /// Neighbors join a region when each flow component differs by less than this.
    pub region_flow_tolerance: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            epsilon: 1.0,
            min_matches: 7,
            min_region_area: 10,
            region_flow_tolerance: 1.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("consistency threshold must be positive"));
        }
        if !(1..=9).contains(&self.min_matches) {
            return Err(Error::invalid("minimum matches per block must be in 1..=9"));
        }
        Ok(())
    }
}

/// Forward-backward check. Returns the masked forward field and the
/// per-pixel error (infinite where the target leaves frame 2 or lands on
/// invalid backward flow).
pub fn consistency_check(fwd: &FlowField, bwd: &FlowField, epsilon: f64) -> Result<(FlowField, Vec<f64>)> {
    if fwd.dims() != bwd.dims() {
        return Err(Error::DimensionMismatch {
            expected: fwd.dims(),
            found: bwd.dims(),
        });
    }
    let (w, h) = fwd.dims();
    let mut out = fwd.clone();
    let mut errors = vec![f64::INFINITY; w * h];
    for y in 0..h {
        for x in 0..w {
            if !fwd.is_valid(x, y) {
                continue;
            }
            let (u, v) = fwd.get(x, y);
            let tx = x as f64 + u as f64;
            let ty = y as f64 + v as f64;
            let inside = tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64;
            if !inside || !bwd.taps_valid(tx, ty) {
                out.set_valid(x, y, false);
                continue;
            }
            let (bu, bv) = bwd.sample_clamped(tx, ty);
            let e = ((u as f64 + bu).powi(2) + (v as f64 + bv).powi(2)).sqrt();
            errors[y * w + x] = e;
            if e > epsilon {
                out.set_valid(x, y, false);
            }
        }
    }
    Ok((out, errors))
}

/// Validity is the intersection of both checks; the error is their maximum.
pub fn combine_checks(
    fwd: &FlowField,
    bwd_main: &FlowField,
    bwd_alt: &FlowField,
    epsilon: f64,
) -> Result<(FlowField, Vec<f64>)> {
    let (a, ea) = consistency_check(fwd, bwd_main, epsilon)?;
    let (b, eb) = consistency_check(fwd, bwd_alt, epsilon)?;
    let (w, h) = fwd.dims();
    let mut out = fwd.clone();
    let mut errors = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.set_valid(x, y, a.is_valid(x, y) && b.is_valid(x, y));
            errors[i] = ea[i].max(eb[i]);
        }
    }
    Ok((out, errors))
}

/// Matches two backward fields (main and alternate parameters) and keeps
/// forward vectors consistent with both.
pub fn two_pass_filter(
    img1: &Image,
    img2: &Image,
    fwd: &FlowField,
    params_main: &MatchingParams,
    params_alt: &MatchingParams,
    fp: &FilterParams,
) -> Result<(FlowField, Vec<f64>)> {
    fp.validate()?;
    let (bwd_main, bwd_alt) = rayon::join(
        || match_full(img2, img1, params_main),
        || match_full(img2, img1, params_alt),
    );
    combine_checks(fwd, &bwd_main?, &bwd_alt?, fp.epsilon)
}

/// Removes 4-connected coherent regions smaller than `fp.min_region_area`.
pub fn region_filter(flow: &FlowField, fp: &FilterParams) -> FlowField {
    let (w, h) = flow.dims();
    let mut label = vec![usize::MAX; w * h];
    let mut out = flow.clone();
    let mut stack = Vec::new();
    let mut members = Vec::new();
    let coherent = |a: (f32, f32), b: (f32, f32)| {
        ((a.0 - b.0).abs() as f64) < fp.region_flow_tolerance && ((a.1 - b.1).abs() as f64) < fp.region_flow_tolerance
    };
    let mut next = 0;
    for start in 0..w * h {
        if !flow.valid()[start] || label[start] != usize::MAX {
            continue;
        }
        members.clear();
        label[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let here = flow.get(x, y);
            let mut visit = |j: usize| {
                if flow.valid()[j] && label[j] == usize::MAX && coherent(here, flow.get(j % w, j / w)) {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if members.len() < fp.min_region_area {
            for &i in &members {
                out.set_valid(i % w, i / w, false);
            }
        }
        next += 1;
    }
    out
}

/// One match per non-overlapping 3x3 block holding at least
/// `fp.min_matches` valid pixels: the one with the smallest error, earliest
/// in raster order on ties.
pub fn sparsify(flow: &FlowField, errors: &[f64], fp: &FilterParams) -> MatchSet {
    let (w, h) = flow.dims();
    let mut matches = Vec::new();
    for by in (0..h).step_by(3) {
        for bx in (0..w).step_by(3) {
            let mut count = 0;
            let mut best: Option<(f64, usize, usize)> = None;
            for y in by..(by + 3).min(h) {
                for x in bx..(bx + 3).min(w) {
                    if !flow.is_valid(x, y) {
                        continue;
                    }
                    count += 1;
                    let e = errors[y * w + x];
                    if best.is_none_or(|b| e < b.0) {
                        best = Some((e, x, y));
                    }
                }
            }
            if count >= fp.min_matches {
                let (e, x, y) = best.expect("block has valid pixels");
                let (u, v) = flow.get(x, y);
                matches.push(Match {
                    x: x as f32,
                    y: y as f32,
                    u,
                    v,
                    consistency_error: e as f32,
                });
            }
        }
    }
    MatchSet { matches }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverses_pass() {
        let fwd = FlowField::constant(20, 10, 2.0, 0.0);
        let bwd = FlowField::constant(20, 10, -2.0, 0.0);
        let (out, err) = consistency_check(&fwd, &bwd, 1.0).unwrap();
        for y in 0..10 {
            for x in 0..18 {
                assert!(out.is_valid(x, y));
                assert_eq!(err[y * 20 + x], 0.0);
            }
            // targets beyond the right edge
            assert!(!out.is_valid(18, y) && !out.is_valid(19, y));
        }
    }

    #[test]
    fn inconsistent_backward_rejects() {
        let fwd = FlowField::constant(10, 10, 2.0, 0.0);
        let bwd = FlowField::zeros(10, 10);
        let (out, err) = consistency_check(&fwd, &bwd, 1.0).unwrap();
        assert_eq!(out.valid_count(), 0);
        assert_eq!(err[0], 2.0);
    }

    #[test]
    fn out_of_frame_rejected_at_any_threshold() {
        let fwd = FlowField::constant(10, 10, -50.0, 0.0);
        let bwd = FlowField::constant(10, 10, 50.0, 0.0);
        let (out, _) = consistency_check(&fwd, &bwd, f64::INFINITY).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn infinite_threshold_keeps_in_bounds_mask() {
        let fwd = FlowField::from_fn(12, 9, |x, y| ((x % 3) as f32 - 1.0, (y % 4) as f32 - 2.0));
        let bwd = FlowField::from_fn(12, 9, |x, _| (x as f32 * 0.3, 7.0));
        let (out, _) = consistency_check(&fwd, &bwd, f64::INFINITY).unwrap();
        for y in 0..9 {
            for x in 0..12 {
                let (u, v) = fwd.get(x, y);
                let (tx, ty) = (x as f32 + u, y as f32 + v);
                let inside = tx >= 0.0 && ty >= 0.0 && tx <= 11.0 && ty <= 8.0;
                assert_eq!(out.is_valid(x, y), inside);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(consistency_check(&FlowField::zeros(4, 4), &FlowField::zeros(5, 4), 1.0).is_err());
    }

    #[test]
    fn region_filter_cases() {
        let fp = FilterParams::default();
        let big = FlowField::constant(30, 30, 1.0, 1.0);
        assert_eq!(region_filter(&big, &fp), big);

        let mut lonely = FlowField::zeros(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                lonely.set_valid(x, y, x == 2 && y == 2);
            }
        }
        assert_eq!(region_filter(&lonely, &fp).valid_count(), 0);
    }

    #[test]
    fn sparsify_block_rule() {
        let fp = FilterParams::default();
        let mut flow = FlowField::zeros(3, 6);
        let mut errors = vec![0.5; 18];
        errors[4] = 0.1;
        // lower block: only 6 valid
        for i in 9..12 {
            flow.set_valid(i % 3, i / 3, false);
        }
        let set = sparsify(&flow, &errors, &fp);
        assert_eq!(set.len(), 1);
        assert_eq!((set.matches[0].x, set.matches[0].y), (1.0, 1.0));
    }

    #[test]
    fn sparsify_ties_take_raster_first() {
        let flow = FlowField::zeros(3, 3);
        let set = sparsify(&flow, &[0.2; 9], &FilterParams::default());
        assert_eq!((set.matches[0].x, set.matches[0].y), (0.0, 0.0));
    }

    #[test]
    fn full_field_gives_one_match_per_block() {
        let flow = FlowField::zeros(10, 7);
        let set = sparsify(
            &flow,
            &[0.0; 70],
            &FilterParams {
                min_matches: 1,
                ..Default::default()
            },
        );
        assert_eq!(set.len(), 4 * 3);
    }

    #[test]
    fn text_round_trip() {
        let set = MatchSet::new(vec![
            Match {
                x: 3.0,
                y: 6.0,
                u: 1.1,
                v: -0.3333333,
                consistency_error: 0.25,
            },
            Match {
                x: 0.0,
                y: 0.0,
                u: 1e-7,
                v: 123456.79,
                consistency_error: 0.0,
            },
        ]);
        assert_eq!(MatchSet::from_text(&set.to_text()).unwrap(), set);
        assert!(MatchSet::from_text("1 2 3 4").is_err());
        assert!(MatchSet::from_text("1 2 3 4 x").is_err());
    }
}
