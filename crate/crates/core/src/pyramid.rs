//! Scale pyramids with half-octave (and optional quarter-octave) levels.

use crate::error::{Error, Result};
use crate::raster::{gaussian_blur, note_resample, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    /// Insert a further intermediate level between each half-octave step.
    pub sub_sub_scales: bool,
    /// Levels whose smaller side would fall below this are not built.
    pub min_dimension: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            sub_sub_scales: false,
            min_dimension: 16,
        }
    }
}

impl PyramidConfig {
    /// Ratio between consecutive levels.
    pub fn step(&self) -> f64 {
        if self.sub_sub_scales {
            0.5f64.powf(0.25)
        } else {
            std::f64::consts::FRAC_1_SQRT_2
        }
    }
}

/// Level 0 is full resolution; the coarsest level is last.
#[derive(Debug, Clone)]
pub struct ScalePyramid {
    pub levels: Vec<Image>,
    pub scale_factors: Vec<f64>,
}

impl ScalePyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn coarsest(&self) -> &Image {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Scale factors and level dimensions for a `width x height` input.
pub fn level_schedule(width: usize, height: usize, config: &PyramidConfig) -> Vec<(f64, usize, usize)> {
    let step = config.step();
    let mut out = vec![(1.0, width, height)];
    for k in 1.. {
        let s = step.powi(k);
        let w = (width as f64 * s).round() as usize;
        let h = (height as f64 * s).round() as usize;
        let (pw, ph) = (out.last().unwrap().1, out.last().unwrap().2);
        if w.min(h) < config.min_dimension || (w >= pw && h >= ph) {
            break;
        }
        out.push((s, w, h));
    }
    out
}

pub fn build_pyramid(img: &Image, config: &PyramidConfig) -> Result<ScalePyramid> {
    let (w, h) = img.dims();
    if w < 32 || h < 32 {
        return Err(Error::invalid(format!("image {w}x{h} is smaller than 32x32")));
    }
    let schedule = level_schedule(w, h, config);
    let mut levels = Vec::with_capacity(schedule.len());
    let mut scale_factors = Vec::with_capacity(schedule.len());
    for &(s, lw, lh) in &schedule {
        if s == 1.0 {
            levels.push(img.clone());
        } else {
            levels.push(downsample(img, s, lw, lh));
        }
        scale_factors.push(s);
    }
    Ok(ScalePyramid { levels, scale_factors })
}

/// Gaussian prefilter (sigma = 0.5 / scale) followed by area averaging.
pub fn downsample(img: &Image, scale: f64, out_w: usize, out_h: usize) -> Image {
    note_resample();
    let (w, h) = img.dims();
    let sigma = 0.5 / scale;
    let planes: Vec<Vec<f64>> = (0..img.channels())
        .map(|c| {
            let blurred = gaussian_blur(&img.plane(c), w, h, sigma);
            area_resample(&blurred, w, h, out_w, out_h)
        })
        .collect();
    Image::from_planes(out_w, out_h, img.colorspace(), &planes)
}

/// Per output index, the (input index, weight) pairs covering its footprint.
fn area_weights(len_in: usize, len_out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|o| {
            let start = o as f64 * ratio;
            let end = (o + 1) as f64 * ratio;
            let mut taps = Vec::new();
            let mut i = start.floor() as usize;
            while (i as f64) < end && i < len_in {
                let lo = start.max(i as f64);
                let hi = end.min((i + 1) as f64);
                if hi > lo {
                    taps.push((i, (hi - lo) / ratio));
                }
                i += 1;
            }
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= sum);
            taps
        })
        .collect()
}

pub(crate) fn area_resample(plane: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let wx = area_weights(w, out_w);
    let wy = area_weights(h, out_h);
    let mut rows = vec![0.0; out_w * h];
    for y in 0..h {
        for (ox, taps) in wx.iter().enumerate() {
            rows[y * out_w + ox] = taps.iter().map(|&(i, wt)| wt * plane[y * w + i]).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..out_w {
            out[oy * out_w + ox] = taps.iter().map(|&(i, wt)| wt * rows[i * out_w + ox]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;

    #[test]
    fn schedule_512() {
        let sched = level_schedule(512, 512, &PyramidConfig::default());
        let dims: Vec<usize> = sched.iter().map(|s| s.1).collect();
        assert_eq!(dims, vec![512, 362, 256, 181, 128, 91, 64, 45, 32, 23, 16]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (k, s) in sched.iter().enumerate() {
            assert!((s.0 - r.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn sub_sub_scales_insert_levels() {
        let cfg = PyramidConfig {
            sub_sub_scales: true,
            ..Default::default()
        };
        let sched = level_schedule(64, 64, &cfg);
        let dims: Vec<usize> = sched.iter().map(|s| s.1).collect();
        assert_eq!(dims, vec![64, 54, 45, 38, 32, 27, 23, 19, 16]);
    }

    #[test]
    fn too_small_is_rejected() {
        let img = Image::constant(31, 40, ColorSpace::Gray, 0.0);
        assert!(build_pyramid(&img, &PyramidConfig::default()).is_err());
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::constant(100, 64, ColorSpace::Rgb, 0.25);
        let pyr = build_pyramid(&img, &PyramidConfig::default()).unwrap();
        assert!(pyr.len() > 2);
        for level in &pyr.levels {
            assert!(level.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
        }
        assert!(pyr.coarsest().width().min(pyr.coarsest().height()) >= 16);
    }

    #[test]
    fn area_weights_sum_to_one() {
        for (a, b) in [(10, 7), (512, 362), (33, 16)] {
            for taps in area_weights(a, b) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
