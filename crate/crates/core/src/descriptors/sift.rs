//! Dense, fixed-scale, upright SIFT descriptors.
//!
//! Gradient magnitudes are split linearly between the two nearest of eight
//! orientation bins, then each orientation plane is filtered with a tent
//! kernel whose half-width equals the cell size. Sampling a filtered plane at
//! a cell center is exactly bilinear spatial binning, so a descriptor at any
//! sub-pixel position costs 128 bilinear lookups.

use std::f64::consts::TAU;

use crate::raster::{clamp_axis, convolve_separable, lerp2, ColorSpace, Image};

pub const SIFT_LEN: usize = 128;
pub const SIFT_BINS: usize = 8;
pub const SIFT_CELLS: usize = 4;
pub const SIFT_RADIUS: f64 = 8.0;
const CLAMP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftDescriptor {
    pub values: [f32; SIFT_LEN],
}

impl SiftDescriptor {
    pub fn zeros() -> Self {
        SiftDescriptor {
            values: [0.0; SIFT_LEN],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn sift_distance(a: &SiftDescriptor, b: &SiftDescriptor) -> f64 {
    sift_distance_slices(&a.values, &b.values)
}

#[inline]
pub(crate) fn sift_distance_slices(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (*x - *y) as f64;
        acc += d * d;
    }
    acc.sqrt()
}

/// Orientation-binned, tent-filtered gradient planes of a grayscale image.
#[derive(Debug, Clone)]
pub struct SiftField {
    width: usize,
    height: usize,
    /// Cell-center offsets from the descriptor center and their Gaussian weights.
    cells: [(f64, f64, f64); SIFT_CELLS * SIFT_CELLS],
    /// Filtered planes interleaved: `SIFT_BINS` values per pixel.
    bins: Vec<f64>,
}

impl SiftField {
    pub fn new(img: &Image, patch_radius: f64) -> Self {
        assert!(patch_radius > 0.0);
        let gray = if img.colorspace() == ColorSpace::Gray {
            img.clone()
        } else {
            img.luminance()
        };
        let (w, h) = gray.dims();
        let lum = gray.data();
        let mut planes = vec![vec![0.0; w * h]; SIFT_BINS];
        for y in 0..h {
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            for x in 0..w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(w - 1);
                let gx = 0.5 * (lum[y * w + xr] - lum[y * w + xl]);
                let gy = 0.5 * (lum[yd * w + x] - lum[yu * w + x]);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let theta = gy.atan2(gx).rem_euclid(TAU);
                let t = theta / (TAU / SIFT_BINS as f64);
                let b0 = t.floor();
                let f = t - b0;
                let b0 = (b0 as usize) % SIFT_BINS;
                let b1 = (b0 + 1) % SIFT_BINS;
                planes[b0][y * w + x] += (1.0 - f) * mag;
                planes[b1][y * w + x] += f * mag;
            }
        }
        let cell = 2.0 * patch_radius / SIFT_CELLS as f64;
        let reach = cell.ceil() as isize - 1;
        let tent: Vec<f64> = (-reach..=reach).map(|d| 1.0 - (d as f64).abs() / cell).collect();
        let planes: Vec<Vec<f64>> = planes.iter().map(|p| convolve_separable(p, w, h, &tent)).collect();
        let bins = (0..w * h).flat_map(|i| planes.iter().map(move |p| p[i])).collect();
        let half = (SIFT_CELLS as f64 - 1.0) / 2.0;
        let sigma = patch_radius;
        let cells = std::array::from_fn(|k| {
            let oy = ((k / SIFT_CELLS) as f64 - half) * cell;
            let ox = ((k % SIFT_CELLS) as f64 - half) * cell;
            (ox, oy, (-(ox * ox + oy * oy) / (2.0 * sigma * sigma)).exp())
        });
        SiftField {
            width: w,
            height: h,
            cells,
            bins,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Descriptor centered at a sub-pixel position (clamped sampling).
    pub fn descriptor_at(&self, x: f64, y: f64) -> SiftDescriptor {
        let mut raw = [0.0f64; SIFT_LEN];
        let w = self.width;
        for (k, &(ox, oy, weight)) in self.cells.iter().enumerate() {
            let (x0, x1, fx) = clamp_axis(x + ox, w);
            let (y0, y1, fy) = clamp_axis(y + oy, self.height);
            let at = |xx: usize, yy: usize| &self.bins[(yy * w + xx) * SIFT_BINS..(yy * w + xx + 1) * SIFT_BINS];
            let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
            for bin in 0..SIFT_BINS {
                raw[k * SIFT_BINS + bin] = weight * lerp2(a[bin], b[bin], c[bin], d[bin], fx, fy);
            }
        }
        normalize(raw)
    }
}

fn normalize(mut raw: [f64; SIFT_LEN]) -> SiftDescriptor {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return SiftDescriptor::zeros();
    }
    raw.iter_mut().for_each(|v| *v = (*v / norm).min(CLAMP));
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = SiftDescriptor::zeros();
    for (o, v) in out.values.iter_mut().zip(raw) {
        *o = (v / norm) as f32;
    }
    out
}

/// One-off descriptor; builds the dense field for the whole image.
pub fn sift_at(img: &Image, x: f64, y: f64, patch_radius: f64) -> SiftDescriptor {
    SiftField::new(img, patch_radius).descriptor_at(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_patch_gives_zero_descriptor() {
        let img = Image::constant(32, 32, ColorSpace::Gray, 0.3);
        let d = sift_at(&img, 16.0, 16.0, SIFT_RADIUS);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_patches_have_zero_distance() {
        let img = Image::from_fn(40, 40, ColorSpace::Gray, |x, y, _| {
            ((x * 7 + y * 13) % 11) as f64 / 11.0
        });
        let field = SiftField::new(&img, SIFT_RADIUS);
        let a = field.descriptor_at(20.3, 17.8);
        let b = sift_at(&img, 20.3, 17.8, SIFT_RADIUS);
        assert_eq!(sift_distance(&a, &b), 0.0);
    }

    #[test]
    fn horizontal_ramp_concentrates_in_orientation_zero() {
        let img = Image::from_fn(48, 48, ColorSpace::Gray, |x, _, _| x as f64 / 48.0);
        let d = sift_at(&img, 24.0, 24.0, SIFT_RADIUS);
        let total: f64 = d.values.iter().map(|&v| v as f64).sum();
        // gradient direction is exactly 0, the center of bin 0
        let bin0: f64 = d.values.iter().step_by(SIFT_BINS).map(|&v| v as f64).sum();
        assert!(bin0 / total >= 0.9, "{}", bin0 / total);
    }

    proptest! {
        #[test]
        fn unit_norm_unless_zero(seed in 0u64..200, x in 0.0f64..30.0, y in 0.0f64..30.0) {
            let img = Image::from_fn(31, 31, ColorSpace::Gray, |px, py, _| {
                (((px as u64 * 2654435761 + py as u64 * 40503) ^ seed) % 1000) as f64 / 1000.0
            });
            let d = sift_at(&img, x, y, SIFT_RADIUS);
            let n = d.norm();
            prop_assert!((n - 1.0).abs() < 1e-5 || n == 0.0);
            prop_assert!(d.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
