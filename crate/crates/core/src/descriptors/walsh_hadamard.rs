use std::sync::OnceLock;

use crate::raster::Image;

pub const WH_PATCH: usize = 8;
pub const WH_LEN: usize = 16;

/// Leading Walsh-Hadamard coefficients of an 8x8 grayscale patch.
///
/// Coefficients are the 2-D products of 1-D sequency-ordered Walsh functions
/// `(sy, sx)`, enumerated by increasing `sy + sx` and then increasing `sy`.
/// Coefficient 0 is the patch sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhDescriptor(pub [f64; WH_LEN]);

impl WhDescriptor {
    pub fn squared_distance(&self, other: &WhDescriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Natural-order Hadamard index for each sequency index.
fn sequency_to_natural() -> &'static [usize; WH_PATCH] {
    static TABLE: OnceLock<[usize; WH_PATCH]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [0; WH_PATCH];
        for natural in 0..WH_PATCH {
            let sign = |j: usize| {
                if (natural & j).count_ones().is_multiple_of(2) {
                    1
                } else {
                    -1
                }
            };
            let changes = (1..WH_PATCH).filter(|&j| sign(j) != sign(j - 1)).count();
            table[changes] = natural;
        }
        table
    })
}

/// `(sy, sx)` sequency pairs of the retained coefficients.
pub fn coefficient_order() -> &'static [(usize, usize); WH_LEN] {
    static ORDER: OnceLock<[(usize, usize); WH_LEN]> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut pairs: Vec<(usize, usize)> = (0..WH_PATCH)
            .flat_map(|sy| (0..WH_PATCH).map(move |sx| (sy, sx)))
            .collect();
        pairs.sort_by_key(|&(sy, sx)| (sy + sx, sy));
        let mut out = [(0, 0); WH_LEN];
        out.copy_from_slice(&pairs[..WH_LEN]);
        out
    })
}

fn fwht8(v: &mut [f64; WH_PATCH]) {
    let mut h = 1;
    while h < WH_PATCH {
        for i in (0..WH_PATCH).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Projects an 8x8 patch (row-major) onto the retained basis functions.
pub fn wh_project(patch: &[[f64; WH_PATCH]; WH_PATCH]) -> WhDescriptor {
    let mut t = *patch;
    for row in t.iter_mut() {
        fwht8(row);
    }
    for x in 0..WH_PATCH {
        let mut col: [f64; WH_PATCH] = std::array::from_fn(|y| t[y][x]);
        fwht8(&mut col);
        for (row, &c) in t.iter_mut().zip(&col) {
            row[x] = c;
        }
    }
    let nat = sequency_to_natural();
    let mut out = [0.0; WH_LEN];
    for (k, &(sy, sx)) in coefficient_order().iter().enumerate() {
        out[k] = t[nat[sy]][nat[sx]];
    }
    WhDescriptor(out)
}

/// Descriptor of the 8x8 patch spanning `x-3..=x+4`, `y-3..=y+4`
/// (replicate-clamped) of a single-channel image.
pub fn wh_at(img: &Image, x: isize, y: isize) -> WhDescriptor {
    let (w, h) = img.dims();
    let data = img.data();
    let ch = img.channels();
    let mut patch = [[0.0; WH_PATCH]; WH_PATCH];
    for (py, row) in patch.iter_mut().enumerate() {
        let sy = (y + py as isize - 3).clamp(0, h as isize - 1) as usize;
        for (px, v) in row.iter_mut().enumerate() {
            let sx = (x + px as isize - 3).clamp(0, w as isize - 1) as usize;
            *v = data[(sy * w + sx) * ch];
        }
    }
    wh_project(&patch)
}

/// The 2-D basis function behind coefficient `k`, as ±1 entries.
pub fn wh_basis(k: usize) -> [[f64; WH_PATCH]; WH_PATCH] {
    let (sy, sx) = coefficient_order()[k];
    let nat = sequency_to_natural();
    let walsh = |n: usize, t: usize| {
        if (n & t).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    };
    let mut out = [[0.0; WH_PATCH]; WH_PATCH];
    for (y, row) in out.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = walsh(nat[sy], y) * walsh(nat[sx], x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorSpace;
    use proptest::prelude::*;

    /// Sequency-ordered Walsh function via Gray-coded Rademacher products.
    fn walsh_oracle(k: usize, t: usize) -> f64 {
        let gray = k ^ (k >> 1);
        let mut s = 1.0;
        for j in 0..3 {
            // Rademacher r_{j+1}(t) flips on bit (2 - j) of t
            if gray >> j & 1 == 1 && t >> (2 - j) & 1 == 1 {
                s = -s;
            }
        }
        s
    }

    fn naive(patch: &[[f64; 8]; 8]) -> [f64; WH_LEN] {
        let mut out = [0.0; WH_LEN];
        for (k, &(sy, sx)) in coefficient_order().iter().enumerate() {
            for (y, row) in patch.iter().enumerate() {
                for (x, &p) in row.iter().enumerate() {
                    out[k] += p * walsh_oracle(sy, y) * walsh_oracle(sx, x);
                }
            }
        }
        out
    }

    #[test]
    fn oracle_walsh_functions_have_sequency_sign_changes() {
        for k in 0..8 {
            let changes = (1..8).filter(|&t| walsh_oracle(k, t) != walsh_oracle(k, t - 1)).count();
            assert_eq!(changes, k);
        }
    }

    #[test]
    fn constant_patch_projects_to_dc() {
        let img = Image::constant(12, 12, ColorSpace::Gray, 0.5);
        let d = wh_at(&img, 5, 5);
        assert_eq!(d.0[0], 32.0);
        assert!(d.0[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn basis_functions_are_orthogonal() {
        for k in 0..WH_LEN {
            let d = wh_project(&wh_basis(k));
            for (j, &c) in d.0.iter().enumerate() {
                assert_eq!(c, if j == k { 64.0 } else { 0.0 }, "basis {k} coefficient {j}");
            }
        }
    }

    fn patch_strategy() -> impl Strategy<Value = [[f64; 8]; 8]> {
        proptest::collection::vec(-10.0f64..10.0, 64).prop_map(|v| {
            let mut p = [[0.0; 8]; 8];
            for (i, x) in v.into_iter().enumerate() {
                p[i / 8][i % 8] = x;
            }
            p
        })
    }

    proptest! {
        #[test]
        fn fast_transform_matches_naive_projection(p in patch_strategy()) {
            let fast = wh_project(&p);
            let slow = naive(&p);
            for (f, s) in fast.0.iter().zip(&slow) {
                prop_assert!((f - s).abs() < 1e-6);
            }
            let sum: f64 = p.iter().flatten().sum();
            prop_assert!((fast.0[0] - sum).abs() < 1e-9);
        }

        #[test]
        fn transform_is_linear(p in patch_strategy(), q in patch_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut mix = [[0.0; 8]; 8];
            for y in 0..8 {
                for x in 0..8 {
                    mix[y][x] = a * p[y][x] + b * q[y][x];
                }
            }
            let (wp, wq, wm) = (wh_project(&p), wh_project(&q), wh_project(&mix));
            for k in 0..WH_LEN {
                prop_assert!((wm.0[k] - (a * wp.0[k] + b * wq.0[k])).abs() < 1e-6);
            }
        }
    }
}
