//! Procedural textures and image pairs with known flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interpolator::AffineModel;
use crate::raster::{ColorSpace, FlowField, Image};

/// Smooth random RGB texture defined on the whole plane.
#[derive(Debug, Clone)]
pub struct Texture {
    /// `(kx, ky, phase, amplitude per channel)`.
    waves: Vec<(f64, f64, f64, [f64; 3])>,
    base: [f64; 3],
}

impl Texture {
    /// `waves` sinusoids with periods between `min_period` and
    /// `max_period` pixels around a random base color.
    pub fn new(seed: u64, waves: usize, min_period: f64, max_period: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = std::array::from_fn(|_| rng.random_range(0.3..0.7));
        let amp = 0.45 / (waves as f64).sqrt();
        let waves = (0..waves)
            .map(|_| {
                let period = rng.random_range(min_period..max_period);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / period;
                let a = std::array::from_fn(|_| rng.random_range(-amp..amp));
                (
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    a,
                )
            })
            .collect();
        Texture { waves, base }
    }

    /// Default matching-friendly texture.
    pub fn standard(seed: u64) -> Self {
        Texture::new(seed, 24, 5.0, 40.0)
    }

    /// Same texture with its base color replaced.
    pub fn with_base(mut self, base: [f64; 3]) -> Self {
        self.base = base;
        self
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for &(kx, ky, ph, a) in &self.waves {
            let s = (kx * x + ky * y + ph).sin();
            for (ch, amp) in c.iter_mut().zip(a) {
                *ch += amp * s;
            }
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn render(&self, width: usize, height: usize, mut map: impl FnMut(f64, f64) -> (f64, f64)) -> Image {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = map(x as f64, y as f64);
                data.extend(self.eval(sx, sy));
            }
        }
        Image::new(width, height, ColorSpace::Rgb, data).expect("finite texture")
    }
}

/// An RGB image pair with its exact forward flow.
#[derive(Debug, Clone)]
pub struct Scene {
    pub img1: Image,
    pub img2: Image,
    pub truth: FlowField,
}

fn inverse(m: &AffineModel) -> AffineModel {
    let det = m.det();
    let (i11, i12, i21, i22) = (m.a22 / det, -m.a12 / det, -m.a21 / det, m.a11 / det);
    AffineModel {
        a11: i11,
        a12: i12,
        a21: i21,
        a22: i22,
        b1: -(i11 * m.b1 + i12 * m.b2),
        b2: -(i21 * m.b1 + i22 * m.b2),
    }
}

/// Frame 2 is the texture moved by `motion`, so `img2(A p) = img1(p)`.
pub fn affine_scene(texture: &Texture, width: usize, height: usize, motion: &AffineModel) -> Scene {
    let inv = inverse(motion);
    Scene {
        img1: texture.render(width, height, |x, y| (x, y)),
        img2: texture.render(width, height, |x, y| inv.apply(x, y)),
        truth: FlowField::from_fn(width, height, |x, y| {
            let (u, v) = motion.flow_at(x as f64, y as f64);
            (u as f32, v as f32)
        }),
    }
}

/// Integer translation of a texture.
pub fn shift_scene(texture: &Texture, width: usize, height: usize, du: f64, dv: f64) -> Scene {
    affine_scene(texture, width, height, &AffineModel::translation(du, dv))
}

/// Axis-aligned region of frame 1, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// A foreground object with its own texture and motion over a background
/// with another. The object's outline is an image edge in both frames.
pub fn two_motion_scene(
    background: &Texture,
    foreground: &Texture,
    object: Rect,
    width: usize,
    height: usize,
    bg_motion: &AffineModel,
    fg_motion: &AffineModel,
) -> Scene {
    let bg_inv = inverse(bg_motion);
    let fg_inv = inverse(fg_motion);
    let render = |second: bool| {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                let (xf, yf) = (x as f64, y as f64);
                let (fx, fy) = if second { fg_inv.apply(xf, yf) } else { (xf, yf) };
                let c = if object.contains(fx, fy) {
                    foreground.eval(fx, fy)
                } else {
                    let (bx, by) = if second { bg_inv.apply(xf, yf) } else { (xf, yf) };
                    background.eval(bx, by)
                };
                data.extend(c);
            }
        }
        Image::new(width, height, ColorSpace::Rgb, data).expect("finite texture")
    };
    let truth = FlowField::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let m = if object.contains(xf, yf) { fg_motion } else { bg_motion };
        let (u, v) = m.flow_at(xf, yf);
        (u as f32, v as f32)
    });
    Scene {
        img1: render(false),
        img2: render(true),
        truth,
    }
}

/// Ten named scenes: five global affine warps and five pairs with a
/// rigidly moving foreground rectangle whose outline is a color edge.
/// Sizes below 120x100 leave too little room for the foreground.
pub fn benchmark_set(width: usize, height: usize) -> Vec<(String, Scene)> {
    let mut set = Vec::with_capacity(10);
    for i in 0..5u64 {
        let f = i as f64;
        let motion = AffineModel::from_flow_coefficients([
            [0.01 * (f - 2.0), 0.005 * f, 2.0 + f],
            [-0.004 * f, 0.008 * (2.0 - f), 1.0 - 0.5 * f],
        ]);
        set.push((
            format!("affine_{i}"),
            affine_scene(&Texture::standard(10 + i), width, height, &motion),
        ));
    }
    for i in 0..5u64 {
        let f = i as f64;
        let (w, h) = (width as f64, height as f64);
        let object = Rect {
            x0: 0.3 * w,
            y0: 0.25 * h,
            x1: 0.3 * w + 0.375 * w,
            y1: 0.25 * h + 0.4 * h,
        };
        let bg = AffineModel::translation(1.0 + 0.5 * f, -0.5);
        let fg = AffineModel::from_flow_coefficients([[0.01, 0.0, -4.0 + f], [0.0, 0.01, 2.5]]);
        let fg_texture = Texture::standard(40 + i).with_base([0.75, 0.35, 0.25]);
        set.push((
            format!("two_motion_{i}"),
            two_motion_scene(&Texture::standard(20 + i), &fg_texture, object, width, height, &bg, &fg),
        ));
    }
    set
}

/// Replaces a `fraction` of pixels with flow off by `min_error..max_error`
/// pixels in a random direction; returns the corrupted flags.
pub fn inject_outliers(
    flow: &FlowField,
    fraction: f64,
    min_error: f64,
    max_error: f64,
    seed: u64,
) -> (FlowField, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = flow.clone();
    let (w, h) = flow.dims();
    let mut hit = vec![false; w * h];
    for (i, flag) in hit.iter_mut().enumerate() {
        if rng.random_bool(fraction) {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.random_range(min_error..max_error);
            let (u, v) = flow.get(i % w, i / w);
            out.set(
                i % w,
                i / w,
                (u as f64 + r * a.cos()) as f32,
                (v as f64 + r * a.sin()) as f32,
            );
            *flag = true;
        }
    }
    (out, hit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_scene_is_consistent() {
        let t = Texture::standard(3);
        let m = AffineModel::from_flow_coefficients([[0.01, 0.0, 2.0], [0.0, -0.01, 1.0]]);
        let s = affine_scene(&t, 40, 30, &m);
        for (x, y) in [(5usize, 5usize), (20, 12), (30, 20)] {
            let (u, v) = s.truth.get(x, y);
            let tx = x as f64 + u as f64;
            let ty = y as f64 + v as f64;
            // frame 2 rendered at the target equals frame 1 at the source
            let inv = inverse(&m);
            let (sx, sy) = inv.apply(tx, ty);
            assert!((sx - x as f64).abs() < 1e-5 && (sy - y as f64).abs() < 1e-5);
            for c in 0..3 {
                assert!((t.eval(sx, sy)[c] - s.img1.at(x, y, c)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn outlier_injection_rate() {
        let f = FlowField::zeros(100, 100);
        let (g, hit) = inject_outliers(&f, 0.3, 4.0, 10.0, 1);
        let n = hit.iter().filter(|&&h| h).count();
        assert!((2700..3300).contains(&n));
        for (i, &h) in hit.iter().enumerate() {
            let e = (g.u()[i] as f64).hypot(g.v()[i] as f64);
            assert_eq!(h, e > 0.0);
            if h {
                assert!((4.0 - 1e-5..10.0 + 1e-5).contains(&e));
            }
        }
    }
}
