//! Single-scale variational refinement with warping.
//!
//! Energy, with `Psi(s2) = sqrt(s2 + eps^2)`:
//!
//! ```text
//! E(w) = sum_{p in mask} Psi(D_p(w)) + alpha * sum_p Psi(S_p(w))
//! D_p  = mean_c [ (I2_c(p + w) - I1_c(p))^2
//!                 + gamma * |grad I2_c(p + w) - grad I1_c(p)|^2 ]
//! S_p  = |forward diff u|^2 + |forward diff v|^2   (zero across the far border)
//! ```
//!
//! `I1` and `I2` are the input channels multiplied by `intensity_scale`.
//! Image gradients are central differences with replicate borders; `I2` and
//! its derivatives are sampled bilinearly with clamped borders. The mask is
//! fixed from the initial flow: pixels whose initial target leaves frame 2
//! are never changed but still enter their neighbors' smoothness terms.
//!
//! Each outer iteration linearizes the data term around the current flow
//! and solves for an increment by lagged-diffusivity fixed-point iterations,
//! each a red-black SOR solve of the resulting quadratic. The increment is
//! halved until the true energy does not increase.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{sample_plane, FlowField, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub outer_iterations: usize,
    pub inner_fixed_point_iterations: usize,
    pub sor_iterations: usize,
    pub sor_omega: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub robust_epsilon: f64,
    /// Factor applied to image values before they enter the data term.
    pub intensity_scale: f64,
}

impl Default for VariationalParams {
    fn default() -> Self {
        VariationalParams {
            outer_iterations: 5,
            inner_fixed_point_iterations: 5,
            sor_iterations: 30,
            sor_omega: 1.85,
            alpha: 1.0,
            gamma: 0.72,
            robust_epsilon: 1e-3,
            intensity_scale: 0.1,
        }
    }
}

impl VariationalParams {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 {
            return Err(Error::invalid("at least one outer iteration required"));
        }
        if !(self.sor_omega > 0.0 && self.sor_omega < 2.0) {
            return Err(Error::invalid("SOR omega must lie in (0, 2)"));
        }
        if !(self.alpha >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::invalid("alpha and gamma must be non-negative"));
        }
        if !(self.robust_epsilon > 0.0) {
            return Err(Error::invalid("robust epsilon must be positive"));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::invalid("intensity scale must be positive"));
        }
        Ok(())
    }

    #[inline]
    fn psi(&self, s2: f64) -> f64 {
        (s2 + self.robust_epsilon * self.robust_epsilon).sqrt()
    }

    #[inline]
    fn psi_prime(&self, s2: f64) -> f64 {
        0.5 / self.psi(s2)
    }
}

/// True where the flow is optimized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimizationDomainMask {
    pub width: usize,
    pub height: usize,
    pub active: Vec<bool>,
}

impl OptimizationDomainMask {
    #[inline]
    pub fn is_active(&self, x: usize, y: usize) -> bool {
        self.active[y * self.width + x]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// False exactly where `p + w_init(p)` leaves `[0, W-1] x [0, H-1]` (and at
/// invalid pixels of `w_init`).
pub fn build_mask(w_init: &FlowField, dims: (usize, usize)) -> OptimizationDomainMask {
    let (w, h) = dims;
    let active = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x >= w_init.width() || y >= w_init.height() || !w_init.is_valid(x, y) {
                return false;
            }
            let (u, v) = w_init.get(x, y);
            let tx = x as f64 + u as f64;
            let ty = y as f64 + v as f64;
            tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f64 && ty <= (h - 1) as f64
        })
        .collect();
    OptimizationDomainMask {
        width: w,
        height: h,
        active,
    }
}

/// Central differences with replicate borders.
fn gradients(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = 0.5 * (plane[y * w + (x + 1).min(w - 1)] - plane[y * w + x.saturating_sub(1)]);
            gy[i] = 0.5 * (plane[(y + 1).min(h - 1) * w + x] - plane[y.saturating_sub(1) * w + x]);
        }
    }
    (gx, gy)
}

struct Channel {
    i1: Vec<f64>,
    i1x: Vec<f64>,
    i1y: Vec<f64>,
    i2: Vec<f64>,
    i2x: Vec<f64>,
    i2y: Vec<f64>,
    i2xx: Vec<f64>,
    i2xy: Vec<f64>,
    i2yx: Vec<f64>,
    i2yy: Vec<f64>,
}

struct Frames {
    width: usize,
    height: usize,
    channels: Vec<Channel>,
}

impl Frames {
    fn new(img1: &Image, img2: &Image, scale: f64) -> Result<Self> {
        if img1.dims() != img2.dims() {
            return Err(Error::DimensionMismatch {
                expected: img1.dims(),
                found: img2.dims(),
            });
        }
        if img1.channels() != img2.channels() {
            return Err(Error::invalid("frames have different channel counts"));
        }
        let (w, h) = img1.dims();
        let channels = (0..img1.channels())
            .map(|c| {
                let i1: Vec<f64> = img1.plane(c).into_iter().map(|v| v * scale).collect();
                let i2: Vec<f64> = img2.plane(c).into_iter().map(|v| v * scale).collect();
                let (i1x, i1y) = gradients(&i1, w, h);
                let (i2x, i2y) = gradients(&i2, w, h);
                let (i2xx, i2xy) = gradients(&i2x, w, h);
                let (i2yx, i2yy) = gradients(&i2y, w, h);
                Channel {
                    i1,
                    i1x,
                    i1y,
                    i2,
                    i2x,
                    i2y,
                    i2xx,
                    i2xy,
                    i2yx,
                    i2yy,
                }
            })
            .collect();
        Ok(Frames {
            width: w,
            height: h,
            channels,
        })
    }

    fn data_term(&self, i: usize, u: f64, v: f64, gamma: f64) -> f64 {
        let (w, h) = (self.width, self.height);
        let (x, y) = ((i % w) as f64 + u, (i / w) as f64 + v);
        let mut acc = 0.0;
        for ch in &self.channels {
            let dz = sample_plane(&ch.i2, w, h, x, y) - ch.i1[i];
            let dxz = sample_plane(&ch.i2x, w, h, x, y) - ch.i1x[i];
            let dyz = sample_plane(&ch.i2y, w, h, x, y) - ch.i1y[i];
            acc += dz * dz + gamma * (dxz * dxz + dyz * dyz);
        }
        acc / self.channels.len() as f64
    }
}

/// Squared forward-difference flow gradient at `i`.
#[inline]
fn smoothness_term(u: &[f64], v: &[f64], i: usize, w: usize, h: usize) -> f64 {
    let (x, y) = (i % w, i / w);
    let mut s = 0.0;
    if x + 1 < w {
        s += (u[i + 1] - u[i]).powi(2) + (v[i + 1] - v[i]).powi(2);
    }
    if y + 1 < h {
        s += (u[i + w] - u[i]).powi(2) + (v[i + w] - v[i]).powi(2);
    }
    s
}

fn energy_of(frames: &Frames, u: &[f64], v: &[f64], params: &VariationalParams, mask: &OptimizationDomainMask) -> f64 {
    let (w, h) = (frames.width, frames.height);
    let per_pixel: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let data = if mask.active[i] {
                params.psi(frames.data_term(i, u[i], v[i], params.gamma))
            } else {
                0.0
            };
            data + params.alpha * params.psi(smoothness_term(u, v, i, w, h))
        })
        .collect();
    // fixed summation order keeps the result independent of thread count
    per_pixel.iter().sum()
}

fn check_inputs(img1: &Image, w: &FlowField, mask: &OptimizationDomainMask) -> Result<()> {
    if w.dims() != img1.dims() {
        return Err(Error::DimensionMismatch {
            expected: img1.dims(),
            found: w.dims(),
        });
    }
    if (mask.width, mask.height) != img1.dims() {
        return Err(Error::DimensionMismatch {
            expected: img1.dims(),
            found: (mask.width, mask.height),
        });
    }
    Ok(())
}

fn widen(flow: &FlowField) -> (Vec<f64>, Vec<f64>) {
    (
        flow.u().iter().map(|&a| a as f64).collect(),
        flow.v().iter().map(|&a| a as f64).collect(),
    )
}

/// Energy of flow `w` for the pair, with the data term restricted to `mask`.
pub fn energy(
    img1: &Image,
    img2: &Image,
    w: &FlowField,
    params: &VariationalParams,
    mask: &OptimizationDomainMask,
) -> Result<f64> {
    let frames = Frames::new(img1, img2, params.intensity_scale)?;
    check_inputs(img1, w, mask)?;
    let (u, v) = widen(w);
    Ok(energy_of(&frames, &u, &v, params, mask))
}

/// Data term linearized around the current flow:
/// `D(du, dv) = j11 du^2 + 2 j12 du dv + j22 dv^2 + 2 (b1 du + b2 dv) + c0`.
#[derive(Clone, Copy, Default)]
struct Quad {
    j11: f64,
    j12: f64,
    j22: f64,
    b1: f64,
    b2: f64,
    c0: f64,
}

impl Quad {
    #[inline]
    fn eval(&self, du: f64, dv: f64) -> f64 {
        let d = self.j11 * du * du
            + 2.0 * self.j12 * du * dv
            + self.j22 * dv * dv
            + 2.0 * (self.b1 * du + self.b2 * dv)
            + self.c0;
        d.max(0.0)
    }
}

fn linearize(frames: &Frames, u: &[f64], v: &[f64], mask: &OptimizationDomainMask, gamma: f64) -> Vec<Quad> {
    let (w, h) = (frames.width, frames.height);
    let norm = 1.0 / frames.channels.len() as f64;
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !mask.active[i] {
                return Quad::default();
            }
            let (x, y) = ((i % w) as f64 + u[i], (i / w) as f64 + v[i]);
            let mut q = Quad::default();
            for ch in &frames.channels {
                let s = |p: &[f64]| sample_plane(p, w, h, x, y);
                let (ix, iy) = (s(&ch.i2x), s(&ch.i2y));
                let iz = s(&ch.i2) - ch.i1[i];
                let (ixx, ixy, iyx, iyy) = (s(&ch.i2xx), s(&ch.i2xy), s(&ch.i2yx), s(&ch.i2yy));
                let ixz = ix - ch.i1x[i];
                let iyz = iy - ch.i1y[i];
                q.j11 += ix * ix + gamma * (ixx * ixx + iyx * iyx);
                q.j12 += ix * iy + gamma * (ixx * ixy + iyx * iyy);
                q.j22 += iy * iy + gamma * (ixy * ixy + iyy * iyy);
                q.b1 += iz * ix + gamma * (ixz * ixx + iyz * iyx);
                q.b2 += iz * iy + gamma * (ixz * ixy + iyz * iyy);
                q.c0 += iz * iz + gamma * (ixz * ixz + iyz * iyz);
            }
            Quad {
                j11: q.j11 * norm,
                j12: q.j12 * norm,
                j22: q.j22 * norm,
                b1: q.b1 * norm,
                b2: q.b2 * norm,
                c0: q.c0 * norm,
            }
        })
        .collect()
}

/// Quadratic model of one fixed-point step: data weights `psi_d`, smoothness
/// weights `g` (one per pixel, applied to its forward differences).
struct Surrogate<'a> {
    width: usize,
    height: usize,
    quads: &'a [Quad],
    psi_d: Vec<f64>,
    g: Vec<f64>,
    alpha: f64,
}

impl Surrogate<'_> {
    fn value(&self, u: &[f64], v: &[f64], du: &[f64], dv: &[f64]) -> f64 {
        let (w, h) = (self.width, self.height);
        let terms: Vec<f64> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let mut s = 0.0;
                if x + 1 < w {
                    s += (u[i + 1] + du[i + 1] - u[i] - du[i]).powi(2) + (v[i + 1] + dv[i + 1] - v[i] - dv[i]).powi(2);
                }
                if y + 1 < h {
                    s += (u[i + w] + du[i + w] - u[i] - du[i]).powi(2) + (v[i + w] + dv[i + w] - v[i] - dv[i]).powi(2);
                }
                self.psi_d[i] * self.quads[i].eval(du[i], dv[i]) + self.alpha * self.g[i] * s
            })
            .collect();
        terms.iter().sum()
    }

    /// One red-black SOR sweep over active pixels.
    #[allow(clippy::too_many_arguments)]
    fn sor_sweep(
        &self,
        u: &[f64],
        v: &[f64],
        du: &mut Vec<f64>,
        dv: &mut Vec<f64>,
        scratch: &mut (Vec<f64>, Vec<f64>),
        mask: &[bool],
        omega: f64,
    ) {
        let (w, h) = (self.width, self.height);
        for color in 0..2 {
            {
                let (du_r, dv_r) = (&*du, &*dv);
                scratch
                    .0
                    .par_chunks_mut(w)
                    .zip(scratch.1.par_chunks_mut(w))
                    .enumerate()
                    .for_each(|(y, (nu, nv))| {
                        for x in 0..w {
                            let i = y * w + x;
                            nu[x] = du_r[i];
                            nv[x] = dv_r[i];
                            if (x + y) % 2 != color || !mask[i] {
                                continue;
                            }
                            let mut wsum = 0.0;
                            let mut su = 0.0;
                            let mut sv = 0.0;
                            let mut add = |j: usize, g: f64| {
                                wsum += g;
                                su += g * (u[j] + du_r[j] - u[i]);
                                sv += g * (v[j] + dv_r[j] - v[i]);
                            };
                            if x + 1 < w {
                                add(i + 1, self.g[i]);
                            }
                            if x > 0 {
                                add(i - 1, self.g[i - 1]);
                            }
                            if y + 1 < h {
                                add(i + w, self.g[i]);
                            }
                            if y > 0 {
                                add(i - w, self.g[i - w]);
                            }
                            let q = &self.quads[i];
                            let pd = self.psi_d[i];
                            let a = self.alpha;
                            let den_u = pd * q.j11 + a * wsum;
                            if den_u > 0.0 {
                                let target = (-pd * (q.j12 * nv[x] + q.b1) + a * su) / den_u;
                                nu[x] += omega * (target - nu[x]);
                            }
                            let den_v = pd * q.j22 + a * wsum;
                            if den_v > 0.0 {
                                let target = (-pd * (q.j12 * nu[x] + q.b2) + a * sv) / den_v;
                                nv[x] += omega * (target - nv[x]);
                            }
                        }
                    });
            }
            std::mem::swap(du, &mut scratch.0);
            std::mem::swap(dv, &mut scratch.1);
        }
    }
}

/// One fixed-point step as seen by [`refine_observed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub outer: usize,
    pub inner: usize,
    /// Surrogate at the increment before and after the SOR solve.
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

/// Refines `w_init` at full resolution; inactive pixels are returned
/// bit-identical.
pub fn refine(img1: &Image, img2: &Image, w_init: &FlowField, params: &VariationalParams) -> Result<FlowField> {
    refine_observed(img1, img2, w_init, params, |_| {})
}

/// As [`refine`], reporting the surrogate around every SOR solve.
pub fn refine_observed(
    img1: &Image,
    img2: &Image,
    w_init: &FlowField,
    params: &VariationalParams,
    mut observer: impl FnMut(InnerStep),
) -> Result<FlowField> {
    params.validate()?;
    let frames = Frames::new(img1, img2, params.intensity_scale)?;
    let mask = build_mask(w_init, img1.dims());
    check_inputs(img1, w_init, &mask)?;
    let (w, h) = img1.dims();
    if mask.active_count() == 0 {
        return Ok(w_init.clone());
    }
    let (mut u, mut v) = widen(w_init);
    let mut current = energy_of(&frames, &u, &v, params, &mask);
    let mut scratch = (vec![0.0; w * h], vec![0.0; w * h]);

    for outer in 0..params.outer_iterations {
        let quads = linearize(&frames, &u, &v, &mask, params.gamma);
        let mut du = vec![0.0; w * h];
        let mut dv = vec![0.0; w * h];
        for inner in 0..params.inner_fixed_point_iterations {
            let psi_d: Vec<f64> = (0..w * h)
                .map(|i| {
                    if mask.active[i] {
                        params.psi_prime(quads[i].eval(du[i], dv[i]))
                    } else {
                        0.0
                    }
                })
                .collect();
            let (tu, tv): (Vec<f64>, Vec<f64>) = (0..w * h).map(|i| (u[i] + du[i], v[i] + dv[i])).unzip();
            let g: Vec<f64> = (0..w * h)
                .map(|i| params.psi_prime(smoothness_term(&tu, &tv, i, w, h)))
                .collect();
            let surrogate = Surrogate {
                width: w,
                height: h,
                quads: &quads,
                psi_d,
                g,
                alpha: params.alpha,
            };
            let before = surrogate.value(&u, &v, &du, &dv);
            for _ in 0..params.sor_iterations {
                surrogate.sor_sweep(&u, &v, &mut du, &mut dv, &mut scratch, &mask.active, params.sor_omega);
            }
            let after = surrogate.value(&u, &v, &du, &dv);
            observer(InnerStep {
                outer,
                inner,
                surrogate_before: before,
                surrogate_after: after,
            });
        }

        // accept the largest step 2^-k that does not raise the energy
        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..12 {
            let (cu, cv) = take_step(&u, &v, &du, &dv, step);
            let e = energy_of(&frames, &cu, &cv, params, &mask);
            if e <= current {
                u = cu;
                v = cv;
                current = e;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let u: Vec<f32> = u.iter().map(|&a| a as f32).collect();
    let v: Vec<f32> = v.iter().map(|&a| a as f32).collect();
    FlowField::from_parts(w, h, u, v, w_init.valid().to_vec())
}

/// `w + t dw`, rounded to the f32 values that will be returned.
fn take_step(u: &[f64], v: &[f64], du: &[f64], dv: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let apply = |a: &[f64], d: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(d)
            .map(|(&a, &d)| if d == 0.0 { a } else { (a + t * d) as f32 as f64 })
            .collect()
    };
    (apply(u, du), apply(v, dv))
}
