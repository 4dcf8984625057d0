//! Raster containers shared by every stage: multi-channel float images and
//! dense flow fields, plus the sampling and filtering primitives they need.

use std::cell::Cell;
use std::path::Path;

use crate::error::{open_error, Error, Result};

/// Color space tag of an [`Image`]. Determines the channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Gray,
    Rgb,
    CieLab,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::CieLab => 3,
        }
    }
}

/// Row-major, channel-interleaved float raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, colorspace: ColorSpace, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        let expected = width * height * colorspace.channels();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "sample count {} does not match {width}x{height}x{}",
                data.len(),
                colorspace.channels()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image samples".into()));
        }
        Ok(Image {
            width,
            height,
            colorspace,
            data,
        })
    }

    /// Builds an image from a per-sample generator `f(x, y, channel)`.
    ///
    /// Panics if the generator produces a non-finite value.
    pub fn from_fn(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let ch = colorspace.channels();
        let mut data = Vec::with_capacity(width * height * ch);
        for y in 0..height {
            for x in 0..width {
                for c in 0..ch {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, colorspace, data).expect("generator produced an invalid image")
    }

    pub fn constant(width: usize, height: usize, colorspace: ColorSpace, value: f64) -> Self {
        Image::from_fn(width, height, colorspace, |_, _, _| value)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    #[inline]
    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    /// Copy of one channel as a dense plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        let ch = self.channels();
        self.data.iter().skip(c).step_by(ch).copied().collect()
    }

    pub(crate) fn from_planes(width: usize, height: usize, colorspace: ColorSpace, planes: &[Vec<f64>]) -> Self {
        let ch = colorspace.channels();
        debug_assert_eq!(planes.len(), ch);
        let mut data = vec![0.0; width * height * ch];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * ch + c] = v;
            }
        }
        Image {
            width,
            height,
            colorspace,
            data,
        }
    }

    /// Single-channel intensity in roughly [0, 1].
    ///
    /// CIELab uses L/100, RGB uses Rec. 601 luma weights.
    pub fn luminance(&self) -> Image {
        let data = match self.colorspace {
            ColorSpace::Gray => self.data.clone(),
            ColorSpace::Rgb => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
            ColorSpace::CieLab => self.data.chunks_exact(3).map(|p| p[0] / 100.0).collect(),
        };
        Image {
            width: self.width,
            height: self.height,
            colorspace: ColorSpace::Gray,
            data,
        }
    }

    /// Bilinear sample at a sub-pixel position inside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64, channel: usize) -> Result<f64> {
        let inside = x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64;
        if !inside || channel >= self.channels() {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.sample_clamped(x, y, channel))
    }

    /// Bilinear sample with replicate-clamped borders. Never fails.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64, channel: usize) -> f64 {
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let ch = self.channels();
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let a = self.data[(row0 + x0) * ch + channel];
        let b = self.data[(row0 + x1) * ch + channel];
        let c = self.data[(row1 + x0) * ch + channel];
        let d = self.data[(row1 + x1) * ch + channel];
        lerp2(a, b, c, d, fx, fy)
    }

    /// Loads PNG (8 or 16 bit) or PPM/PGM, scaled to [0, 1].
    pub fn read(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let reader = image::ImageReader::open(path)
            .map_err(|e| open_error(path, e))?
            .with_guessed_format()?;
        let dynamic = reader.decode()?;
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        let gray = matches!(
            dynamic.color(),
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
        );
        if gray {
            let buf = dynamic.into_luma16();
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Image::new(w, h, ColorSpace::Gray, data)
        } else {
            let buf = dynamic.into_rgb16();
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Image::new(w, h, ColorSpace::Rgb, data)
        }
    }

    /// Writes an 8-bit PNG; samples are clamped to [0, 1]. Lab images are
    /// written as their L channel.
    pub fn save_png8(&self, path: impl AsRef<Path>) -> Result<()> {
        let to8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        match self.colorspace {
            ColorSpace::Rgb => {
                let raw = self.data.iter().map(|&v| to8(v)).collect();
                let buf = image::RgbImage::from_raw(w, h, raw).expect("buffer size");
                buf.save(path.as_ref())?;
            }
            ColorSpace::Gray | ColorSpace::CieLab => {
                let lum = self.luminance();
                let raw = lum.data.iter().map(|&v| to8(v)).collect();
                let buf = image::GrayImage::from_raw(w, h, raw).expect("buffer size");
                buf.save(path.as_ref())?;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn clamp_axis(v: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let v = v.clamp(0.0, max);
    let i0 = v.floor();
    let f = v - i0;
    let i0 = i0 as usize;
    (i0, (i0 + 1).min(len - 1), f)
}

#[inline]
pub(crate) fn lerp2(a: f64, b: f64, c: f64, d: f64, fx: f64, fy: f64) -> f64 {
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}

/// Bilinear sample of a single plane with replicate-clamped borders.
#[inline]
pub(crate) fn sample_plane(plane: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let (x0, x1, fx) = clamp_axis(x, width);
    let (y0, y1, fy) = clamp_axis(y, height);
    lerp2(
        plane[y0 * width + x0],
        plane[y0 * width + x1],
        plane[y1 * width + x0],
        plane[y1 * width + x1],
        fx,
        fy,
    )
}

/// Dense 2-vector displacement raster with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut flow = FlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                flow.set(x, y, u, v);
            }
        }
        flow
    }

    pub fn from_parts(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::invalid("flow component length does not match dimensions"));
        }
        for i in 0..n {
            if valid[i] && !(u[i].is_finite() && v[i].is_finite()) {
                return Err(Error::NonFinite("valid flow vector".into()));
            }
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    #[inline]
    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        self.valid[y * self.width + x] = valid;
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Same vectors with every pixel marked valid.
    pub fn all_valid(mut self) -> Self {
        self.valid.iter_mut().for_each(|v| *v = true);
        self
    }

    /// Bilinear sample of (u, v) at a sub-pixel position, clamped to the domain.
    pub fn sample_clamped(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1, fx) = clamp_axis(x, self.width);
        let (y0, y1, fy) = clamp_axis(y, self.height);
        let idx = [
            y0 * self.width + x0,
            y0 * self.width + x1,
            y1 * self.width + x0,
            y1 * self.width + x1,
        ];
        let u = lerp2(
            self.u[idx[0]] as f64,
            self.u[idx[1]] as f64,
            self.u[idx[2]] as f64,
            self.u[idx[3]] as f64,
            fx,
            fy,
        );
        let v = lerp2(
            self.v[idx[0]] as f64,
            self.v[idx[1]] as f64,
            self.v[idx[2]] as f64,
            self.v[idx[3]] as f64,
            fx,
            fy,
        );
        (u, v)
    }

    /// Whether all four bilinear taps around `(x, y)` are valid.
    pub(crate) fn taps_valid(&self, x: f64, y: f64) -> bool {
        let (x0, x1, _) = clamp_axis(x, self.width);
        let (y0, y1, _) = clamp_axis(y, self.height);
        self.valid[y0 * self.width + x0]
            && self.valid[y0 * self.width + x1]
            && self.valid[y1 * self.width + x0]
            && self.valid[y1 * self.width + x1]
    }
}

thread_local! {
    static RESAMPLE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of image or flow resampling operations performed on this thread.
///
/// Incremented by pyramid construction and flow upscaling.
pub fn resample_count() -> u64 {
    RESAMPLE_CALLS.with(Cell::get)
}

pub(crate) fn note_resample() {
    RESAMPLE_CALLS.with(|c| c.set(c.get() + 1));
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable convolution of one plane with a symmetric kernel, replicate borders.
pub(crate) fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, width as isize - 1) as usize;
                acc += w * row[sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - r).clamp(0, height as isize - 1) as usize;
                acc += w * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub(crate) fn gaussian_blur(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    convolve_separable(plane, width, height, &gaussian_kernel(sigma))
}

/// Value at fraction `q` of the sorted samples (nearest-rank).
pub(crate) fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
