//! sRGB <-> CIELab conversion under the D65 white point.

use crate::error::{Error, Result};
use crate::raster::{ColorSpace, Image};

const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.240481340, -1.537151516, -0.498536326],
    [-0.969254949, 1.875990001, 0.041555926],
    [0.055646639, -0.204041338, 1.057311069],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c > 0.04045 {
        ((c + 0.055) / 1.055).powf(2.4)
    } else {
        c / 12.92
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c > 0.0031308 {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    } else {
        c * 12.92
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

fn mat3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Converts one sRGB triple in [0, 1] to (L, a, b).
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let xyz = mat3(&RGB_TO_XYZ, lin);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE[0],
        lab_f_inv(fy) * WHITE[1],
        lab_f_inv(fz) * WHITE[2],
    ];
    mat3(&XYZ_TO_RGB, xyz).map(linear_to_srgb)
}

/// Converts a Gray or RGB image with samples in [0, 1] to CIELab.
/// CIELab input is returned unchanged.
pub fn to_cielab(img: &Image) -> Result<Image> {
    if img.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("color conversion input".into()));
    }
    let (w, h) = img.dims();
    match img.colorspace() {
        ColorSpace::CieLab => Ok(img.clone()),
        ColorSpace::Gray => {
            let data = img.data().iter().flat_map(|&g| srgb_to_lab([g, g, g])).collect();
            Image::new(w, h, ColorSpace::CieLab, data)
        }
        ColorSpace::Rgb => {
            let data = img
                .data()
                .chunks_exact(3)
                .flat_map(|p| srgb_to_lab([p[0], p[1], p[2]]))
                .collect();
            Image::new(w, h, ColorSpace::CieLab, data)
        }
    }
}

pub fn to_rgb(img: &Image) -> Result<Image> {
    let (w, h) = img.dims();
    match img.colorspace() {
        ColorSpace::Rgb => Ok(img.clone()),
        ColorSpace::Gray => Image::new(
            w,
            h,
            ColorSpace::Rgb,
            img.data().iter().flat_map(|&g| [g, g, g]).collect(),
        ),
        ColorSpace::CieLab => {
            let data = img
                .data()
                .chunks_exact(3)
                .flat_map(|p| lab_to_srgb([p[0], p[1], p[2]]))
                .collect();
            Image::new(w, h, ColorSpace::Rgb, data)
        }
    }
}
