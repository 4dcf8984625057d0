use crate::raster::{percentile, ColorSpace, FlowField, Image};

// Hue segment lengths: red-yellow, yellow-green, green-cyan, cyan-blue,
// blue-magenta, magenta-red.
const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// The 55-entry Middlebury color wheel, channels in 0..=255.
pub fn color_wheel() -> Vec<[f64; 3]> {
    let ramp = |i: usize, n: usize| (255.0 * i as f64 / n as f64).floor();
    let mut wheel = Vec::with_capacity(55);
    let [ry, yg, gc, cb, bm, mr] = SEGMENTS;
    wheel.extend((0..ry).map(|i| [255.0, ramp(i, ry), 0.0]));
    wheel.extend((0..yg).map(|i| [255.0 - ramp(i, yg), 255.0, 0.0]));
    wheel.extend((0..gc).map(|i| [0.0, 255.0, ramp(i, gc)]));
    wheel.extend((0..cb).map(|i| [0.0, 255.0 - ramp(i, cb), 255.0]));
    wheel.extend((0..bm).map(|i| [ramp(i, bm), 0.0, 255.0]));
    wheel.extend((0..mr).map(|i| [255.0, 0.0, 255.0 - ramp(i, mr)]));
    wheel
}

/// 8-bit color of a flow vector already divided by the maximum magnitude.
/// Vectors beyond unit length are darkened.
pub fn flow_color(u: f64, v: f64, wheel: &[[f64; 3]]) -> [u8; 3] {
    let n = wheel.len();
    let rad = u.hypot(v);
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
    let k0 = fk.floor() as usize;
    let k1 = if k0 + 1 == n { 0 } else { k0 + 1 };
    let f = fk - k0 as f64;
    std::array::from_fn(|c| {
        let col = (1.0 - f) * wheel[k0][c] / 255.0 + f * wheel[k1][c] / 255.0;
        let col = if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        };
        (255.0 * col).floor() as u8
    })
}

/// Color-wheel rendering; saturation grows with magnitude up to
/// `max_magnitude` (default: 99th percentile of valid magnitudes). Zero flow
/// is white, invalid pixels black.
pub fn visualize(flow: &FlowField, max_magnitude: Option<f64>) -> Image {
    let (w, h) = flow.dims();
    let max = max_magnitude.unwrap_or_else(|| {
        let mags: Vec<f64> = (0..w * h)
            .filter(|&i| flow.valid()[i])
            .map(|i| (flow.u()[i] as f64).hypot(flow.v()[i] as f64))
            .collect();
        if mags.is_empty() {
            1.0
        } else {
            percentile(&mags, 0.99)
        }
    });
    let max = if max > 0.0 && max.is_finite() { max } else { 1.0 };
    let wheel = color_wheel();
    let mut data = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        let rgb = if flow.valid()[i] {
            flow_color(flow.u()[i] as f64 / max, flow.v()[i] as f64 / max, &wheel)
        } else {
            [0, 0, 0]
        };
        data.extend(rgb.iter().map(|&c| c as f64 / 255.0));
    }
    Image::new(w, h, ColorSpace::Rgb, data).expect("finite colors")
}
