use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{open_error, Error, Result};
use crate::raster::FlowField;

const ZERO: f64 = 32768.0;
const SCALE: f64 = 64.0;

/// Stored 16-bit value for one flow component.
#[inline]
pub fn kitti_encode(component: f32) -> u16 {
    (component as f64 * SCALE + ZERO).round().clamp(0.0, 65535.0) as u16
}

#[inline]
pub fn kitti_decode(stored: u16) -> f32 {
    ((stored as f64 - ZERO) / SCALE) as f32
}

/// 16-bit RGB PNG: `R = 64 u + 2^15`, `G = 64 v + 2^15`, `B = valid`.
pub fn write_kitti_png(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let (w, h) = flow.dims();
    let mut raw = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        raw.push(kitti_encode(flow.u()[i]));
        raw.push(kitti_encode(flow.v()[i]));
        raw.push(flow.valid()[i] as u16);
    }
    let buf = ImageBuffer::<Rgb<u16>, _>::from_raw(w as u32, h as u32, raw).expect("buffer size");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_kitti_png(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| open_error(path, e))?
        .with_guessed_format()?;
    let img = match reader.decode()? {
        image::DynamicImage::ImageRgb16(b) => b,
        other => {
            return Err(Error::Format(format!(
                "{}: KITTI flow must be 16-bit RGB, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for p in img.pixels() {
        u.push(kitti_decode(p[0]));
        v.push(kitti_decode(p[1]));
        valid.push(p[2] > 0);
    }
    FlowField::from_parts(w, h, u, v, valid)
}
