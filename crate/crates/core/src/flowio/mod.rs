//! Flow files (Middlebury `.flo`, KITTI 16-bit PNG), region masks and
//! color-wheel rendering.

mod flo;
mod kitti;
mod wheel;

use std::path::Path;

use crate::error::{open_error, Result};

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC, FLO_UNKNOWN_THRESHOLD};
pub use kitti::{kitti_decode, kitti_encode, read_kitti_png, write_kitti_png};
pub use wheel::{color_wheel, flow_color, visualize};

use crate::raster::FlowField;

/// Reads `.flo`, or KITTI PNG for `.png` paths.
pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    if is_png(path) {
        read_kitti_png(path)
    } else {
        read_flo(path)
    }
}

/// Writes KITTI PNG for `.png` paths and `.flo` otherwise.
pub fn write_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_kitti_png(path, flow)
    } else {
        write_flo(path, flow)
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Region mask from an 8-bit PNG; nonzero pixels are in the region.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| open_error(path, e))?
        .with_guessed_format()?
        .decode()?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw().into_iter().map(|p| p > 0).collect()))
}

pub fn write_mask_png(path: impl AsRef<Path>, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let raw = mask.iter().map(|&m| if m { 255u8 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(width as u32, height as u32, raw).expect("buffer size");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}
