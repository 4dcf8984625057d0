use rayon::prelude::*;

use crate::descriptors::{
    census_at_radius, census_distance, sift_at, sift_distance, sift_distance_slices, CensusDescriptor, SiftField,
    SIFT_LEN,
};
use crate::raster::Image;

use super::{DescriptorKind, MatchingParams};

/// Descriptor distance for a candidate flow vector, with frame-1 descriptors
/// cached on the integer lattice.
pub(crate) struct CostModel<'a> {
    width: usize,
    height: usize,
    inner: Inner<'a>,
}

enum Inner<'a> {
    Census {
        reference: Vec<CensusDescriptor>,
        target: &'a Image,
        radius: usize,
    },
    Sift {
        reference: Vec<f32>,
        target: Box<SiftField>,
    },
}

impl<'a> CostModel<'a> {
    pub(crate) fn new(img1: &Image, img2: &'a Image, params: &MatchingParams) -> Self {
        let (w, h) = img1.dims();
        let inner = match params.descriptor {
            DescriptorKind::CensusCieLab => {
                let radius = params.patch_radius;
                let reference = (0..h)
                    .into_par_iter()
                    .flat_map_iter(|y| (0..w).map(move |x| census_at_radius(img1, x as f64, y as f64, radius)))
                    .collect();
                Inner::Census {
                    reference,
                    target: img2,
                    radius,
                }
            }
            DescriptorKind::Sift => {
                let radius = params.patch_radius as f64;
                let source = SiftField::new(img1, radius);
                let reference = (0..h)
                    .into_par_iter()
                    .flat_map_iter(|y| {
                        let source = &source;
                        (0..w).flat_map(move |x| source.descriptor_at(x as f64, y as f64).values)
                    })
                    .collect();
                Inner::Sift {
                    reference,
                    target: Box::new(SiftField::new(img2, radius)),
                }
            }
        };
        CostModel {
            width: w,
            height: h,
            inner,
        }
    }

    /// Cost of matching frame-1 pixel `(x, y)` to `(x + u, y + v)`;
    /// infinite when the target leaves frame 2.
    #[inline]
    pub(crate) fn cost(&self, x: usize, y: usize, u: f32, v: f32) -> f64 {
        let tx = x as f64 + u as f64;
        let ty = y as f64 + v as f64;
        if !in_domain(tx, ty, self.width, self.height) {
            return f64::INFINITY;
        }
        let i = y * self.width + x;
        match &self.inner {
            Inner::Census {
                reference,
                target,
                radius,
            } => census_distance(&reference[i], &census_at_radius(target, tx, ty, *radius)) as f64,
            Inner::Sift { reference, target } => {
                let d = target.descriptor_at(tx, ty);
                sift_distance_slices(&reference[i * SIFT_LEN..(i + 1) * SIFT_LEN], &d.values)
            }
        }
    }
}

#[inline]
pub(crate) fn in_domain(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
}

/// Matching cost recomputed from scratch, independent of any cache.
pub fn matching_cost(img1: &Image, img2: &Image, x: usize, y: usize, u: f32, v: f32, params: &MatchingParams) -> f64 {
    let tx = x as f64 + u as f64;
    let ty = y as f64 + v as f64;
    if !in_domain(tx, ty, img2.width(), img2.height()) {
        return f64::INFINITY;
    }
    match params.descriptor {
        DescriptorKind::CensusCieLab => {
            let a = census_at_radius(img1, x as f64, y as f64, params.patch_radius);
            let b = census_at_radius(img2, tx, ty, params.patch_radius);
            census_distance(&a, &b) as f64
        }
        DescriptorKind::Sift => {
            let r = params.patch_radius as f64;
            sift_distance(&sift_at(img1, x as f64, y as f64, r), &sift_at(img2, tx, ty, r))
        }
    }
}
