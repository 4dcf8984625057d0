use crate::raster::Image;

/// Largest descriptor the fixed-size bit store can hold.
pub const MAX_CENSUS_BITS: usize = 256;

/// Default half-width of the comparison window (7x7).
pub const CENSUS_RADIUS: usize = 3;

/// Census bit string.
///
/// Bit `c * n + k` is set when neighbor `k` of channel `c` is strictly
/// greater than the window center, where the `n = (2r+1)^2 - 1` neighbors are
/// enumerated in raster order (top row first, left to right) skipping the
/// center itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CensusDescriptor {
    words: [u64; 4],
    len: u16,
}

impl CensusDescriptor {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_CENSUS_BITS);
        CensusDescriptor {
            words: [0; 4],
            len: len as u16,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut d = CensusDescriptor::zeros(len);
        for i in 0..len {
            d.set(i);
        }
        d
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len());
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Hamming distance between two census strings of equal length.
#[inline]
pub fn census_distance(a: &CensusDescriptor, b: &CensusDescriptor) -> u32 {
    debug_assert_eq!(a.len, b.len);
    (a.words[0] ^ b.words[0]).count_ones()
        + (a.words[1] ^ b.words[1]).count_ones()
        + (a.words[2] ^ b.words[2]).count_ones()
        + (a.words[3] ^ b.words[3]).count_ones()
}

/// Number of census bits for a window radius and channel count.
pub fn census_bits(radius: usize, channels: usize) -> usize {
    let side = 2 * radius + 1;
    (side * side - 1) * channels
}

/// 7x7 census over all channels at a sub-pixel position.
pub fn census_at(img: &Image, x: f64, y: f64) -> CensusDescriptor {
    census_at_radius(img, x, y, CENSUS_RADIUS)
}

/// Census over a `(2r+1)^2` window at a sub-pixel position.
///
/// All window samples share the fractional offset of `(x, y)` and are read
/// with replicate-clamped borders, so any position is accepted.
pub fn census_at_radius(img: &Image, x: f64, y: f64, radius: usize) -> CensusDescriptor {
    let ch = img.channels();
    let nbits = census_bits(radius, ch);
    assert!(nbits <= MAX_CENSUS_BITS, "census window too large for {ch} channels");
    let neighbors = nbits / ch;
    let (w, h) = img.dims();
    let data = img.data();

    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let ix = x.floor() as isize;
    let iy = y.floor() as isize;
    let fx = x - ix as f64;
    let fy = y - iy as f64;
    let r = radius as isize;
    if ch == 3 && ix >= r && iy >= r && ix + r + 1 < w as isize && iy + r + 1 < h as isize {
        return census_interior::<3>(data, w, ix as usize, iy as usize, fx, fy, radius, nbits);
    }
    let cx = |i: isize| i.clamp(0, w as isize - 1) as usize;
    let cy = |i: isize| i.clamp(0, h as isize - 1) as usize;

    let sample = |dx: isize, dy: isize, out: &mut [f64; 4]| {
        let x0 = cx(ix + dx);
        let x1 = cx(ix + dx + 1);
        let y0 = cy(iy + dy);
        let y1 = cy(iy + dy + 1);
        for c in 0..ch {
            let a = data[(y0 * w + x0) * ch + c];
            let b = data[(y0 * w + x1) * ch + c];
            let cc = data[(y1 * w + x0) * ch + c];
            let d = data[(y1 * w + x1) * ch + c];
            out[c] = crate::raster::lerp2(a, b, cc, d, fx, fy);
        }
    };

    let mut center = [0.0; 4];
    sample(0, 0, &mut center);
    let mut desc = CensusDescriptor::zeros(nbits);
    let mut k = 0;
    let mut vals = [0.0; 4];
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            sample(dx, dy, &mut vals);
            for c in 0..ch {
                let bit = c * neighbors + k;
                desc.words[bit / 64] |= ((vals[c] > center[c]) as u64) << (bit % 64);
            }
            k += 1;
        }
    }
    desc
}

/// Same bits as the clamped path for windows whose 2x2 footprints all lie
/// inside the image.
#[allow(clippy::too_many_arguments)]
fn census_interior<const CH: usize>(
    data: &[f64],
    w: usize,
    ix: usize,
    iy: usize,
    fx: f64,
    fy: f64,
    radius: usize,
    nbits: usize,
) -> CensusDescriptor {
    let neighbors = nbits / CH;
    let stride = w * CH;
    let sample = |top_left: usize| -> [f64; CH] {
        let mut out = [0.0; CH];
        for (c, o) in out.iter_mut().enumerate() {
            let i = top_left + c;
            *o = crate::raster::lerp2(data[i], data[i + CH], data[i + stride], data[i + stride + CH], fx, fy);
        }
        out
    };
    let center = sample(iy * stride + ix * CH);
    let mut desc = CensusDescriptor::zeros(nbits);
    let mut k = 0;
    for y in iy - radius..=iy + radius {
        for x in ix - radius..=ix + radius {
            if x == ix && y == iy {
                continue;
            }
            let vals = sample(y * stride + x * CH);
            for c in 0..CH {
                let bit = c * neighbors + k;
                desc.words[bit / 64] |= ((vals[c] > center[c]) as u64) << (bit % 64);
            }
            k += 1;
        }
    }
    desc
}
