//! Cine image stacks, sampling, gradients and the resolution pyramid.
//!
//! Continuous coordinates are 1-based: the pixel stored at index `(ix, iy)`
//! sits at `(ix + 1, iy + 1)`. Frame indices are 0-based in the Rust API.

use crate::error::{Error, Result};
use crate::par;

/// Borrowed view of one frame, row-major (`x` fastest).
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub nx: usize,
    pub ny: usize,
    pub data: &'a [f64],
}

impl<'a> FrameView<'a> {
    pub fn new(nx: usize, ny: usize, data: &'a [f64]) -> Result<Self> {
        if nx == 0 || ny == 0 || data.len() != nx * ny {
            return Err(Error::dim(format!("frame of {nx}x{ny} needs {} samples, got {}", nx * ny, data.len())));
        }
        Ok(Self { nx, ny, data })
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.nx + ix]
    }
}

/// A spatiotemporal scalar image stack on an isotropic pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CineSequence {
    nx: usize,
    ny: usize,
    nt: usize,
    pixel_spacing: f64,
    data: Vec<f64>,
}

impl CineSequence {
    pub const MIN_SIDE: usize = 8;

    pub fn new(nx: usize, ny: usize, nt: usize, pixel_spacing: f64, data: Vec<f64>) -> Result<Self> {
        if nx < Self::MIN_SIDE || ny < Self::MIN_SIDE {
            return Err(Error::dim(format!("cine grid {nx}x{ny} is smaller than {0}x{0}", Self::MIN_SIDE)));
        }
        if nt < 2 {
            return Err(Error::dim(format!("cine needs at least 2 frames, got {nt}")));
        }
        Self::new_unchecked_size(nx, ny, nt, pixel_spacing, data)
    }

    /// Like [`CineSequence::new`] but without the minimum-size rule; pyramid
    /// levels and single-frame helpers may be smaller than a valid input.
    pub(crate) fn new_unchecked_size(
        nx: usize,
        ny: usize,
        nt: usize,
        pixel_spacing: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != nx * ny * nt {
            return Err(Error::dim(format!("{nx}x{ny}x{nt} cine needs {} samples, got {}", nx * ny * nt, data.len())));
        }
        if !(pixel_spacing.is_finite() && pixel_spacing > 0.0) {
            return Err(Error::arg(format!("pixel spacing must be positive, got {pixel_spacing}")));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("intensity at sample {k}")));
        }
        Ok(Self { nx, ny, nt, pixel_spacing, data })
    }

    pub fn from_fn(
        nx: usize,
        ny: usize,
        nt: usize,
        pixel_spacing: f64,
        f: impl Fn(f64, f64, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(nx * ny * nt);
        for t in 0..nt {
            for iy in 0..ny {
                for ix in 0..nx {
                    data.push(f((ix + 1) as f64, (iy + 1) as f64, t));
                }
            }
        }
        Self::new(nx, ny, nt, pixel_spacing, data)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn frame_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn frame(&self, t: usize) -> FrameView<'_> {
        let n = self.frame_len();
        FrameView { nx: self.nx, ny: self.ny, data: &self.data[t * n..(t + 1) * n] }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, t: usize) -> f64 {
        self.data[(t * self.ny + iy) * self.nx + ix]
    }

    pub fn with_pixel_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::arg(format!("pixel spacing must be positive, got {spacing}")));
        }
        self.pixel_spacing = spacing;
        Ok(self)
    }

    /// Min-max rescale of the whole stack to [0, 1]. A constant stack maps to zeros.
    pub fn normalized(&self) -> Self {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let data =
            if range > 0.0 { self.data.iter().map(|v| (v - lo) / range).collect() } else { vec![0.0; self.data.len()] };
        Self { data, ..self.clone() }
    }
}

/// Per-pixel image gradient of one frame, intensity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientImage {
    pub nx: usize,
    pub ny: usize,
    pub grad: Vec<[f64; 2]>,
}

impl GradientImage {
    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> [f64; 2] {
        self.grad[iy * self.nx + ix]
    }
}

/// Cell index and fraction for a clamped 1-based coordinate along an axis of
/// length `n`. Returns `(i0, frac, inside)`.
#[inline]
fn cell(coord: f64, n: usize) -> (usize, f64, bool) {
    if n == 1 {
        return (0, 0.0, false);
    }
    let inside = (1.0..=n as f64).contains(&coord);
    let c = coord.clamp(1.0, n as f64) - 1.0;
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, c - i0 as f64, inside)
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (1.0 - w) * a + w * b
}

/// Bilinear interpolation at a 1-based coordinate with clamp-to-edge borders.
pub fn bilinear_sample(frame: FrameView<'_>, x: f64, y: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite(format!("sample coordinate ({x}, {y}); displacement field is corrupted")));
    }
    Ok(bilinear(frame, x, y))
}

#[inline]
pub(crate) fn bilinear(frame: FrameView<'_>, x: f64, y: f64) -> f64 {
    let (ix, fx, _) = cell(x, frame.nx);
    let (iy, fy, _) = cell(y, frame.ny);
    let ix1 = (ix + 1).min(frame.nx - 1);
    let iy1 = (iy + 1).min(frame.ny - 1);
    let top = lerp(frame.at(ix, iy), frame.at(ix1, iy), fx);
    let bottom = lerp(frame.at(ix, iy1), frame.at(ix1, iy1), fx);
    lerp(top, bottom, fy)
}

/// Bilinear value together with its exact partial derivatives with respect
/// to the sample coordinate. Along an axis where the coordinate is clamped
/// the derivative is zero.
#[inline]
pub(crate) fn bilinear_with_grad(frame: FrameView<'_>, x: f64, y: f64) -> (f64, f64, f64) {
    let (ix, fx, in_x) = cell(x, frame.nx);
    let (iy, fy, in_y) = cell(y, frame.ny);
    let ix1 = (ix + 1).min(frame.nx - 1);
    let iy1 = (iy + 1).min(frame.ny - 1);
    let f00 = frame.at(ix, iy);
    let f10 = frame.at(ix1, iy);
    let f01 = frame.at(ix, iy1);
    let f11 = frame.at(ix1, iy1);
    let top = lerp(f00, f10, fx);
    let bottom = lerp(f01, f11, fx);
    let v = lerp(top, bottom, fy);
    let gx = if in_x { lerp(f10 - f00, f11 - f01, fy) } else { 0.0 };
    let gy = if in_y { bottom - top } else { 0.0 };
    (v, gx, gy)
}

/// Central differences inside, one-sided at the borders.
pub fn image_gradient(frame: FrameView<'_>) -> Result<GradientImage> {
    if let Some(k) = frame.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("frame sample {k}")));
    }
    let (nx, ny) = (frame.nx, frame.ny);
    let diff = |n: usize, i: usize, get: &dyn Fn(usize) -> f64| -> f64 {
        if n == 1 {
            0.0
        } else if i == 0 {
            get(1) - get(0)
        } else if i == n - 1 {
            get(n - 1) - get(n - 2)
        } else {
            0.5 * (get(i + 1) - get(i - 1))
        }
    };
    let mut grad = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let gx = diff(nx, ix, &|k| frame.at(k, iy));
            let gy = diff(ny, iy, &|k| frame.at(ix, k));
            grad.push([gx, gy]);
        }
    }
    Ok(GradientImage { nx, ny, grad })
}

/// Warp every frame by its displacement: `out(x, t) = f(x + d(x, t), t)`.
pub fn warp_sequence(seq: &CineSequence, disp: &crate::deform::DisplacementField) -> Result<CineSequence> {
    if disp.nx() != seq.nx || disp.ny() != seq.ny || disp.nt() != seq.nt {
        return Err(Error::dim(format!(
            "displacement {}x{}x{} vs cine {}x{}x{}",
            disp.nx(),
            disp.ny(),
            disp.nt(),
            seq.nx,
            seq.ny,
            seq.nt
        )));
    }
    if let Some(k) = disp.data().iter().position(|d| !(d[0].is_finite() && d[1].is_finite())) {
        return Err(Error::NonFinite(format!("displacement sample {k}")));
    }
    let n = seq.frame_len();
    let mut data = vec![0.0; seq.data.len()];
    par::for_each_chunk_mut(&mut data, n, |t, out| {
        let frame = seq.frame(t);
        let d = disp.frame(t);
        for iy in 0..seq.ny {
            for ix in 0..seq.nx {
                let k = iy * seq.nx + ix;
                out[k] = bilinear(frame, (ix + 1) as f64 + d[k][0], (iy + 1) as f64 + d[k][1]);
            }
        }
    });
    Ok(CineSequence { data, ..seq.clone() })
}

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn binomial_blur(nx: usize, ny: usize, src: &[f64]) -> Vec<f64> {
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (k, w) in BINOMIAL5.iter().enumerate() {
                acc += w * src[iy * nx + clampi(ix as isize + k as isize - 2, nx)];
            }
            tmp[iy * nx + ix] = acc;
        }
    }
    let mut out = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (k, w) in BINOMIAL5.iter().enumerate() {
                acc += w * tmp[clampi(iy as isize + k as isize - 2, ny) * nx + ix];
            }
            out[iy * nx + ix] = acc;
        }
    }
    out
}

#[inline]
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)]
}

/// Catmull-Rom resampling along one axis. `pos` are 0-based source positions.
fn resample_axis(n_src: usize, pos: &[f64], get: impl Fn(usize) -> f64) -> Vec<f64> {
    pos.iter()
        .map(|&p| {
            let i = p.floor();
            let w = catmull_rom_weights(p - i);
            let i = i as isize;
            (0..4).map(|k| w[k] * get((i + k as isize - 1).clamp(0, n_src as isize - 1) as usize)).sum()
        })
        .collect()
}

/// Number of coarse samples along an axis of `n` pixels for a reduction `factor`.
pub fn reduced_len(n: usize, factor: usize) -> usize {
    n.div_ceil(factor)
}

/// 0-based source position of coarse sample `k` (pixel-centre alignment).
#[inline]
pub fn coarse_to_fine_position(k: usize, factor: usize) -> f64 {
    factor as f64 * k as f64 + 0.5 * (factor as f64 - 1.0)
}

/// Anti-aliased spatial reduction by an integer factor. The frame count is kept.
pub fn downsample(seq: &CineSequence, factor: usize) -> Result<CineSequence> {
    if factor == 0 {
        return Err(Error::arg("downsampling factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(seq.clone());
    }
    let (cx, cy) = (reduced_len(seq.nx, factor), reduced_len(seq.ny, factor));
    if cx < 4 || cy < 4 {
        return Err(Error::dim(format!("{}x{} reduced by {factor} gives {cx}x{cy}, below 4x4", seq.nx, seq.ny)));
    }
    // one binomial pass per octave of reduction
    let passes = usize::BITS - (factor - 1).leading_zeros();
    let px: Vec<f64> = (0..cx).map(|k| coarse_to_fine_position(k, factor)).collect();
    let py: Vec<f64> = (0..cy).map(|k| coarse_to_fine_position(k, factor)).collect();
    let (nx, ny) = (seq.nx, seq.ny);
    let frames = par::map_range(seq.nt, |t| {
        let mut img = seq.frame(t).data.to_vec();
        for _ in 0..passes {
            img = binomial_blur(nx, ny, &img);
        }
        let mut rows = Vec::with_capacity(cx * ny);
        for iy in 0..ny {
            rows.extend(resample_axis(nx, &px, |i| img[iy * nx + i]));
        }
        let mut out = vec![0.0; cx * cy];
        for ix in 0..cx {
            let col = resample_axis(ny, &py, |i| rows[i * cx + ix]);
            for (iy, v) in col.into_iter().enumerate() {
                out[iy * cx + ix] = v;
            }
        }
        out
    });
    CineSequence::new_unchecked_size(cx, cy, seq.nt, seq.pixel_spacing * factor as f64, frames.concat())
}

/// Coarse-to-fine pyramid; the last entry is the input itself.
pub fn build_pyramid(seq: &CineSequence, levels: usize) -> Result<Vec<CineSequence>> {
    if levels == 0 {
        return Err(Error::arg("pyramid needs at least one level"));
    }
    if levels > usize::BITS as usize - 1 {
        return Err(Error::arg(format!("{levels} pyramid levels is too many")));
    }
    let coarsest = 1usize << (levels - 1);
    if reduced_len(seq.nx, coarsest) < 4 || reduced_len(seq.ny, coarsest) < 4 {
        return Err(Error::dim(format!("{} levels would shrink {}x{} below 4x4", levels, seq.nx, seq.ny)));
    }
    (0..levels).map(|k| downsample(seq, 1 << (levels - 1 - k))).collect()
}
