//! Green-Lagrange strain on the first-frame grid, myocardial direction
//! fields, and global / segmental aggregation.
//!
//! Strain is dimensionless here; conversion to percent happens at the
//! reporting layer.

use std::f64::consts::TAU;

use crate::deform::TrajectoryField;
use crate::error::{Error, Result};
use crate::par;

/// Symmetric 2x2 tensor stored as `[e_xx, e_xy, e_yy]`.
pub type SymTensor = [f64; 3];

/// Per-pixel strain tensors, frame-major like every other field.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    nx: usize,
    ny: usize,
    nt: usize,
    data: Vec<SymTensor>,
}

impl StrainField {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn data(&self) -> &[SymTensor] {
        &self.data
    }
    pub fn at(&self, ix: usize, iy: usize, t: usize) -> SymTensor {
        self.data[(t * self.ny + iy) * self.nx + ix]
    }
}

/// Scalar maps (one per frame) on the first-frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMaps {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub data: Vec<f64>,
}

impl ScalarMaps {
    pub fn new(nx: usize, ny: usize, nt: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * ny * nt {
            return Err(Error::dim(format!("scalar maps: {} values for a {nx}x{ny}x{nt} grid", data.len())));
        }
        Ok(Self { nx, ny, nt, data })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.nx * self.ny;
        &self.data[t * n..(t + 1) * n]
    }
}

/// Central difference along one axis, one-sided at the ends.
#[inline]
fn diff(get: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if i == 0 {
        get(1) - get(0)
    } else if i == n - 1 {
        get(n - 1) - get(n - 2)
    } else {
        0.5 * (get(i + 1) - get(i - 1))
    }
}

/// `E = ((I + grad d)^T (I + grad d) - I) / 2` for the trajectory
/// displacement `d = T - x`, differentiated in pixel units.
///
/// Working on `d` rather than on `T` keeps the identity map exactly
/// strain-free.
pub fn green_lagrange(traj: &TrajectoryField) -> Result<StrainField> {
    let (nx, ny, nt) = (traj.nx(), traj.ny(), traj.nt());
    if nx < 3 || ny < 3 {
        return Err(Error::dim(format!("strain needs at least 3x3 pixels, got {nx}x{ny}")));
    }
    let field = traj.field();
    let frames = par::map_range(nt, |t| {
        let d = field.frame(t);
        let mut out = vec![[0.0; 3]; nx * ny];
        if t == 0 {
            return out;
        }
        for iy in 0..ny {
            for ix in 0..nx {
                let gx = |c: usize| diff(|k| d[iy * nx + k][c], ix, nx);
                let gy = |c: usize| diff(|k| d[k * nx + ix][c], iy, ny);
                let (uxx, uyx) = (gx(0), gx(1));
                let (uxy, uyy) = (gy(0), gy(1));
                let exx = uxx + 0.5 * (uxx * uxx + uyx * uyx);
                let eyy = uyy + 0.5 * (uxy * uxy + uyy * uyy);
                let exy = 0.5 * (uxy + uyx) + 0.5 * (uxx * uxy + uyx * uyy);
                out[iy * nx + ix] = [exx, exy, eyy];
            }
        }
        out
    });
    Ok(StrainField { nx, ny, nt, data: frames.concat() })
}

/// Myocardium membership on the first-frame grid.
///
/// A pixel sitting exactly on the centroid has no radial direction; it is
/// dropped on construction and reported through [`MyoMask::excluded`].
#[derive(Debug, Clone, PartialEq)]
pub struct MyoMask {
    nx: usize,
    ny: usize,
    data: Vec<bool>,
    centroid: [f64; 2],
    reference_angle: f64,
    excluded: Option<(usize, usize)>,
}

impl MyoMask {
    pub fn new(nx: usize, ny: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::dim(format!("mask: {} values for a {nx}x{ny} grid", data.len())));
        }
        let centroid = centroid_of(nx, &data).ok_or_else(|| Error::arg("mask is empty"))?;
        let mut mask = Self { nx, ny, data, centroid, reference_angle: 0.0, excluded: None };
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = ((ix + 1) as f64, (iy + 1) as f64);
                if mask.data[iy * nx + ix] && x == centroid[0] && y == centroid[1] {
                    mask.data[iy * nx + ix] = false;
                    mask.excluded = Some((ix, iy));
                }
            }
        }
        if mask.count() == 0 {
            return Err(Error::arg("mask holds only its centroid pixel"));
        }
        Ok(mask)
    }

    /// Mask of the pixels where `f(x, y)` holds, with 1-based coordinates.
    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(f64, f64) -> bool) -> Result<Self> {
        let data = (0..nx * ny).map(|k| f((k % nx + 1) as f64, (k / nx + 1) as f64)).collect();
        Self::new(nx, ny, data)
    }

    pub fn with_reference_angle(mut self, angle: f64) -> Self {
        self.reference_angle = angle;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }
    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        self.data[iy * self.nx + ix]
    }
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
    /// Mean of the member pixel coordinates (1-based).
    pub fn centroid(&self) -> [f64; 2] {
        self.centroid
    }
    pub fn reference_angle(&self) -> f64 {
        self.reference_angle
    }
    pub fn excluded(&self) -> Option<(usize, usize)> {
        self.excluded
    }

    /// Drops every pixel within `radius` (Chebyshev distance) of a
    /// non-member or of the grid edge. Centroid and reference angle are kept.
    pub fn eroded(&self, radius: usize) -> Result<Self> {
        let (nx, ny) = (self.nx, self.ny);
        let r = radius as isize;
        let inside = |ix: isize, iy: isize| {
            ix >= 0 && iy >= 0 && (ix as usize) < nx && (iy as usize) < ny && self.data[iy as usize * nx + ix as usize]
        };
        let mut data = vec![false; nx * ny];
        for iy in 0..ny as isize {
            for ix in 0..nx as isize {
                if !inside(ix, iy) {
                    continue;
                }
                data[iy as usize * nx + ix as usize] = (-r..=r).all(|dy| (-r..=r).all(|dx| inside(ix + dx, iy + dy)));
            }
        }
        if !data.iter().any(|&m| m) {
            return Err(Error::arg(format!("erosion by {radius} px empties the mask")));
        }
        Ok(Self { data, ..self.clone() })
    }
}

fn centroid_of(nx: usize, data: &[bool]) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (k, _) in data.iter().enumerate().filter(|(_, &m)| m) {
        sx += (k % nx + 1) as f64;
        sy += (k / nx + 1) as f64;
        n += 1;
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}

/// Named in-plane directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Radial,
    Circumferential,
}

/// Unit radial and circumferential vectors at every member pixel; zero
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    pub nx: usize,
    pub ny: usize,
    pub radial: Vec<[f64; 2]>,
    pub circumferential: Vec<[f64; 2]>,
}

impl DirectionField {
    pub fn get(&self, dir: Direction) -> &[[f64; 2]] {
        match dir {
            Direction::Radial => &self.radial,
            Direction::Circumferential => &self.circumferential,
        }
    }
}

/// Radial directions point away from the mask centroid; circumferential ones
/// are the radial vectors rotated by +90 degrees.
pub fn direction_field(mask: &MyoMask) -> DirectionField {
    let (nx, ny) = (mask.nx, mask.ny);
    let [cx, cy] = mask.centroid;
    let mut radial = vec![[0.0; 2]; nx * ny];
    let mut circumferential = vec![[0.0; 2]; nx * ny];
    for k in (0..nx * ny).filter(|&k| mask.data[k]) {
        let (dx, dy) = ((k % nx + 1) as f64 - cx, (k / nx + 1) as f64 - cy);
        let r = dx.hypot(dy);
        radial[k] = [dx / r, dy / r];
        circumferential[k] = [-dy / r, dx / r];
    }
    DirectionField { nx, ny, radial, circumferential }
}

/// The same unit vector at every pixel, e.g. a long-axis direction.
pub fn uniform_direction(nx: usize, ny: usize, u: [f64; 2]) -> Result<Vec<[f64; 2]>> {
    let n = u[0].hypot(u[1]);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::arg(format!("direction ({}, {}) cannot be normalized", u[0], u[1])));
    }
    Ok(vec![[u[0] / n, u[1] / n]; nx * ny])
}

/// `u^T E u` at every pixel of every frame.
pub fn directional_strain(e: &StrainField, dirs: &[[f64; 2]]) -> Result<ScalarMaps> {
    let n = e.nx * e.ny;
    if dirs.len() != n {
        return Err(Error::dim(format!("{} directions for a {}x{} grid", dirs.len(), e.nx, e.ny)));
    }
    let data = e
        .data
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let [u, v] = dirs[k % n];
            m[0] * u * u + 2.0 * m[1] * u * v + m[2] * v * v
        })
        .collect();
    Ok(ScalarMaps { nx: e.nx, ny: e.ny, nt: e.nt, data })
}

fn check_grid(maps: &ScalarMaps, mask: &MyoMask) -> Result<()> {
    if maps.nx != mask.nx || maps.ny != mask.ny {
        return Err(Error::dim(format!("maps are {}x{}, mask is {}x{}", maps.nx, maps.ny, mask.nx, mask.ny)));
    }
    Ok(())
}

/// Unweighted mean over mask pixels, one value per frame.
pub fn global_strain(maps: &ScalarMaps, mask: &MyoMask) -> Result<Vec<f64>> {
    check_grid(maps, mask)?;
    let count = mask.count();
    if count == 0 {
        return Err(Error::arg("empty mask"));
    }
    Ok((0..maps.nt)
        .map(|t| {
            let mut vals = maps.frame(t).iter().zip(&mask.data).filter(|(_, &m)| m).map(|(v, _)| *v);
            // shifted mean: exact for constant maps
            let first = vals.next().unwrap_or(0.0);
            first + vals.map(|v| v - first).sum::<f64>() / count as f64
        })
        .collect())
}

/// Per-sector strain curves.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentalStrain {
    /// Pixels per sector.
    pub counts: Vec<usize>,
    /// `values[s][t]`; `None` for a sector with no pixels.
    pub values: Vec<Vec<Option<f64>>>,
}

/// Sector of a 1-based point: polar angle about the centroid measured from
/// the reference angle, counterclockwise in the `(x, y)` coordinate frame.
pub fn segment_of(mask: &MyoMask, n_segments: usize, x: f64, y: f64) -> usize {
    let [cx, cy] = mask.centroid;
    let theta = (y - cy).atan2(x - cx) - mask.reference_angle;
    let a = theta.rem_euclid(TAU);
    ((a / TAU * n_segments as f64).floor() as usize).min(n_segments - 1)
}

pub fn segmental_strain(maps: &ScalarMaps, mask: &MyoMask, n_segments: usize) -> Result<SegmentalStrain> {
    check_grid(maps, mask)?;
    if n_segments != 4 && n_segments != 6 {
        return Err(Error::arg(format!("segment count must be 4 or 6, got {n_segments}")));
    }
    let nx = mask.nx;
    let labels: Vec<Option<usize>> = mask
        .data
        .iter()
        .enumerate()
        .map(|(k, &m)| m.then(|| segment_of(mask, n_segments, (k % nx + 1) as f64, (k / nx + 1) as f64)))
        .collect();
    let mut counts = vec![0usize; n_segments];
    labels.iter().flatten().for_each(|&s| counts[s] += 1);
    let mut values = vec![vec![None; maps.nt]; n_segments];
    for t in 0..maps.nt {
        let mut sums = vec![0.0; n_segments];
        for (v, l) in maps.frame(t).iter().zip(&labels) {
            if let Some(s) = l {
                sums[*s] += v;
            }
        }
        for s in 0..n_segments {
            if counts[s] > 0 {
                values[s][t] = Some(sums[s] / counts[s] as f64);
            }
        }
    }
    Ok(SegmentalStrain { counts, values })
}

/// Radial and circumferential global strain curves over the full mask and
/// over its 2-pixel erosion (absent when erosion leaves nothing).
#[derive(Debug, Clone, PartialEq)]
pub struct StrainCurves {
    pub grs: Vec<f64>,
    pub gcs: Vec<f64>,
    pub grs_eroded: Option<Vec<f64>>,
    pub gcs_eroded: Option<Vec<f64>>,
}

/// Erosion applied before the `*_eroded` statistics.
pub const EROSION_PX: usize = 2;

/// Everything a strain report needs from a trajectory and a mask.
#[derive(Debug, Clone)]
pub struct StrainAnalysis {
    pub tensors: StrainField,
    pub radial: ScalarMaps,
    pub circumferential: ScalarMaps,
    pub curves: StrainCurves,
}

pub fn analyze(traj: &TrajectoryField, mask: &MyoMask) -> Result<StrainAnalysis> {
    if traj.nx() != mask.nx || traj.ny() != mask.ny {
        return Err(Error::dim(format!("trajectory is {}x{}, mask is {}x{}", traj.nx(), traj.ny(), mask.nx, mask.ny)));
    }
    let tensors = green_lagrange(traj)?;
    let dirs = direction_field(mask);
    let radial = directional_strain(&tensors, &dirs.radial)?;
    let circumferential = directional_strain(&tensors, &dirs.circumferential)?;
    let eroded = mask.eroded(EROSION_PX).ok();
    let curves = StrainCurves {
        grs: global_strain(&radial, mask)?,
        gcs: global_strain(&circumferential, mask)?,
        grs_eroded: eroded.as_ref().map(|m| global_strain(&radial, m)).transpose()?,
        gcs_eroded: eroded.as_ref().map(|m| global_strain(&circumferential, m)).transpose()?,
    };
    Ok(StrainAnalysis { tensors, radial, circumferential, curves })
}
