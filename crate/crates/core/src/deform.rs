//! Free-form cubic B-spline deformation over a cine sequence.
//!
//! A [`ControlMesh`] holds one 2-D lattice of control-point displacements per
//! frame. Dense displacements are the tensor-product cubic B-spline blend of
//! the 4x4 lattice neighbourhood of each pixel, so every operation that maps
//! the mesh to the pixel grid is linear; its adjoint is used to pull pixel
//! gradients back onto the mesh.

use crate::error::{Error, Result};
use crate::par;

/// Dense 2-vector field on an `nx` x `ny` grid over `nt` frames, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    nx: usize,
    ny: usize,
    nt: usize,
    data: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn zeros(nx: usize, ny: usize, nt: usize) -> Self {
        Self { nx, ny, nt, data: vec![[0.0; 2]; nx * ny * nt] }
    }

    pub fn new(nx: usize, ny: usize, nt: usize, data: Vec<[f64; 2]>) -> Result<Self> {
        if data.len() != nx * ny * nt {
            return Err(Error::dim(format!("{nx}x{ny}x{nt} field needs {} vectors, got {}", nx * ny * nt, data.len())));
        }
        if let Some(k) = data.iter().position(|d| !(d[0].is_finite() && d[1].is_finite())) {
            return Err(Error::NonFinite(format!("displacement vector {k}")));
        }
        Ok(Self { nx, ny, nt, data })
    }

    /// Build from a closure over 1-based pixel coordinates and 0-based frame.
    pub fn from_fn(nx: usize, ny: usize, nt: usize, f: impl Fn(f64, f64, usize) -> [f64; 2]) -> Self {
        let mut data = Vec::with_capacity(nx * ny * nt);
        for t in 0..nt {
            for iy in 0..ny {
                for ix in 0..nx {
                    data.push(f((ix + 1) as f64, (iy + 1) as f64, t));
                }
            }
        }
        Self { nx, ny, nt, data }
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
    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }
    pub fn frame_len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn frame(&self, t: usize) -> &[[f64; 2]] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }
    #[inline]
    pub fn at(&self, ix: usize, iy: usize, t: usize) -> [f64; 2] {
        self.data[(t * self.ny + iy) * self.nx + ix]
    }

    /// Split into single-frame fields.
    pub fn frames(&self) -> Vec<DisplacementField> {
        (0..self.nt)
            .map(|t| DisplacementField { nx: self.nx, ny: self.ny, nt: 1, data: self.frame(t).to_vec() })
            .collect()
    }

    /// Stack single-frame fields of a common grid.
    pub fn stack(frames: &[DisplacementField]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::arg("no frames to stack"))?;
        let mut data = Vec::with_capacity(first.data.len() * frames.len());
        let mut nt = 0;
        for f in frames {
            if f.nx != first.nx || f.ny != first.ny {
                return Err(Error::dim("stacked fields must share a grid"));
            }
            data.extend_from_slice(&f.data);
            nt += f.nt;
        }
        Ok(Self { nx: first.nx, ny: first.ny, nt, data })
    }

    /// Largest vector magnitude over the whole field.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|d| d[0].hypot(d[1])).fold(0.0, f64::max)
    }

    /// Temporal mean vector per pixel.
    pub fn temporal_mean(&self) -> Vec<[f64; 2]> {
        let n = self.frame_len();
        let mut m = vec![[0.0; 2]; n];
        for t in 0..self.nt {
            for (acc, d) in m.iter_mut().zip(self.frame(t)) {
                acc[0] += d[0];
                acc[1] += d[1];
            }
        }
        let inv = 1.0 / self.nt as f64;
        m.iter_mut().for_each(|v| {
            v[0] *= inv;
            v[1] *= inv;
        });
        m
    }
}

/// `T_{1->t}(x) - x` for every frame on the first frame's grid. Frame 0 is
/// identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryField {
    field: DisplacementField,
}

impl TrajectoryField {
    /// Wraps a field, zeroing its first frame.
    pub fn from_field(mut field: DisplacementField) -> Self {
        let n = field.frame_len();
        field.data[..n].iter_mut().for_each(|d| *d = [0.0; 2]);
        Self { field }
    }

    pub fn identity(nx: usize, ny: usize, nt: usize) -> Self {
        Self { field: DisplacementField::zeros(nx, ny, nt) }
    }

    pub fn field(&self) -> &DisplacementField {
        &self.field
    }

    pub fn into_field(self) -> DisplacementField {
        self.field
    }

    pub fn nx(&self) -> usize {
        self.field.nx
    }
    pub fn ny(&self) -> usize {
        self.field.ny
    }
    pub fn nt(&self) -> usize {
        self.field.nt
    }

    /// Mapped position `T_{1->t}` of the 1-based frame-1 point `(x, y)`,
    /// sampling the trajectory bilinearly with clamped borders.
    pub fn map_point(&self, x: f64, y: f64, t: usize) -> [f64; 2] {
        let d = sample_vector(self.field.nx, self.field.ny, self.field.frame(t), x, y);
        [x + d[0], y + d[1]]
    }
}

/// Uniform cubic B-spline basis `(B0, B1, B2, B3)` at fraction `u`.
pub fn bspline_weights(u: f64) -> Result<[f64; 4]> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::arg(format!("B-spline fraction {u} outside [0, 1)")));
    }
    Ok(weights(u))
}

#[inline]
pub(crate) fn weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0]
}

/// Control lattice `phi(i, j, t)` serving an `nx` x `ny` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMesh {
    nx: usize,
    ny: usize,
    nt: usize,
    spacing: f64,
    ni: usize,
    nj: usize,
    values: Vec<[f64; 2]>,
}

/// Lattice size along an axis of `n` pixels.
pub fn lattice_len(n: usize, spacing: f64) -> usize {
    ((n - 1) as f64 / spacing).floor() as usize + 4
}

impl ControlMesh {
    pub fn zeros(nx: usize, ny: usize, nt: usize, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::arg(format!("control spacing must be positive, got {spacing}")));
        }
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(Error::dim("control mesh needs a non-empty grid"));
        }
        let ni = lattice_len(nx, spacing);
        let nj = lattice_len(ny, spacing);
        Ok(Self { nx, ny, nt, spacing, ni, nj, values: vec![[0.0; 2]; ni * nj * nt] })
    }

    pub fn with_values(mut self, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dim(format!("mesh has {} control points, got {}", self.values.len(), values.len())));
        }
        self.values = values;
        Ok(self)
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
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn ni(&self) -> usize {
        self.ni
    }
    pub fn nj(&self) -> usize {
        self.nj
    }
    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.values
    }
    pub fn frame_len(&self) -> usize {
        self.ni * self.nj
    }
    #[inline]
    pub fn index(&self, i: usize, j: usize, t: usize) -> usize {
        (t * self.nj + j) * self.ni + i
    }
    pub fn at(&self, i: usize, j: usize, t: usize) -> [f64; 2] {
        self.values[self.index(i, j, t)]
    }
    pub fn set(&mut self, i: usize, j: usize, t: usize, v: [f64; 2]) {
        let k = self.index(i, j, t);
        self.values[k] = v;
    }

    /// Same lattice, zero values.
    pub fn zeros_like(&self) -> Self {
        Self { values: vec![[0.0; 2]; self.values.len()], ..self.clone() }
    }

    pub fn is_compatible(&self, other: &ControlMesh) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nt == other.nt
            && self.ni == other.ni
            && self.nj == other.nj
            && self.spacing == other.spacing
    }

    /// Largest absolute temporal mean over all control sites and components.
    pub fn max_temporal_mean(&self) -> f64 {
        let n = self.frame_len();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let mut s = [0.0; 2];
            for t in 0..self.nt {
                let v = self.values[t * n + k];
                s[0] += v[0];
                s[1] += v[1];
            }
            worst = worst.max((s[0] / self.nt as f64).abs()).max((s[1] / self.nt as f64).abs());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max)
    }

    fn locate(&self, coord: f64, n: usize, len: usize) -> Result<(usize, f64)> {
        if !coord.is_finite() || coord < 1.0 || coord > n as f64 {
            return Err(Error::arg(format!("coordinate {coord} outside [1, {n}]")));
        }
        Ok(locate(coord, self.spacing, len))
    }
}

#[inline]
fn locate(coord: f64, spacing: f64, len: usize) -> (usize, f64) {
    let s = (coord - 1.0) / spacing;
    let i = s.floor();
    let i_us = (i.max(0.0) as usize).min(len - 4);
    (i_us, (s - i_us as f64).clamp(0.0, 1.0 - f64::EPSILON))
}

/// Per-axis table of lattice offsets and weights, one entry per pixel.
#[derive(Debug, Clone)]
struct AxisBasis {
    base: Vec<usize>,
    w: Vec<[f64; 4]>,
}

impl AxisBasis {
    fn new(n: usize, spacing: f64, len: usize) -> Self {
        let (base, w) = (1..=n)
            .map(|x| {
                let (i, u) = locate(x as f64, spacing, len);
                (i, weights(u))
            })
            .unzip();
        Self { base, w }
    }
}

/// `d(x, t)` at a 1-based coordinate inside the grid.
pub fn evaluate_displacement(mesh: &ControlMesh, x: f64, y: f64, t: usize) -> Result<[f64; 2]> {
    if t >= mesh.nt {
        return Err(Error::arg(format!("frame {t} outside 0..{}", mesh.nt)));
    }
    let (i, u) = mesh.locate(x, mesh.nx, mesh.ni)?;
    let (j, v) = mesh.locate(y, mesh.ny, mesh.nj)?;
    let bu = weights(u);
    let bv = weights(v);
    let mut d = [0.0; 2];
    for l in 0..4 {
        for k in 0..4 {
            let w = bu[k] * bv[l];
            let p = mesh.at(i + k, j + l, t);
            d[0] += w * p[0];
            d[1] += w * p[1];
        }
    }
    Ok(d)
}

/// Evaluate at any real coordinate by clamping it into the grid first.
fn evaluate_clamped(mesh: &ControlMesh, x: f64, y: f64, t: usize) -> [f64; 2] {
    let x = x.clamp(1.0, mesh.nx as f64);
    let y = y.clamp(1.0, mesh.ny as f64);
    evaluate_displacement(mesh, x, y, t).expect("clamped coordinate is inside the grid")
}

/// Dense field of the mesh on its own grid, evaluated separably.
pub fn dense_displacement(mesh: &ControlMesh) -> DisplacementField {
    let bx = AxisBasis::new(mesh.nx, mesh.spacing, mesh.ni);
    let by = AxisBasis::new(mesh.ny, mesh.spacing, mesh.nj);
    let (nx, ny, ni, nj) = (mesh.nx, mesh.ny, mesh.ni, mesh.nj);
    let mut data = vec![[0.0; 2]; nx * ny * mesh.nt];
    par::for_each_chunk_mut(&mut data, nx * ny, |t, out| {
        let phi = &mesh.values[t * ni * nj..(t + 1) * ni * nj];
        // blend along i first: tmp[j][x]
        let mut tmp = vec![[0.0; 2]; nj * nx];
        for j in 0..nj {
            let row = &phi[j * ni..(j + 1) * ni];
            for x in 0..nx {
                let (b, w) = (bx.base[x], bx.w[x]);
                let mut acc = [0.0; 2];
                for k in 0..4 {
                    acc[0] += w[k] * row[b + k][0];
                    acc[1] += w[k] * row[b + k][1];
                }
                tmp[j * nx + x] = acc;
            }
        }
        for y in 0..ny {
            let (b, w) = (by.base[y], by.w[y]);
            for x in 0..nx {
                let mut acc = [0.0; 2];
                for l in 0..4 {
                    let v = tmp[(b + l) * nx + x];
                    acc[0] += w[l] * v[0];
                    acc[1] += w[l] * v[1];
                }
                out[y * nx + x] = acc;
            }
        }
    });
    DisplacementField { nx, ny, nt: mesh.nt, data }
}

/// Adjoint of [`dense_displacement`]: pulls a per-pixel vector field back onto
/// the control points of `mesh`'s lattice.
pub fn dense_adjoint(mesh: &ControlMesh, pixel_grad: &DisplacementField) -> Result<ControlMesh> {
    if pixel_grad.nx != mesh.nx || pixel_grad.ny != mesh.ny || pixel_grad.nt != mesh.nt {
        return Err(Error::dim("pixel gradient does not match the mesh grid"));
    }
    let bx = AxisBasis::new(mesh.nx, mesh.spacing, mesh.ni);
    let by = AxisBasis::new(mesh.ny, mesh.spacing, mesh.nj);
    let (nx, ny, ni, nj) = (mesh.nx, mesh.ny, mesh.ni, mesh.nj);
    let mut out = mesh.zeros_like();
    par::for_each_chunk_mut(&mut out.values, ni * nj, |t, phi| {
        let g = pixel_grad.frame(t);
        let mut tmp = vec![[0.0; 2]; nj * nx];
        for y in 0..ny {
            let (b, w) = (by.base[y], by.w[y]);
            for x in 0..nx {
                let v = g[y * nx + x];
                for l in 0..4 {
                    let e = &mut tmp[(b + l) * nx + x];
                    e[0] += w[l] * v[0];
                    e[1] += w[l] * v[1];
                }
            }
        }
        for j in 0..nj {
            for x in 0..nx {
                let v = tmp[j * nx + x];
                let (b, w) = (bx.base[x], bx.w[x]);
                for k in 0..4 {
                    let e = &mut phi[j * ni + b + k];
                    e[0] += w[k] * v[0];
                    e[1] += w[k] * v[1];
                }
            }
        }
    });
    Ok(out)
}

/// Subtract the temporal mean at every control site (Euclidean projection
/// onto the zero-mean subspace).
pub fn project_zero_mean(mesh: &ControlMesh) -> ControlMesh {
    let mut out = mesh.clone();
    project_in_place(&mut out);
    out
}

pub(crate) fn project_in_place(mesh: &mut ControlMesh) {
    let n = mesh.frame_len();
    let nt = mesh.nt;
    let inv = 1.0 / nt as f64;
    for k in 0..n {
        let mut s = [0.0; 2];
        for t in 0..nt {
            let v = mesh.values[t * n + k];
            s[0] += v[0];
            s[1] += v[1];
        }
        let m = [s[0] * inv, s[1] * inv];
        for t in 0..nt {
            let v = &mut mesh.values[t * n + k];
            v[0] -= m[0];
            v[1] -= m[1];
        }
    }
}

/// Solve the cubic B-spline interpolation system `(p[c-1] + 4 p[c] + p[c+1]) / 6 = g[c]`
/// in place, with replicated end values.
fn bspline_prefilter(g: &mut [[f64; 2]]) {
    let n = g.len();
    if n == 1 {
        return;
    }
    let (a, c) = (1.0 / 6.0, 1.0 / 6.0);
    let diag = |k: usize| if k == 0 || k == n - 1 { 5.0 / 6.0 } else { 4.0 / 6.0 };
    let mut cp = vec![0.0; n];
    cp[0] = c / diag(0);
    for comp in 0..2 {
        let mut dp = vec![0.0; n];
        dp[0] = g[0][comp] / diag(0);
        for k in 1..n {
            let m = diag(k) - a * cp[k - 1];
            if comp == 0 {
                cp[k] = c / m;
            }
            dp[k] = (g[k][comp] - a * dp[k - 1]) / m;
        }
        g[n - 1][comp] = dp[n - 1];
        for k in (0..n - 1).rev() {
            g[k][comp] = dp[k] - cp[k] * g[k + 1][comp];
        }
    }
}

/// Transfer a coarse-level solution to the next finer pyramid level.
///
/// The coarse dense field is doubled in both coordinates and magnitude,
/// sampled at the fine lattice sites and fitted with the cubic B-spline
/// prefilter, then re-projected to zero temporal mean when `zero_mean`.
pub fn prolong_mesh(
    coarse: &ControlMesh,
    fine_nx: usize,
    fine_ny: usize,
    fine_spacing: f64,
    zero_mean: bool,
) -> Result<ControlMesh> {
    if fine_nx.div_ceil(2) != coarse.nx || fine_ny.div_ceil(2) != coarse.ny {
        return Err(Error::dim(format!(
            "fine grid {fine_nx}x{fine_ny} is not twice the coarse grid {}x{}",
            coarse.nx, coarse.ny
        )));
    }
    let mut fine = ControlMesh::zeros(fine_nx, fine_ny, coarse.nt, fine_spacing)?;
    let (ni, nj) = (fine.ni, fine.nj);
    // fine lattice index c is centred on pixel 1 + (c - 1) * spacing
    let site = |c: usize, n: usize| (1.0 + (c as f64 - 1.0) * fine_spacing).clamp(1.0, n as f64);
    let to_coarse = |x: f64| (x + 0.5) / 2.0;
    par::for_each_chunk_mut(&mut fine.values, ni * nj, |t, phi| {
        for j in 0..nj {
            let yc = to_coarse(site(j, fine_ny));
            for i in 0..ni {
                let xc = to_coarse(site(i, fine_nx));
                let d = evaluate_clamped(coarse, xc, yc, t);
                phi[j * ni + i] = [2.0 * d[0], 2.0 * d[1]];
            }
        }
        for j in 0..nj {
            bspline_prefilter(&mut phi[j * ni..(j + 1) * ni]);
        }
        let mut col = vec![[0.0; 2]; nj];
        for i in 0..ni {
            for j in 0..nj {
                col[j] = phi[j * ni + i];
            }
            bspline_prefilter(&mut col);
            for j in 0..nj {
                phi[j * ni + i] = col[j];
            }
        }
    });
    if zero_mean {
        project_in_place(&mut fine);
    }
    Ok(fine)
}

/// Bilinear sample of a single-frame vector field at a 1-based coordinate,
/// clamped to the grid.
#[inline]
pub fn sample_vector(nx: usize, ny: usize, field: &[[f64; 2]], x: f64, y: f64) -> [f64; 2] {
    let axis = |c: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let c = c.clamp(1.0, n as f64) - 1.0;
        let i0 = (c.floor() as usize).min(n - 2);
        (i0, i0 + 1, c - i0 as f64)
    };
    let (x0, x1, fx) = axis(x, nx);
    let (y0, y1, fy) = axis(y, ny);
    let g = |ix: usize, iy: usize| field[iy * nx + ix];
    let mut out = [0.0; 2];
    for (c, o) in out.iter_mut().enumerate() {
        let top = (1.0 - fx) * g(x0, y0)[c] + fx * g(x1, y0)[c];
        let bot = (1.0 - fx) * g(x0, y1)[c] + fx * g(x1, y1)[c];
        *o = (1.0 - fy) * top + fy * bot;
    }
    out
}

/// Outcome of a fixed-point inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub field: DisplacementField,
    /// Largest `|d_inv(x) + d(x + d_inv(x))|` over the grid, in pixels.
    pub max_residual: f64,
    pub iterations: usize,
    /// False when the residual exceeds [`Inversion::WARN_RESIDUAL`].
    pub converged: bool,
}

impl Inversion {
    pub const TOLERANCE: f64 = 1e-3;
    pub const MAX_ITERATIONS: usize = 50;
    pub const WARN_RESIDUAL: f64 = 0.1;
}

/// Invert `x -> x + d(x)` for a single frame by the fixed point
/// `d_inv(x) <- -d(x + d_inv(x))`, started from zero.
pub fn invert_displacement(d: &DisplacementField) -> Result<Inversion> {
    if d.nt != 1 {
        return Err(Error::dim(format!("inversion expects one frame, got {}", d.nt)));
    }
    if let Some(k) = d.data.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(Error::NonFinite(format!("displacement vector {k}")));
    }
    let (nx, ny) = (d.nx, d.ny);
    let src = &d.data;
    let per_pixel = par::map_range(nx * ny, |k| {
        let x = (k % nx + 1) as f64;
        let y = (k / nx + 1) as f64;
        let mut inv = [0.0; 2];
        let mut iters = 0;
        for it in 1..=Inversion::MAX_ITERATIONS {
            iters = it;
            let s = sample_vector(nx, ny, src, x + inv[0], y + inv[1]);
            let next = [-s[0], -s[1]];
            let step = (next[0] - inv[0]).hypot(next[1] - inv[1]);
            inv = next;
            if step < Inversion::TOLERANCE {
                break;
            }
        }
        let s = sample_vector(nx, ny, src, x + inv[0], y + inv[1]);
        (inv, (inv[0] + s[0]).hypot(inv[1] + s[1]), iters)
    });
    let max_residual = per_pixel.iter().map(|p| p.1).fold(0.0, f64::max);
    let iterations = per_pixel.iter().map(|p| p.2).max().unwrap_or(0);
    let field = DisplacementField { nx, ny, nt: 1, data: per_pixel.into_iter().map(|p| p.0).collect() };
    Ok(Inversion { field, max_residual, iterations, converged: max_residual <= Inversion::WARN_RESIDUAL })
}

/// Map groupwise displacements to trajectories from the first frame:
/// `T_{1->t}(x) = T(T^{-1}(x, 1), t)`.
pub fn compose_to_first_frame(disp: &DisplacementField) -> Result<(TrajectoryField, Inversion)> {
    let first = DisplacementField { nx: disp.nx, ny: disp.ny, nt: 1, data: disp.frame(0).to_vec() };
    let inv = invert_displacement(&first)?;
    let (nx, ny) = (disp.nx, disp.ny);
    let n = nx * ny;
    let mut data = vec![[0.0; 2]; n * disp.nt];
    par::for_each_chunk_mut(&mut data[n..], n, |t1, out| {
        let frame = disp.frame(t1 + 1);
        for (k, o) in out.iter_mut().enumerate() {
            let di = inv.field.data[k];
            let yx = (k % nx + 1) as f64 + di[0];
            let yy = (k / nx + 1) as f64 + di[1];
            let s = sample_vector(nx, ny, frame, yx, yy);
            *o = [di[0] + s[0], di[1] + s[1]];
        }
    });
    let traj = TrajectoryField { field: DisplacementField { nx, ny, nt: disp.nt, data } };
    Ok((traj, inv))
}

/// Chain frame-to-frame fields: `T_{1->t} = T_{t-1->t} o T_{1->t-1}`.
pub fn compose_pairwise_chain(steps: &[DisplacementField]) -> Result<TrajectoryField> {
    let first = steps.first().ok_or_else(|| Error::arg("pairwise chain needs at least one step"))?;
    let (nx, ny) = (first.nx, first.ny);
    for (k, s) in steps.iter().enumerate() {
        if s.nx != nx || s.ny != ny || s.nt != 1 {
            return Err(Error::dim(format!("step field {k} does not share the {nx}x{ny} single-frame grid")));
        }
    }
    let n = nx * ny;
    let columns = par::map_range(n, |k| {
        let (x, y) = ((k % nx + 1) as f64, (k / nx + 1) as f64);
        let mut p = [x, y];
        let mut out = Vec::with_capacity(steps.len());
        for s in steps {
            let d = sample_vector(nx, ny, &s.data, p[0], p[1]);
            p = [p[0] + d[0], p[1] + d[1]];
            out.push([p[0] - x, p[1] - y]);
        }
        out
    });
    let nt = steps.len() + 1;
    let mut data = vec![[0.0; 2]; n * nt];
    for (k, col) in columns.into_iter().enumerate() {
        for (t, v) in col.into_iter().enumerate() {
            data[(t + 1) * n + k] = v;
        }
    }
    Ok(TrajectoryField { field: DisplacementField { nx, ny, nt, data } })
}
