//! Registration objective: low-rank and variance dissimilarities, bending and
//! cyclic temporal regularizers, and their gradients with respect to the
//! control mesh.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::deform::{dense_adjoint, dense_displacement, ControlMesh, DisplacementField};
use crate::error::{Error, Result};
use crate::imaging::{bilinear_with_grad, CineSequence, FrameView};
use crate::linalg::thin_svd;
use crate::par;

/// Singular values at or below this fraction of the largest one are left out
/// of the nuclear-norm subgradient.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

/// Overlapped square patches tiling a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLayout {
    nx: usize,
    ny: usize,
    size: usize,
    stride: usize,
    /// 1-based top-left pixel of each patch, `x` fastest.
    origins: Vec<(usize, usize)>,
}

fn axis_origins(n: usize, p: usize, s: usize) -> Vec<usize> {
    let last = n - p + 1;
    let mut o: Vec<usize> = (0..).map(|k| 1 + k * s).take_while(|&v| v <= last).collect();
    if o.last() != Some(&last) {
        o.push(last);
    }
    o
}

/// Patch origins along each axis are `1, 1 + s, 1 + 2s, ...` up to `N - p + 1`,
/// with a final patch anchored at `N - p + 1` so nothing is left uncovered.
pub fn build_patch_layout(nx: usize, ny: usize, size: usize, stride: usize) -> Result<PatchLayout> {
    if size == 0 || stride == 0 {
        return Err(Error::arg("patch size and spacing must be positive"));
    }
    if size > nx.min(ny) {
        return Err(Error::arg(format!("patch size {size} exceeds the {nx}x{ny} grid")));
    }
    let ox = axis_origins(nx, size, stride);
    let oy = axis_origins(ny, size, stride);
    let origins = oy.iter().flat_map(|&y| ox.iter().map(move |&x| (x, y))).collect();
    Ok(PatchLayout { nx, ny, size, stride, origins })
}

impl PatchLayout {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn size(&self) -> usize {
        self.size
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }
    pub fn len(&self) -> usize {
        self.origins.len()
    }
    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Flat pixel indices of patch `k`, raster order.
    pub fn region(&self, k: usize) -> Vec<usize> {
        let (ox, oy) = self.origins[k];
        (0..self.size).flat_map(|dy| (0..self.size).map(move |dx| (oy - 1 + dy) * self.nx + ox - 1 + dx)).collect()
    }

    /// Number of patches covering each pixel.
    pub fn coverage(&self) -> Vec<usize> {
        let mut c = vec![0; self.nx * self.ny];
        for k in 0..self.len() {
            for p in self.region(k) {
                c[p] += 1;
            }
        }
        c
    }
}

/// Rows are region voxels, columns are frames.
pub fn build_casorati(seq: &CineSequence, region: &[usize]) -> Result<DMatrix<f64>> {
    if region.is_empty() {
        return Err(Error::arg("Casorati region is empty"));
    }
    let n = seq.frame_len();
    if let Some(&bad) = region.iter().find(|&&p| p >= n) {
        return Err(Error::dim(format!("region pixel {bad} outside a {n}-pixel frame")));
    }
    Ok(casorati(seq, region))
}

fn casorati(seq: &CineSequence, region: &[usize]) -> DMatrix<f64> {
    let n = seq.frame_len();
    let data = seq.data();
    DMatrix::from_fn(region.len(), seq.nt(), |r, t| data[t * n + region[r]])
}

/// Nuclear norm with the `U V^T` subgradient of the retained singular triplets.
#[derive(Debug, Clone)]
pub struct NuclearNorm {
    pub value: f64,
    pub subgradient: DMatrix<f64>,
    /// Smallest retained singular value.
    pub min_kept: f64,
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<NuclearNorm> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{}x{} matrix entry", m.nrows(), m.ncols())));
    }
    let svd = thin_svd(m)?;
    let value: f64 = svd.sigma.iter().sum();
    let smax = svd.sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = SINGULAR_CUTOFF * smax;
    let mut sub = DMatrix::zeros(m.nrows(), m.ncols());
    let mut min_kept = f64::INFINITY;
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > cutoff {
            min_kept = min_kept.min(s);
            sub.ger(1.0, &svd.u.column(k), &svd.v.column(k), 1.0);
        }
    }
    Ok(NuclearNorm { value, subgradient: sub, min_kept })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Sum of nuclear norms over overlapped patches.
    Llr,
    /// Nuclear norm of the whole-grid Casorati matrix.
    Glr,
    /// Sum of per-voxel temporal variances.
    Variance,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Llr => "llr",
            MetricKind::Glr => "glr",
            MetricKind::Variance => "variance",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "llr" => Ok(MetricKind::Llr),
            "glr" => Ok(MetricKind::Glr),
            "variance" => Ok(MetricKind::Variance),
            other => Err(Error::arg(format!("unknown metric kind `{other}`"))),
        }
    }
}

/// Value and per-voxel, per-frame gradient of a dissimilarity.
#[derive(Debug, Clone)]
pub struct Dissimilarity {
    pub value: f64,
    /// Same layout as the cine data.
    pub grad: Vec<f64>,
    /// Smallest retained singular value over all Casorati blocks (infinite
    /// for the variance metric).
    pub min_kept_singular: f64,
}

fn low_rank(seq: &CineSequence, regions: &[Vec<usize>]) -> Result<Dissimilarity> {
    let blocks = par::map_range(regions.len(), |k| nuclear_norm(&casorati(seq, &regions[k])));
    let n = seq.frame_len();
    let mut grad = vec![0.0; seq.data().len()];
    let mut value = 0.0;
    let mut min_kept = f64::INFINITY;
    for (region, block) in regions.iter().zip(blocks) {
        let block = block?;
        value += block.value;
        min_kept = min_kept.min(block.min_kept);
        for t in 0..seq.nt() {
            let col = block.subgradient.column(t);
            for (r, &p) in region.iter().enumerate() {
                grad[t * n + p] += col[r];
            }
        }
    }
    Ok(Dissimilarity { value, grad, min_kept_singular: min_kept })
}

fn variance(seq: &CineSequence) -> Dissimilarity {
    let n = seq.frame_len();
    let nt = seq.nt() as f64;
    let data = seq.data();
    let mut grad = vec![0.0; data.len()];
    let mut value = 0.0;
    for p in 0..n {
        let mean = (0..seq.nt()).map(|t| data[t * n + p]).sum::<f64>() / nt;
        for t in 0..seq.nt() {
            let r = data[t * n + p] - mean;
            value += r * r / nt;
            grad[t * n + p] = 2.0 * r / nt;
        }
    }
    Dissimilarity { value, grad, min_kept_singular: f64::INFINITY }
}

/// Regions the metric decomposes the grid into.
fn metric_regions(kind: MetricKind, nx: usize, ny: usize, layout: Option<&PatchLayout>) -> Result<Vec<Vec<usize>>> {
    match kind {
        MetricKind::Llr => {
            let layout = layout.ok_or_else(|| Error::arg("llr metric needs a patch layout"))?;
            if layout.nx != nx || layout.ny != ny {
                return Err(Error::dim(format!(
                    "patch layout for {}x{} used on a {nx}x{ny} grid",
                    layout.nx, layout.ny
                )));
            }
            Ok((0..layout.len()).map(|k| layout.region(k)).collect())
        }
        MetricKind::Glr => Ok(vec![(0..nx * ny).collect()]),
        MetricKind::Variance => Ok(Vec::new()),
    }
}

/// Dissimilarity of a (warped) sequence. `layout` is required for llr.
pub fn dissimilarity(seq: &CineSequence, kind: MetricKind, layout: Option<&PatchLayout>) -> Result<Dissimilarity> {
    match kind {
        MetricKind::Variance => Ok(variance(seq)),
        _ => low_rank(seq, &metric_regions(kind, seq.nx(), seq.ny(), layout)?),
    }
}

fn check_field(disp: &DisplacementField, what: &str) -> Result<()> {
    if disp.nx() < 3 || disp.ny() < 3 {
        return Err(Error::dim(format!("{what} needs at least 3x3 pixels, got {}x{}", disp.nx(), disp.ny())));
    }
    Ok(())
}

/// Bending energy of the dense field with its gradient.
///
/// Second differences are central; a pixel on the border reuses the stencil
/// of its nearest interior neighbour along that axis.
pub fn spatial_regularizer(disp: &DisplacementField) -> Result<(f64, DisplacementField)> {
    check_field(disp, "spatial regularizer")?;
    let (nx, ny) = (disp.nx(), disp.ny());
    let n = nx * ny;
    let frames = par::map_range(disp.nt(), |t| bending_frame(disp.frame(t), nx, ny));
    let mut grad = Vec::with_capacity(n * disp.nt());
    let mut value = 0.0;
    for (v, g) in frames {
        value += v;
        grad.extend(g);
    }
    Ok((value, DisplacementField::new(nx, ny, disp.nt(), grad)?))
}

fn bending_frame(d: &[[f64; 2]], nx: usize, ny: usize) -> (f64, Vec<[f64; 2]>) {
    let idx = |x: usize, y: usize| y * nx + x;
    let mut g = vec![[0.0; 2]; nx * ny];
    let mut value = 0.0;
    for iy in 0..ny {
        let cy = iy.clamp(1, ny - 2);
        for ix in 0..nx {
            let cx = ix.clamp(1, nx - 2);
            for c in 0..2 {
                let dxx = d[idx(cx + 1, iy)][c] - 2.0 * d[idx(cx, iy)][c] + d[idx(cx - 1, iy)][c];
                let dyy = d[idx(ix, cy + 1)][c] - 2.0 * d[idx(ix, cy)][c] + d[idx(ix, cy - 1)][c];
                let dxy = 0.25
                    * (d[idx(cx + 1, cy + 1)][c] - d[idx(cx + 1, cy - 1)][c] - d[idx(cx - 1, cy + 1)][c]
                        + d[idx(cx - 1, cy - 1)][c]);
                value += dxx * dxx + 2.0 * dxy * dxy + dyy * dyy;
                let a = 2.0 * dxx;
                g[idx(cx + 1, iy)][c] += a;
                g[idx(cx, iy)][c] -= 2.0 * a;
                g[idx(cx - 1, iy)][c] += a;
                let b = 2.0 * dyy;
                g[idx(ix, cy + 1)][c] += b;
                g[idx(ix, cy)][c] -= 2.0 * b;
                g[idx(ix, cy - 1)][c] += b;
                let m = 4.0 * dxy * 0.25;
                g[idx(cx + 1, cy + 1)][c] += m;
                g[idx(cx + 1, cy - 1)][c] -= m;
                g[idx(cx - 1, cy + 1)][c] -= m;
                g[idx(cx - 1, cy - 1)][c] += m;
            }
        }
    }
    (value, g)
}

/// Cyclic second temporal difference energy with its gradient.
pub fn temporal_regularizer(disp: &DisplacementField) -> Result<(f64, DisplacementField)> {
    let nt = disp.nt();
    if nt < 3 {
        return Err(Error::dim(format!("temporal regularizer needs at least 3 frames, got {nt}")));
    }
    let n = disp.frame_len();
    let data = disp.data();
    let mut grad = DisplacementField::zeros(disp.nx(), disp.ny(), nt);
    let g = grad.data_mut();
    let mut value = 0.0;
    for t in 0..nt {
        let (tp, tm) = ((t + 1) % nt, (t + nt - 1) % nt);
        for p in 0..n {
            for c in 0..2 {
                let r = data[tp * n + p][c] - 2.0 * data[t * n + p][c] + data[tm * n + p][c];
                value += r * r;
                g[tp * n + p][c] += 2.0 * r;
                g[t * n + p][c] -= 4.0 * r;
                g[tm * n + p][c] += 2.0 * r;
            }
        }
    }
    Ok((value, grad))
}

/// Weights and metric selection for the groupwise objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub metric: MetricKind,
    pub lambda: f64,
    pub mu: f64,
    pub patch_size: usize,
    pub patch_spacing: usize,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::arg(format!("lambda {} and mu {} must be finite and >= 0", self.lambda, self.mu)));
        }
        if self.patch_size < 2 {
            return Err(Error::arg(format!("patch size {} must be at least 2", self.patch_size)));
        }
        if self.patch_spacing < 1 || self.patch_spacing > self.patch_size {
            return Err(Error::arg(format!(
                "patch spacing {} must lie in [1, {}]",
                self.patch_spacing, self.patch_size
            )));
        }
        Ok(())
    }
}

/// Breakdown of one objective evaluation.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub total: f64,
    pub dissimilarity: f64,
    pub spatial: f64,
    pub temporal: f64,
    pub gradient: ControlMesh,
    pub min_kept_singular: f64,
}

impl CostReport {
    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        if !self.dissimilarity.is_finite() {
            Some("dissimilarity")
        } else if !self.spatial.is_finite() {
            Some("spatial regularizer")
        } else if !self.temporal.is_finite() {
            Some("temporal regularizer")
        } else if !self.total.is_finite() {
            Some("total")
        } else if self.gradient.values().iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
            Some("gradient")
        } else {
            None
        }
    }
}

/// Warp every frame and keep the exact bilinear derivative with respect to
/// the displacement at each voxel.
fn warp_with_jacobian(seq: &CineSequence, disp: &DisplacementField) -> (CineSequence, Vec<[f64; 2]>) {
    let (nx, ny) = (seq.nx(), seq.ny());
    let n = nx * ny;
    let frames = par::map_range(seq.nt(), |t| {
        let frame = seq.frame(t);
        let d = disp.frame(t);
        let mut vals = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        for iy in 0..ny {
            for ix in 0..nx {
                let k = iy * nx + ix;
                let (v, gx, gy) = bilinear_with_grad(frame, (ix + 1) as f64 + d[k][0], (iy + 1) as f64 + d[k][1]);
                vals.push(v);
                jac.push([gx, gy]);
            }
        }
        (vals, jac)
    });
    let mut data = Vec::with_capacity(seq.data().len());
    let mut jac = Vec::with_capacity(seq.data().len());
    for (v, j) in frames {
        data.extend(v);
        jac.extend(j);
    }
    let warped = CineSequence::new_unchecked_size(nx, ny, seq.nt(), seq.pixel_spacing(), data)
        .expect("warped samples of finite data are finite");
    (warped, jac)
}

/// The groupwise objective on one pyramid level, with its patch regions
/// prepared once.
#[derive(Debug, Clone)]
pub struct GroupwiseCost<'a> {
    seq: &'a CineSequence,
    params: CostParams,
    regions: Vec<Vec<usize>>,
}

impl<'a> GroupwiseCost<'a> {
    pub fn new(seq: &'a CineSequence, params: CostParams) -> Result<Self> {
        let regions = match params.metric {
            MetricKind::Llr => {
                params.validate()?;
                let p = params.patch_size.min(seq.nx()).min(seq.ny());
                let s = params.patch_spacing.min(p);
                let layout = build_patch_layout(seq.nx(), seq.ny(), p, s)?;
                metric_regions(MetricKind::Llr, seq.nx(), seq.ny(), Some(&layout))?
            }
            other => {
                if !(params.lambda >= 0.0 && params.mu >= 0.0) {
                    return Err(Error::arg("lambda and mu must be >= 0"));
                }
                metric_regions(other, seq.nx(), seq.ny(), None)?
            }
        };
        Ok(Self { seq, params, regions })
    }

    /// Use an explicit layout instead of the one derived from `params`.
    pub fn with_layout(seq: &'a CineSequence, params: CostParams, layout: &PatchLayout) -> Result<Self> {
        let regions = metric_regions(MetricKind::Llr, seq.nx(), seq.ny(), Some(layout))?;
        Ok(Self { seq, params: CostParams { metric: MetricKind::Llr, ..params }, regions })
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn evaluate(&self, mesh: &ControlMesh) -> Result<CostReport> {
        let seq = self.seq;
        if mesh.nx() != seq.nx() || mesh.ny() != seq.ny() || mesh.nt() != seq.nt() {
            return Err(Error::dim(format!(
                "mesh for {}x{}x{} used on a {}x{}x{} level",
                mesh.nx(),
                mesh.ny(),
                mesh.nt(),
                seq.nx(),
                seq.ny(),
                seq.nt()
            )));
        }
        let dense = dense_displacement(mesh);
        let (warped, jac) = warp_with_jacobian(seq, &dense);
        let diss = match self.params.metric {
            MetricKind::Variance => variance(&warped),
            _ => low_rank(&warped, &self.regions)?,
        };
        let mut pix = DisplacementField::zeros(seq.nx(), seq.ny(), seq.nt());
        for ((g, j), s) in pix.data_mut().iter_mut().zip(&jac).zip(&diss.grad) {
            *g = [s * j[0], s * j[1]];
        }
        let (lambda, mu) = (self.params.lambda, self.params.mu);
        let mut spatial = 0.0;
        if lambda > 0.0 {
            let (v, g) = spatial_regularizer(&dense)?;
            spatial = v;
            axpy(pix.data_mut(), lambda, g.data());
        }
        let mut temporal = 0.0;
        if mu > 0.0 && seq.nt() >= 3 {
            let (v, g) = temporal_regularizer(&dense)?;
            temporal = v;
            axpy(pix.data_mut(), mu, g.data());
        }
        let gradient = dense_adjoint(mesh, &pix)?;
        Ok(CostReport {
            total: diss.value + lambda * spatial + mu * temporal,
            dissimilarity: diss.value,
            spatial,
            temporal,
            gradient,
            min_kept_singular: diss.min_kept_singular,
        })
    }
}

fn axpy(y: &mut [[f64; 2]], a: f64, x: &[[f64; 2]]) {
    for (y, x) in y.iter_mut().zip(x) {
        y[0] += a * x[0];
        y[1] += a * x[1];
    }
}

/// One-shot groupwise objective; see [`GroupwiseCost`] for repeated use.
pub fn total_cost(mesh: &ControlMesh, seq: &CineSequence, params: &CostParams) -> Result<CostReport> {
    GroupwiseCost::new(seq, *params)?.evaluate(mesh)
}

/// Sum of squared differences between `fixed` and `moving` warped by a
/// single-frame mesh, plus `lambda` times the bending energy.
pub fn ssd_pairwise(
    fixed: FrameView<'_>,
    moving: FrameView<'_>,
    mesh: &ControlMesh,
    lambda: f64,
) -> Result<CostReport> {
    if fixed.nx != moving.nx || fixed.ny != moving.ny {
        return Err(Error::dim(format!("frames {}x{} and {}x{} differ", fixed.nx, fixed.ny, moving.nx, moving.ny)));
    }
    if mesh.nt() != 1 || mesh.nx() != fixed.nx || mesh.ny() != fixed.ny {
        return Err(Error::dim("pairwise mesh must be single-frame on the frames' grid"));
    }
    let (nx, ny) = (fixed.nx, fixed.ny);
    let dense = dense_displacement(mesh);
    let d = dense.frame(0);
    let mut pix = DisplacementField::zeros(nx, ny, 1);
    let g = pix.data_mut();
    let mut value = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let (v, gx, gy) = bilinear_with_grad(moving, (ix + 1) as f64 + d[k][0], (iy + 1) as f64 + d[k][1]);
            let r = v - fixed.data[k];
            value += r * r;
            g[k] = [2.0 * r * gx, 2.0 * r * gy];
        }
    }
    let mut spatial = 0.0;
    if lambda > 0.0 {
        let (v, gs) = spatial_regularizer(&dense)?;
        spatial = v;
        axpy(pix.data_mut(), lambda, gs.data());
    }
    let gradient = dense_adjoint(mesh, &pix)?;
    Ok(CostReport {
        total: value + lambda * spatial,
        dissimilarity: value,
        spatial,
        temporal: 0.0,
        gradient,
        min_kept_singular: f64::INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_examples() {
        let l = build_patch_layout(16, 16, 5, 3).unwrap();
        let xs: Vec<usize> = l.origins().iter().filter(|o| o.1 == 1).map(|o| o.0).collect();
        assert_eq!(xs, vec![1, 4, 7, 10, 12]);
        assert_eq!(l.len(), 25);
        let l = build_patch_layout(9, 9, 5, 3).unwrap();
        let xs: Vec<usize> = l.origins().iter().filter(|o| o.1 == 1).map(|o| o.0).collect();
        assert_eq!(xs, vec![1, 4, 5]);
        assert_eq!(l.len(), 9);
        assert_eq!(build_patch_layout(16, 16, 16, 7).unwrap().len(), 1);
        assert!(build_patch_layout(16, 12, 13, 3).is_err());
    }

    #[test]
    fn layout_covers_every_pixel() {
        for (nx, ny, p, s) in [(16, 16, 5, 3), (23, 17, 6, 6), (64, 64, 20, 12), (9, 30, 4, 1)] {
            let l = build_patch_layout(nx, ny, p, s).unwrap();
            assert!(l.coverage().iter().all(|&c| c >= 1));
            assert!(l.origins().iter().all(|&(x, y)| x + p - 1 <= nx && y + p - 1 <= ny));
        }
    }

    #[test]
    fn nuclear_norm_examples() {
        let v = nuclear_norm(&DMatrix::identity(2, 2)).unwrap().value;
        assert!((v - 2.0).abs() < 1e-12);
        let v = nuclear_norm(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0])).unwrap().value;
        assert!((v - 7.0).abs() < 1e-12);
        let nn = nuclear_norm(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).unwrap();
        assert!((nn.value - 5.0).abs() < 1e-12);
        // rank one: subgradient is u v^T of the single triplet
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]) / 5.0;
        assert!((nn.subgradient - expected).abs().max() < 1e-12);
    }

    #[test]
    fn nuclear_norm_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(nuclear_norm(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn casorati_shapes() {
        let seq = CineSequence::from_fn(8, 8, 3, 1.0, |x, y, t| x + 10.0 * y + 100.0 * t as f64).unwrap();
        let c = build_casorati(&seq, &[9]).unwrap();
        assert_eq!((c.nrows(), c.ncols()), (1, 3));
        assert_eq!(c.row(0).iter().copied().collect::<Vec<_>>(), vec![22.0, 122.0, 222.0]);
        let all: Vec<usize> = (0..64).collect();
        assert_eq!(build_casorati(&seq, &all).unwrap().nrows(), 64);
        assert!(build_casorati(&seq, &[]).is_err());
    }

    #[test]
    fn rank_one_dissimilarity_value() {
        let seq = CineSequence::from_fn(16, 16, 4, 1.0, |x, y, _| (0.3 * x + 0.2 * y).sin() + 2.0).unwrap();
        let layout = build_patch_layout(16, 16, 5, 3).unwrap();
        let d = dissimilarity(&seq, MetricKind::Llr, Some(&layout)).unwrap();
        let expected: f64 = (0..layout.len())
            .map(|k| {
                let r = layout.region(k);
                r.iter().map(|&p| seq.data()[p].powi(2)).sum::<f64>().sqrt() * 2.0
            })
            .sum();
        assert!((d.value - expected).abs() <= 1e-9 * expected, "{} vs {expected}", d.value);
        assert_eq!(dissimilarity(&seq, MetricKind::Variance, None).unwrap().value, 0.0);
    }

    #[test]
    fn variance_ignores_intensity_offset() {
        let seq = CineSequence::from_fn(8, 8, 3, 1.0, |x, y, t| x * y + t as f64 * (x - y)).unwrap();
        let shifted = CineSequence::from_fn(8, 8, 3, 1.0, |x, y, t| x * y + t as f64 * (x - y) + 0.5).unwrap();
        let a = dissimilarity(&seq, MetricKind::Variance, None).unwrap().value;
        let b = dissimilarity(&shifted, MetricKind::Variance, None).unwrap().value;
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn llr_needs_layout() {
        let seq = CineSequence::from_fn(8, 8, 3, 1.0, |x, _, _| x).unwrap();
        assert!(dissimilarity(&seq, MetricKind::Llr, None).is_err());
        let wrong = build_patch_layout(9, 9, 3, 2).unwrap();
        assert!(dissimilarity(&seq, MetricKind::Llr, Some(&wrong)).is_err());
        assert!("nope".parse::<MetricKind>().is_err());
    }

    #[test]
    fn bending_examples() {
        let affine = DisplacementField::from_fn(7, 6, 2, |x, y, _| [0.3 * x - 0.2 * y + 1.0, 2.0 * y]);
        assert!(spatial_regularizer(&affine).unwrap().0 < 1e-20);
        let quad = DisplacementField::from_fn(7, 6, 1, |x, _, _| [x * x, 0.0]);
        let (v, _) = spatial_regularizer(&quad).unwrap();
        assert!((v - 4.0 * 42.0).abs() < 1e-9);
        assert!(spatial_regularizer(&DisplacementField::zeros(2, 5, 1)).is_err());
    }

    #[test]
    fn temporal_linear_ramp_and_shift() {
        let nt = 6;
        let c = [0.5, -1.0];
        let d = DisplacementField::from_fn(4, 3, nt, |_, _, t| [c[0] * (t + 1) as f64, c[1] * (t + 1) as f64]);
        let (v, _) = temporal_regularizer(&d).unwrap();
        // direct loop oracle
        let mut oracle = 0.0;
        for t in 0..nt {
            let at = |s: usize| [c[0] * (s % nt + 1) as f64, c[1] * (s % nt + 1) as f64];
            let (p, m) = (at(t + 1), at(t + nt - 1));
            let z = at(t);
            for comp in 0..2 {
                oracle += (p[comp] - 2.0 * z[comp] + m[comp]).powi(2);
            }
        }
        oracle *= 12.0;
        assert!((v - oracle).abs() <= 1e-12 * oracle);
        assert!((v - 2.0 * (nt * nt) as f64 * 1.25 * 12.0).abs() < 1e-9);
        let shifted = DisplacementField::from_fn(4, 3, nt, |_, _, t| {
            let s = (t + 2) % nt;
            [c[0] * (s + 1) as f64, c[1] * (s + 1) as f64]
        });
        let (w, _) = temporal_regularizer(&shifted).unwrap();
        assert!((v - w).abs() <= 1e-12 * v);
        assert!(temporal_regularizer(&DisplacementField::zeros(4, 4, 2)).is_err());
    }

    #[test]
    fn params_validation() {
        let ok = CostParams { metric: MetricKind::Llr, lambda: 0.1, mu: 0.0, patch_size: 5, patch_spacing: 3 };
        assert!(ok.validate().is_ok());
        assert!(CostParams { lambda: -1.0, ..ok }.validate().is_err());
        assert!(CostParams { patch_size: 1, ..ok }.validate().is_err());
        assert!(CostParams { patch_spacing: 6, ..ok }.validate().is_err());
    }
}
