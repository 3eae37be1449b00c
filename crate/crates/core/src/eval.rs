//! Accuracy metrics: end-point error, voxelwise and global strain error,
//! contour tracking distance and end-of-cycle drift.
//!
//! Strain inputs are dimensionless; strain outputs are in strain points
//! (percent).

use std::fmt;

use crate::deform::TrajectoryField;
use crate::error::{Error, Result};
use crate::strain::{MyoMask, ScalarMaps};

/// Which frames an end-point error averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frames {
    /// A single frame, 0-based.
    At(usize),
    All,
}

/// End-point error in pixels and millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epe {
    pub px: f64,
    pub mm: f64,
}

/// Mean over mask pixels (and selected frames) of `|T_est - T_truth|`.
pub fn epe(
    est: &TrajectoryField,
    truth: &TrajectoryField,
    mask: &MyoMask,
    frames: Frames,
    spacing: f64,
) -> Result<Epe> {
    let (nx, ny, nt) = (truth.nx(), truth.ny(), truth.nt());
    if (est.nx(), est.ny(), est.nt()) != (nx, ny, nt) {
        return Err(Error::dim(format!("estimate is {}x{}x{}, truth is {nx}x{ny}x{nt}", est.nx(), est.ny(), est.nt())));
    }
    if (mask.nx(), mask.ny()) != (nx, ny) {
        return Err(Error::dim(format!("mask is {}x{}, fields are {nx}x{ny}", mask.nx(), mask.ny())));
    }
    let range = match frames {
        Frames::At(t) if t < nt => t..t + 1,
        Frames::At(t) => return Err(Error::arg(format!("frame {t} outside 0..{nt}"))),
        Frames::All => 0..nt,
    };
    let n = nx * ny;
    let (a, b) = (est.field().data(), truth.field().data());
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in range {
        for k in (0..n).filter(|&k| mask.data()[k]) {
            let (p, q) = (a[t * n + k], b[t * n + k]);
            sum += (p[0] - q[0]).hypot(p[1] - q[1]);
            count += 1;
        }
    }
    let px = sum / count as f64;
    Ok(Epe { px, mm: px * spacing })
}

fn check_maps(est: &ScalarMaps, truth: &ScalarMaps, mask: &MyoMask, frame: usize) -> Result<()> {
    if (est.nx, est.ny, est.nt) != (truth.nx, truth.ny, truth.nt) || (mask.nx(), mask.ny()) != (truth.nx, truth.ny) {
        return Err(Error::dim("strain maps and mask must share a grid"));
    }
    if frame >= truth.nt {
        return Err(Error::arg(format!("frame {frame} outside 0..{}", truth.nt)));
    }
    Ok(())
}

/// Voxelwise strain error: mean over the mask of `|e_est - e_truth|` at one
/// frame, in strain points.
pub fn vse(est: &ScalarMaps, truth: &ScalarMaps, mask: &MyoMask, frame: usize) -> Result<f64> {
    check_maps(est, truth, mask, frame)?;
    let count = mask.count();
    if count == 0 {
        return Err(Error::arg("empty mask"));
    }
    let sum: f64 = est
        .frame(frame)
        .iter()
        .zip(truth.frame(frame))
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|((e, t), _)| (e - t).abs())
        .sum();
    Ok(100.0 * sum / count as f64)
}

/// Global strain error at one frame, in strain points.
pub fn gse(est: &[f64], truth: &[f64], frame: usize) -> Result<f64> {
    match (est.get(frame), truth.get(frame)) {
        (Some(e), Some(t)) => Ok(100.0 * (e - t).abs()),
        _ => Err(Error::arg(format!("frame {frame} missing from a strain curve"))),
    }
}

/// `|last value|` of a strain curve, in strain points.
pub fn drift(curve: &[f64]) -> Result<f64> {
    curve.last().map(|v| 100.0 * v.abs()).ok_or_else(|| Error::arg("empty strain curve"))
}

/// Frame with the largest `|value|` (the end-systolic frame of a global
/// circumferential strain curve).
pub fn peak_frame(curve: &[f64]) -> usize {
    curve
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (t, v)| if v.abs() > best.1 { (t, v.abs()) } else { best })
        .0
}

/// An ordered polyline in 1-based pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<[f64; 2]>,
    closed: bool,
    /// 0-based frame the points belong to.
    pub frame: usize,
}

impl Contour {
    pub fn new(points: Vec<[f64; 2]>, closed: bool, frame: usize) -> Result<Self> {
        if points.is_empty() || (closed && points.len() < 3) {
            return Err(Error::arg(format!(
                "{} contour needs at least {} points, got {}",
                if closed { "closed" } else { "open" },
                if closed { 3 } else { 1 },
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contour point".into()));
        }
        Ok(Self { points, closed, frame })
    }

    /// `n` points evenly spaced on a circle.
    pub fn circle(center: [f64; 2], radius: f64, n: usize, frame: usize) -> Result<Self> {
        let pts = (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        Self::new(pts, true, frame)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    /// Euclidean distance from `p` to the polyline.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        if self.points.len() == 1 {
            let q = self.points[0];
            return (p[0] - q[0]).hypot(p[1] - q[1]);
        }
        self.segments().map(|(a, b)| point_segment(p, a, b)).fold(f64::INFINITY, f64::min)
    }
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let u = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - u * dx).hypot(p[1] - a[1] - u * dy)
}

/// Maps every point of a frame-1 contour through `T_{1->t}`.
pub fn track_contour(contour: &Contour, traj: &TrajectoryField, t: usize) -> Result<Contour> {
    if t >= traj.nt() {
        return Err(Error::arg(format!("frame {t} outside 0..{}", traj.nt())));
    }
    let points = contour.points.iter().map(|p| traj.map_point(p[0], p[1], t)).collect();
    Contour::new(points, contour.closed, t)
}

/// Symmetric mean point-to-polyline distance, scaled by the pixel spacing.
pub fn contour_distance(a: &Contour, b: &Contour, spacing: f64) -> f64 {
    let one_way = |from: &Contour, to: &Contour| {
        from.points.iter().map(|&p| to.distance_to(p)).sum::<f64>() / from.points.len() as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a)) * spacing
}

/// Every metric of one evaluation run. Strain and contour entries are
/// present only when their inputs were supplied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub epe_es_px: f64,
    pub epe_es_mm: f64,
    pub epe_all_px: f64,
    pub epe_all_mm: f64,
    pub vse_es_radial: Option<f64>,
    pub vse_es_circumferential: Option<f64>,
    pub gse_es_radial: Option<f64>,
    pub gse_es_circumferential: Option<f64>,
    pub drift_radial: Option<f64>,
    pub drift_circumferential: Option<f64>,
    /// `(label, mean distance in mm)`.
    pub contour_mm: Vec<(String, f64)>,
}

impl MetricReport {
    /// `(name, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("epe_es_px".to_string(), self.epe_es_px),
            ("epe_es_mm".into(), self.epe_es_mm),
            ("epe_all_px".into(), self.epe_all_px),
            ("epe_all_mm".into(), self.epe_all_mm),
        ];
        let optional = [
            ("vse_es_radial_pct", self.vse_es_radial),
            ("vse_es_circumferential_pct", self.vse_es_circumferential),
            ("gse_es_radial_pct", self.gse_es_radial),
            ("gse_es_circumferential_pct", self.gse_es_circumferential),
            ("drift_radial_pct", self.drift_radial),
            ("drift_circumferential_pct", self.drift_circumferential),
        ];
        rows.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        rows.extend(self.contour_mm.iter().map(|(k, v)| (format!("contour_{k}_mm"), *v)));
        rows
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        writeln!(f, "{:<width$}  {:>12}", "metric", "value")?;
        writeln!(f, "{}", "-".repeat(width + 14))?;
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v:>12.4}")?;
        }
        Ok(())
    }
}
