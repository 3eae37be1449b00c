//! Analytic short-axis phantom: a textured annulus that contracts radially
//! over one cycle, with its exact motion and strain.
//!
//! Material points are frame-1 coordinates. A point at radius `R` from the
//! centre moves radially to `rho(R, t)`; the texture is painted in material
//! coordinates, so frame `t` is the reference texture pulled back through the
//! inverse map plus seeded Gaussian noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deform::{DisplacementField, TrajectoryField};
use crate::error::{Error, Result};
use crate::imaging::CineSequence;
use crate::strain::{global_strain, MyoMask, ScalarMaps};

/// How the wall moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionMode {
    /// Every radius scales by the same profile.
    Scale,
    /// The wall keeps its area while the inner radius follows the profile.
    #[default]
    Incompressible,
}

impl fmt::Display for MotionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionMode::Scale => "scale",
            MotionMode::Incompressible => "incompressible",
        })
    }
}

impl FromStr for MotionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scale" => Ok(MotionMode::Scale),
            "incompressible" => Ok(MotionMode::Incompressible),
            other => Err(Error::arg(format!("unknown phantom mode '{other}'"))),
        }
    }
}

/// One plane wave `amplitude * sin(k . X + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub k: [f64; 2],
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub blood: f64,
    pub myocardium: f64,
    pub background: f64,
    /// Width (px) of the smooth transition between tissues.
    pub edge_width: f64,
    pub waves: Vec<Wave>,
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            blood: 0.9,
            myocardium: 0.35,
            background: 0.15,
            edge_width: 2.0,
            waves: vec![
                Wave { k: [0.55, 0.30], amplitude: 0.06, phase: 0.3 },
                Wave { k: [-0.25, 0.60], amplitude: 0.05, phase: 1.1 },
                Wave { k: [0.45, -0.50], amplitude: 0.04, phase: 2.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// Centre in 1-based pixel coordinates; `None` means `(nx/2, ny/2)`.
    pub center: Option<[f64; 2]>,
    pub r_inner: f64,
    pub r_outer: f64,
    pub amplitude: f64,
    pub mode: MotionMode,
    pub texture: Texture,
    /// Noise standard deviation as a fraction of the noiseless dynamic range.
    pub noise: f64,
    /// Width of the cosine taper outside the wall, px.
    pub margin: f64,
    pub pixel_spacing: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            nt: 24,
            center: None,
            r_inner: 10.0,
            r_outer: 18.0,
            amplitude: 0.2,
            mode: MotionMode::Incompressible,
            texture: Texture::default(),
            noise: 0.01,
            margin: 6.0,
            pixel_spacing: 1.5,
            seed: 42,
        }
    }
}

impl PhantomSpec {
    pub fn center(&self) -> [f64; 2] {
        self.center.unwrap_or([(self.nx / 2) as f64, (self.ny / 2) as f64])
    }

    pub fn validate(&self) -> Result<()> {
        let half = self.nx.min(self.ny) as f64 / 2.0;
        if self.nt < 2 {
            return Err(Error::arg("phantom needs at least 2 frames"));
        }
        if !(self.r_inner > 0.0 && self.r_inner < self.r_outer && self.r_outer < half - self.margin) {
            return Err(Error::arg(format!(
                "radii must satisfy 0 < r_inner ({}) < r_outer ({}) < {half} - margin ({})",
                self.r_inner, self.r_outer, self.margin
            )));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(Error::arg(format!("amplitude {} outside [0, 1)", self.amplitude)));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::arg("taper margin must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::arg(format!("noise level {} is invalid", self.noise)));
        }
        if !(self.pixel_spacing > 0.0 && self.pixel_spacing.is_finite()) {
            return Err(Error::arg("pixel spacing must be positive"));
        }
        if self.texture.edge_width.is_nan() || self.texture.edge_width <= 0.0 {
            return Err(Error::arg("texture edge width must be positive"));
        }
        let [cx, cy] = self.center();
        let reach = self.r_outer + self.margin;
        if cx - reach < 1.0 || cy - reach < 1.0 || cx + reach > self.nx as f64 || cy + reach > self.ny as f64 {
            return Err(Error::arg("moving region leaves the grid"));
        }
        Ok(())
    }
}

/// Closed-form motion of a phantom plus its rasterized forms.
#[derive(Debug, Clone)]
pub struct GroundTruthMotion {
    spec: PhantomSpec,
    trajectory: TrajectoryField,
    mask: MyoMask,
}

impl GroundTruthMotion {
    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }
    pub fn trajectory(&self) -> &TrajectoryField {
        &self.trajectory
    }
    pub fn mask(&self) -> &MyoMask {
        &self.mask
    }

    /// Contraction profile `s(t) = 1 - A sin^2(pi t / N_t)`, `t` 0-based.
    pub fn profile(&self, t: usize) -> f64 {
        profile(&self.spec, t)
    }

    pub fn inner_radius(&self, t: usize) -> f64 {
        self.spec.r_inner * self.profile(t)
    }

    /// Radius at frame `t` of the material radius `r`.
    pub fn rho(&self, r: f64, t: usize) -> f64 {
        rho(&self.spec, r, self.profile(t))
    }

    /// Material radius that sits at radius `rho` in frame `t`.
    pub fn rho_inverse(&self, rho_t: f64, t: usize) -> f64 {
        rho_inverse(&self.spec, rho_t, self.profile(t))
    }

    /// `Phi_t` applied to a 1-based frame-1 point.
    pub fn forward(&self, x: f64, y: f64, t: usize) -> [f64; 2] {
        radial_map(self.spec.center(), x, y, |r| self.rho(r, t))
    }

    /// `Phi_t^{-1}` applied to a 1-based frame-t point.
    pub fn inverse(&self, x: f64, y: f64, t: usize) -> [f64; 2] {
        radial_map(self.spec.center(), x, y, |r| self.rho_inverse(r, t))
    }

    /// Analytic `(E_rr, E_cc)` at material radius `r` on the wall.
    pub fn strain_at(&self, r: f64, t: usize) -> (f64, f64) {
        let s = self.profile(t);
        match self.spec.mode {
            MotionMode::Scale => {
                let e = 0.5 * (s * s - 1.0);
                (e, e)
            }
            MotionMode::Incompressible => {
                let rho = self.rho(r, t);
                let (lr, lc) = (r / rho, rho / r);
                (0.5 * (lr * lr - 1.0), 0.5 * (lc * lc - 1.0))
            }
        }
    }

    /// Frame of largest `|GCS|` in the analytic truth.
    pub fn end_systole(&self) -> usize {
        let (_, gcs) = self.global_truth();
        gcs.iter().enumerate().fold((0, 0.0f64), |best, (t, v)| if v.abs() > best.1 { (t, v.abs()) } else { best }).0
    }

    /// Mask-averaged analytic `(GRS, GCS)` curves.
    pub fn global_truth(&self) -> (Vec<f64>, Vec<f64>) {
        let (radial, circ) = ground_truth_strain(self);
        let grs = global_strain(&radial, &self.mask).unwrap_or_default();
        let gcs = global_strain(&circ, &self.mask).unwrap_or_default();
        (grs, gcs)
    }
}

fn profile(spec: &PhantomSpec, t: usize) -> f64 {
    let a = (PI * t as f64 / spec.nt as f64).sin();
    1.0 - spec.amplitude * a * a
}

fn taper(spec: &PhantomSpec, r: f64) -> f64 {
    0.5 * (1.0 + (PI * (r - spec.r_outer) / spec.margin).cos())
}

fn rho(spec: &PhantomSpec, r: f64, s: f64) -> f64 {
    let (ri, ro) = (spec.r_inner, spec.r_outer);
    let wall = |r: f64| match spec.mode {
        MotionMode::Scale => r * s,
        MotionMode::Incompressible => {
            let rit = ri * s;
            (rit * rit + r * r - ri * ri).sqrt()
        }
    };
    if s == 1.0 {
        r
    } else if r <= ri {
        r * s
    } else if r <= ro {
        wall(r)
    } else if r < ro + spec.margin {
        r + (wall(ro) - ro) * taper(spec, r)
    } else {
        r
    }
}

fn rho_inverse(spec: &PhantomSpec, q: f64, s: f64) -> f64 {
    let (ri, ro) = (spec.r_inner, spec.r_outer);
    let at_ro = rho(spec, ro, s);
    if s == 1.0 {
        q
    } else if q <= ri * s {
        q / s
    } else if q <= at_ro {
        match spec.mode {
            MotionMode::Scale => q / s,
            MotionMode::Incompressible => {
                let rit = ri * s;
                (q * q - rit * rit + ri * ri).sqrt()
            }
        }
    } else if q < ro + spec.margin {
        // rho is strictly increasing on the taper band; bisection is exact enough
        let (mut lo, mut hi) = (ro, ro + spec.margin);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rho(spec, mid, s) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    } else {
        q
    }
}

fn radial_map(c: [f64; 2], x: f64, y: f64, f: impl Fn(f64) -> f64) -> [f64; 2] {
    let (dx, dy) = (x - c[0], y - c[1]);
    let r = dx.hypot(dy);
    if r == 0.0 {
        return [x, y];
    }
    let k = f(r) / r;
    [c[0] + k * dx, c[1] + k * dy]
}

/// Reference (frame-1, noiseless) intensity at a material point.
pub fn texture_at(spec: &PhantomSpec, x: f64, y: f64) -> f64 {
    let [cx, cy] = spec.center();
    let r = (x - cx).hypot(y - cy);
    let tex = &spec.texture;
    let h = 0.5 * tex.edge_width;
    let step = |edge: f64| {
        let u = ((r - (edge - h)) / tex.edge_width).clamp(0.0, 1.0);
        0.5 - 0.5 * (PI * u).cos()
    };
    let (to_myo, to_bg) = (step(spec.r_inner), step(spec.r_outer));
    let base = tex.blood + (tex.myocardium - tex.blood) * to_myo + (tex.background - tex.myocardium) * to_bg;
    let waves: f64 = tex.waves.iter().map(|w| w.amplitude * (w.k[0] * x + w.k[1] * y + w.phase).sin()).sum();
    base + waves
}

/// Builds the image sequence and the exact motion.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(CineSequence, GroundTruthMotion)> {
    spec.validate()?;
    let (nx, ny, nt) = (spec.nx, spec.ny, spec.nt);
    let [cx, cy] = spec.center();
    let mask = MyoMask::from_fn(nx, ny, |x, y| {
        let r = (x - cx).hypot(y - cy);
        r >= spec.r_inner && r <= spec.r_outer
    })?;
    let placeholder = TrajectoryField::identity(nx, ny, nt);
    let mut motion = GroundTruthMotion { spec: spec.clone(), trajectory: placeholder, mask };
    let field = DisplacementField::from_fn(nx, ny, nt, |x, y, t| {
        let p = motion.forward(x, y, t);
        [p[0] - x, p[1] - y]
    });
    motion.trajectory = TrajectoryField::from_field(field);

    let clean = CineSequence::from_fn(nx, ny, nt, spec.pixel_spacing, |x, y, t| {
        if t == 0 {
            texture_at(spec, x, y)
        } else {
            let p = motion.inverse(x, y, t);
            texture_at(spec, p[0], p[1])
        }
    })?;
    let (lo, hi) = clean.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma = spec.noise * (hi - lo);
    let mut data = clean.data().to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::arg(format!("noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    let seq = CineSequence::new(nx, ny, nt, spec.pixel_spacing, data)?;
    Ok((seq, motion))
}

/// Analytic radial and circumferential strain maps for every frame; zero
/// outside the mask.
pub fn ground_truth_strain(motion: &GroundTruthMotion) -> (ScalarMaps, ScalarMaps) {
    let spec = &motion.spec;
    let (nx, ny, nt) = (spec.nx, spec.ny, spec.nt);
    let [cx, cy] = spec.center();
    let n = nx * ny;
    let mut radial = vec![0.0; n * nt];
    let mut circ = vec![0.0; n * nt];
    for t in 1..nt {
        for k in (0..n).filter(|&k| motion.mask.data()[k]) {
            let r = ((k % nx + 1) as f64 - cx).hypot((k / nx + 1) as f64 - cy);
            let (err, ecc) = motion.strain_at(r, t);
            radial[t * n + k] = err;
            circ[t * n + k] = ecc;
        }
    }
    (ScalarMaps { nx, ny, nt, data: radial }, ScalarMaps { nx, ny, nt, data: circ })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mode: MotionMode) -> PhantomSpec {
        PhantomSpec { mode, noise: 0.0, ..PhantomSpec::default() }
    }

    #[test]
    fn spec_validation() {
        assert!(PhantomSpec::default().validate().is_ok());
        assert!(PhantomSpec { r_outer: 9.0, ..PhantomSpec::default() }.validate().is_err());
        assert!(PhantomSpec { r_outer: 27.0, ..PhantomSpec::default() }.validate().is_err());
        assert!(PhantomSpec { amplitude: 1.0, ..PhantomSpec::default() }.validate().is_err());
        assert_eq!("Scale".parse::<MotionMode>().unwrap(), MotionMode::Scale);
    }

    #[test]
    fn closed_forms() {
        let spec = quiet(MotionMode::Incompressible);
        let (_, m) = generate_phantom(&PhantomSpec { nt: 4, ..spec }).unwrap();
        // mid-cycle of a 4-frame cycle: s = 0.8
        assert!((m.profile(2) - 0.8).abs() < 1e-15);
        assert!((m.rho(10.0, 2) - 8.0).abs() < 1e-12);
        let (err, ecc) = m.strain_at(10.0, 2);
        assert!((err - 0.28125).abs() < 1e-12 && (ecc + 0.18).abs() < 1e-12);
        let (e0r, e0c) = m.strain_at(14.0, 0);
        assert!(e0r.abs() < 1e-15 && e0c.abs() < 1e-15);
        // annulus area is preserved
        let (a0, at) = (18f64.powi(2) - 10f64.powi(2), m.rho(18.0, 2).powi(2) - 8f64.powi(2));
        assert!((a0 - at).abs() <= 1e-9 * a0);
    }

    #[test]
    fn scale_mode_strain() {
        let spec = PhantomSpec { amplitude: 0.15, nt: 2, ..quiet(MotionMode::Scale) };
        let (_, m) = generate_phantom(&spec).unwrap();
        assert!((m.profile(1) - 0.85).abs() < 1e-15);
        let (err, ecc) = m.strain_at(12.0, 1);
        assert!((err - 0.5 * (0.85f64.powi(2) - 1.0)).abs() < 1e-15 && err == ecc);
    }

    #[test]
    fn analytic_strain_matches_differentiated_rho() {
        let (_, m) = generate_phantom(&quiet(MotionMode::Incompressible)).unwrap();
        for t in [3, 12, 20] {
            for r in [10.5, 13.0, 17.5] {
                let h = 1e-4 * r;
                let dr = (m.rho(r + h, t) - m.rho(r - h, t)) / (2.0 * h);
                let (err, ecc) = m.strain_at(r, t);
                assert!((0.5 * (dr * dr - 1.0) - err).abs() < 1e-6);
                assert!((0.5 * ((m.rho(r, t) / r).powi(2) - 1.0) - ecc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_and_rasterized_truth() {
        let (_, m) = generate_phantom(&quiet(MotionMode::Incompressible)).unwrap();
        for t in [0, 5, 12] {
            for &(x, y) in &[(32.0, 32.0), (40.0, 31.0), (20.5, 44.0), (50.0, 52.0), (5.0, 7.0), (33.0, 55.0)] {
                let p = m.forward(x, y, t);
                let q = m.inverse(p[0], p[1], t);
                assert!((q[0] - x).abs() < 1e-9 && (q[1] - y).abs() < 1e-9, "{x},{y},{t}");
            }
        }
        let traj = m.trajectory();
        for t in 0..24 {
            for iy in 0..64 {
                for ix in 0..64 {
                    if m.mask().contains(ix, iy) {
                        let (x, y) = ((ix + 1) as f64, (iy + 1) as f64);
                        let p = m.forward(x, y, t);
                        let d = traj.field().at(ix, iy, t);
                        assert!((x + d[0] - p[0]).abs() <= 1e-9 && (y + d[1] - p[1]).abs() <= 1e-9);
                    }
                }
            }
        }
        assert!(traj.field().frame(0).iter().all(|d| *d == [0.0; 2]));
    }

    #[test]
    fn frames_and_mask() {
        let spec = PhantomSpec { amplitude: 0.0, ..quiet(MotionMode::Incompressible) };
        let (seq, m) = generate_phantom(&spec).unwrap();
        let n = seq.frame_len();
        for t in 1..seq.nt() {
            assert_eq!(&seq.data()[t * n..(t + 1) * n], &seq.data()[..n]);
        }
        assert_eq!(m.mask().centroid(), [32.0, 32.0]);
        let (seq, m) = generate_phantom(&quiet(MotionMode::Incompressible)).unwrap();
        assert_eq!(seq.at(20, 31, 0), texture_at(m.spec(), 21.0, 32.0));
        assert_eq!(m.end_systole(), 12);
        let (grs, gcs) = m.global_truth();
        assert_eq!((grs[0], gcs[0]), (0.0, 0.0));
        // wall averages sit well inside the endocardial extremes (+0.281 / -0.18)
        assert!(grs[12] > 0.10 && grs[12] < 0.15 && gcs[12] < -0.08 && gcs[12] > -0.12);
    }

    #[test]
    fn noise_is_seeded() {
        let a = generate_phantom(&PhantomSpec::default()).unwrap().0;
        let b = generate_phantom(&PhantomSpec::default()).unwrap().0;
        let c = generate_phantom(&PhantomSpec { seed: 7, ..PhantomSpec::default() }).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
