//! Projected gradient descent over the control mesh, run coarse to fine.
//!
//! Groupwise registration optimizes every frame's lattice at once under the
//! zero-temporal-mean constraint. The constraint set is a linear subspace, so
//! projecting the gradient and projecting the iterate are the same operation:
//! subtract the temporal mean at each control site.
//!
//! The sequential pairwise baseline registers each frame onto its predecessor
//! with the same deformation model, pyramid and bending energy (no temporal
//! term, no constraint) and chains the results.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cost::{ssd_pairwise, CostParams, CostReport, GroupwiseCost, MetricKind};
use crate::deform::{
    compose_pairwise_chain, dense_displacement, project_in_place, prolong_mesh, ControlMesh, DisplacementField,
    TrajectoryField,
};
use crate::error::{Error, Result};
use crate::imaging::{build_pyramid, CineSequence, FrameView};
use crate::par;

/// Solver settings. Patch size and spacing are given at the finest level and
/// halved for every coarser level (never below 2 and 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub levels: usize,
    pub patch_size: usize,
    pub patch_spacing: usize,
    pub control_spacing: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            patch_size: 20,
            patch_spacing: 12,
            control_spacing: 6.0,
            lambda: 6e-4,
            mu: 0.06,
            tolerance: 1e-5,
            max_iterations: 500,
            initial_step: 1.0,
            backtrack: 0.5,
            min_step: 1e-8,
            deterministic: false,
            seed: 42,
        }
    }
}

impl SolverConfig {
    /// Set the patch schedule from its coarsest-level values, doubling per finer level.
    pub fn with_coarsest_patch(mut self, size: usize, spacing: usize) -> Self {
        let shift = self.levels.saturating_sub(1);
        self.patch_size = size << shift;
        self.patch_spacing = spacing << shift;
        self
    }

    /// Patch size and spacing used at pyramid level `level` (0 = coarsest).
    pub fn patch_at(&self, level: usize) -> (usize, usize) {
        let shift = self.levels.saturating_sub(1 + level);
        let size = (self.patch_size >> shift).max(2);
        let spacing = (self.patch_spacing >> shift).max(1).min(size);
        (size, spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::arg("levels must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::arg(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.control_spacing.is_nan() || self.control_spacing <= 0.0 {
            return Err(Error::arg(format!("control spacing must be positive, got {}", self.control_spacing)));
        }
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return Err(Error::arg("lambda and mu must be >= 0"));
        }
        if !(self.initial_step > 0.0 && self.min_step > 0.0 && self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::arg("step sizes must be positive and the backtracking factor in (0, 1)"));
        }
        if self.patch_size < 2 || self.patch_spacing < 1 || self.patch_spacing > self.patch_size {
            return Err(Error::arg(format!(
                "patch size {} / spacing {} are invalid",
                self.patch_size, self.patch_spacing
            )));
        }
        Ok(())
    }
}

/// Why a level stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost change fell below the tolerance.
    Converged,
    /// The projected gradient vanished.
    Stationary,
    MaxIterations,
    /// No decrease down to the minimum step.
    StepUnderflow,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Stationary => "stationary",
            Termination::MaxIterations => "max-iterations",
            Termination::StepUnderflow => "step-underflow",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    /// Pair index for the pairwise baseline (frame `pair + 1` onto `pair`), 0 otherwise.
    pub pair: usize,
    pub level: usize,
    pub iter: usize,
    pub cost: f64,
    pub dissimilarity: f64,
    pub spatial: f64,
    pub temporal: f64,
    pub step: f64,
    pub grad_norm: f64,
    /// Largest temporal mean of the mesh after this iteration.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    /// `(pair, level, reason)` per solved level.
    pub terminations: Vec<(usize, usize, Termination)>,
    pub wall_seconds: f64,
}

impl SolveTrace {
    fn extend(&mut self, other: SolveTrace) {
        self.records.extend(other.records);
        self.terminations.extend(other.terminations);
    }

    /// Accepted costs of one `(pair, level)` segment in iteration order.
    pub fn level_costs(&self, pair: usize, level: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.pair == pair && r.level == level).map(|r| r.cost).collect()
    }
}

/// Anything the descent can minimize.
pub trait Objective {
    fn evaluate(&self, mesh: &ControlMesh) -> Result<CostReport>;
}

impl Objective for GroupwiseCost<'_> {
    fn evaluate(&self, mesh: &ControlMesh) -> Result<CostReport> {
        GroupwiseCost::evaluate(self, mesh)
    }
}

/// SSD of one frame pair with bending energy.
pub struct PairwiseCost<'a> {
    pub fixed: FrameView<'a>,
    pub moving: FrameView<'a>,
    pub lambda: f64,
}

impl Objective for PairwiseCost<'_> {
    fn evaluate(&self, mesh: &ControlMesh) -> Result<CostReport> {
        ssd_pairwise(self.fixed, self.moving, mesh, self.lambda)
    }
}

fn checked(report: CostReport) -> Result<CostReport> {
    match report.non_finite_term() {
        Some(term) => Err(Error::Numerical(format!("{term} became non-finite"))),
        None => Ok(report),
    }
}

/// Projected gradient descent on one level.
///
/// Each iteration steps against the (projected) gradient scaled so the
/// largest control-point move equals the step size, halving the step until
/// the cost strictly decreases. The step doubles after every accepted
/// iteration, capped at `initial_step`.
pub fn pgd_level(
    objective: &impl Objective,
    mesh_init: ControlMesh,
    constrained: bool,
    level: usize,
    config: &SolverConfig,
) -> Result<(ControlMesh, SolveTrace)> {
    let mut mesh = mesh_init;
    if constrained {
        project_in_place(&mut mesh);
    }
    let mut report = checked(objective.evaluate(&mesh)?)?;
    let mut trace = SolveTrace::default();
    let record = |iter: usize, r: &CostReport, step: f64, grad_norm: f64, m: &ControlMesh| IterRecord {
        pair: 0,
        level,
        iter,
        cost: r.total,
        dissimilarity: r.dissimilarity,
        spatial: r.spatial,
        temporal: r.temporal,
        step,
        grad_norm,
        constraint_residual: if constrained { m.max_temporal_mean() } else { 0.0 },
    };
    trace.records.push(record(0, &report, 0.0, 0.0, &mesh));
    let mut step = config.initial_step;
    let mut reason = Termination::MaxIterations;
    for iter in 1..=config.max_iterations {
        let mut grad = report.gradient.clone();
        if constrained {
            project_in_place(&mut grad);
        }
        let gmax = grad.max_abs();
        let grad_norm = grad.values().iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
        if gmax == 0.0 {
            reason = Termination::Stationary;
            break;
        }
        let accepted = loop {
            let scale = step / gmax;
            let mut trial = mesh.clone();
            for (p, g) in trial.values_mut().iter_mut().zip(grad.values()) {
                p[0] -= scale * g[0];
                p[1] -= scale * g[1];
            }
            if constrained {
                project_in_place(&mut trial);
            }
            let trial_report = checked(objective.evaluate(&trial)?)?;
            if trial_report.total < report.total {
                break Some((trial, trial_report));
            }
            step *= config.backtrack;
            if step < config.min_step {
                break None;
            }
        };
        let Some((trial, trial_report)) = accepted else {
            reason = Termination::StepUnderflow;
            break;
        };
        let rel = (report.total - trial_report.total).abs() / report.total.abs().max(1e-30);
        mesh = trial;
        report = trial_report;
        trace.records.push(record(iter, &report, step, grad_norm, &mesh));
        if rel < config.tolerance {
            reason = Termination::Converged;
            break;
        }
        step = (step * 2.0).min(config.initial_step);
    }
    log::debug!("level {level}: {} iterations, cost {:.6e}, {reason}", trace.records.len() - 1, report.total);
    trace.terminations.push((0, level, reason));
    Ok((mesh, trace))
}

/// Output of [`register_groupwise`].
#[derive(Debug, Clone)]
pub struct GroupwiseResult {
    /// Finest-level dense displacements with zero temporal mean.
    pub displacement: DisplacementField,
    pub mesh: ControlMesh,
    pub trace: SolveTrace,
}

fn run<R: Send>(deterministic: bool, f: impl FnOnce() -> R + Send) -> R {
    if deterministic {
        par::single_threaded(f)
    } else {
        f()
    }
}

/// Groupwise registration of all frames to their implicit mean frame.
pub fn register_groupwise(seq: &CineSequence, metric: MetricKind, config: &SolverConfig) -> Result<GroupwiseResult> {
    config.validate()?;
    run(config.deterministic, || register_groupwise_inner(seq, metric, config))
}

fn register_groupwise_inner(seq: &CineSequence, metric: MetricKind, config: &SolverConfig) -> Result<GroupwiseResult> {
    let start = Instant::now();
    let pyramid = build_pyramid(seq, config.levels)?;
    let mut trace = SolveTrace::default();
    let coarsest = &pyramid[0];
    let mut mesh = ControlMesh::zeros(coarsest.nx(), coarsest.ny(), seq.nt(), config.control_spacing)?;
    for (level, level_seq) in pyramid.iter().enumerate() {
        let (patch_size, patch_spacing) = config.patch_at(level);
        let (patch_size, patch_spacing) = {
            let p = patch_size.min(level_seq.nx()).min(level_seq.ny());
            (p, patch_spacing.min(p))
        };
        let params = CostParams { metric, lambda: config.lambda, mu: config.mu, patch_size, patch_spacing };
        let cost = GroupwiseCost::new(level_seq, params)?;
        // never start a level worse than the undeformed sequence
        if level > 0 {
            let zero = mesh.zeros_like();
            if cost.evaluate(&zero)?.total < cost.evaluate(&mesh)?.total {
                mesh = zero;
            }
        }
        let (solved, seg) = pgd_level(&cost, mesh, true, level, config)?;
        trace.extend(seg);
        mesh = match pyramid.get(level + 1) {
            Some(next) => prolong_mesh(&solved, next.nx(), next.ny(), config.control_spacing, true)?,
            None => solved,
        };
    }
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok(GroupwiseResult { displacement: dense_displacement(&mesh), mesh, trace })
}

/// Output of [`register_pairwise`].
#[derive(Debug, Clone)]
pub struct PairwiseResult {
    /// `steps[k]` maps frame `k` onto frame `k + 1` (single-frame fields).
    pub steps: Vec<DisplacementField>,
    pub trajectory: TrajectoryField,
    pub trace: SolveTrace,
}

/// Sequential frame-to-frame registration chained into trajectories.
pub fn register_pairwise(seq: &CineSequence, config: &SolverConfig) -> Result<PairwiseResult> {
    config.validate()?;
    run(config.deterministic, || register_pairwise_inner(seq, config))
}

fn register_pairwise_inner(seq: &CineSequence, config: &SolverConfig) -> Result<PairwiseResult> {
    let start = Instant::now();
    let pyramid = build_pyramid(seq, config.levels)?;
    let pairs = par::map_range(seq.nt() - 1, |k| {
        register_pair(&pyramid, k, config).map_err(|e| match e {
            Error::Numerical(m) => Error::Numerical(format!("pair {} -> {}: {m}", k + 1, k + 2)),
            other => other,
        })
    });
    let mut steps = Vec::with_capacity(seq.nt() - 1);
    let mut trace = SolveTrace::default();
    for pair in pairs {
        let (step, seg) = pair?;
        steps.push(step);
        trace.extend(seg);
    }
    let trajectory = compose_pairwise_chain(&steps)?;
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok(PairwiseResult { steps, trajectory, trace })
}

fn register_pair(pyramid: &[CineSequence], k: usize, config: &SolverConfig) -> Result<(DisplacementField, SolveTrace)> {
    let mut trace = SolveTrace::default();
    let mut mesh = ControlMesh::zeros(pyramid[0].nx(), pyramid[0].ny(), 1, config.control_spacing)?;
    for (level, level_seq) in pyramid.iter().enumerate() {
        let cost = PairwiseCost { fixed: level_seq.frame(k), moving: level_seq.frame(k + 1), lambda: config.lambda };
        let (solved, mut seg) = pgd_level(&cost, mesh, false, level, config)?;
        seg.records.iter_mut().for_each(|r| r.pair = k);
        seg.terminations.iter_mut().for_each(|t| t.0 = k);
        trace.extend(seg);
        mesh = match pyramid.get(level + 1) {
            Some(next) => prolong_mesh(&solved, next.nx(), next.ny(), config.control_spacing, false)?,
            None => solved,
        };
    }
    Ok((dense_displacement(&mesh), trace))
}
