//! `cinetrack` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
//! input, mismatched grids), 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use cinetrack::cost::MetricKind;
use cinetrack::deform::{compose_to_first_frame, DisplacementField, Inversion, TrajectoryField};
use cinetrack::eval::{self, Contour, Frames, MetricReport};
use cinetrack::io::{self, RunConfig, StrainTable};
use cinetrack::optimizer::{register_groupwise, register_pairwise, SolverConfig};
use cinetrack::phantom::{generate_phantom, MotionMode, PhantomSpec};
use cinetrack::strain;
use cinetrack::Error;

#[derive(Parser)]
#[command(name = "cinetrack", version, about = "Groupwise cine motion tracking and strain analysis")]
struct Cli {
    /// TOML file with run and solver settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run every solve on a single worker thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the analytic phantom with its ground truth.
    Phantom(PhantomArgs),
    /// Estimate motion of a cine sequence.
    Register(RegisterArgs),
    /// Global and segmental strain curves from a trajectory field.
    Strain(StrainArgs),
    /// Compare an estimate with ground truth.
    Evaluate(EvaluateArgs),
    /// Propagate a frame-1 contour through a trajectory field.
    Track(TrackArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Wall motion model: incompressible or scale.
    #[arg(long, default_value = "incompressible")]
    mode: MotionMode,
    /// Grid side length, px.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Number of frames in the cycle.
    #[arg(long, default_value_t = 24)]
    frames: usize,
    /// Peak contraction fraction of the blood pool radius.
    #[arg(long, default_value_t = 0.2)]
    amplitude: f64,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation as a fraction of the dynamic range.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// End-diastolic endocardial radius, px.
    #[arg(long, default_value_t = 10.0)]
    r_inner: f64,
    /// End-diastolic epicardial radius, px.
    #[arg(long, default_value_t = 18.0)]
    r_outer: f64,
    /// Pixel spacing written into the sequence, mm.
    #[arg(long, default_value_t = 1.5)]
    pixel_spacing: f64,
}

#[derive(Args)]
struct SolverFlags {
    /// Pyramid levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Patch size at the finest level.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Patch stride at the finest level.
    #[arg(long)]
    patch_spacing: Option<usize>,
    /// Patch size at the coarsest level (doubled per finer level).
    #[arg(long, requires = "coarse_patch_spacing")]
    coarse_patch: Option<usize>,
    /// Patch stride at the coarsest level.
    #[arg(long, requires = "coarse_patch")]
    coarse_patch_spacing: Option<usize>,
    /// B-spline control point spacing, px.
    #[arg(long)]
    control_spacing: Option<f64>,
    /// Spatial bending weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Temporal smoothness weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Relative cost decrease that ends a level.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Iteration cap per level.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Largest control point move per iteration, px.
    #[arg(long)]
    step: Option<f64>,
    /// Accepted in configs and flags; the solver draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RegisterArgs {
    /// Input CSEQ sequence.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// llr, glr, variance or pairwise.
    #[arg(long)]
    metric: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the pixel spacing stored in the input, mm.
    #[arg(long)]
    pixel_spacing: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct StrainArgs {
    /// Sequence the trajectories belong to (CSEQ).
    #[arg(long = "in")]
    input: PathBuf,
    /// Trajectory or groupwise displacement field (DSP1).
    #[arg(long)]
    disp: PathBuf,
    /// Myocardial mask at frame 1 (MSK1).
    #[arg(long)]
    mask: PathBuf,
    /// Strain CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Also report 4 or 6 segmental curves.
    #[arg(long)]
    segments: Option<usize>,
    /// Angle (radians) where segment 1 starts, counterclockwise.
    #[arg(long)]
    ref_angle: Option<f64>,
    /// Average over the mask eroded by two pixels.
    #[arg(long)]
    eroded: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated field (DSP1).
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth trajectory field (DSP1).
    #[arg(long)]
    truth: PathBuf,
    /// Mask the errors are averaged over (MSK1).
    #[arg(long)]
    mask: PathBuf,
    /// Estimated strain CSV.
    #[arg(long, requires = "truth_strain")]
    est_strain: Option<PathBuf>,
    /// Reference strain CSV.
    #[arg(long, requires = "est_strain")]
    truth_strain: Option<PathBuf>,
    /// Tracked contour and its reference, compared at the reference's frame.
    #[arg(long, requires = "reference_contour")]
    tracked_contour: Option<PathBuf>,
    /// Reference contour CSV.
    #[arg(long, requires = "tracked_contour")]
    reference_contour: Option<PathBuf>,
    /// End-systolic frame (1-based); defaults to the truth's peak.
    #[arg(long)]
    es_frame: Option<usize>,
    /// Pixel spacing for millimetre figures.
    #[arg(long, default_value_t = 1.5)]
    pixel_spacing: f64,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    /// Frame-1 contour CSV.
    #[arg(long)]
    contour: PathBuf,
    /// Trajectory or groupwise displacement field (DSP1).
    #[arg(long)]
    disp: PathBuf,
    /// Target frame, 1-based.
    #[arg(long)]
    frame: usize,
    /// Contour CSV to write.
    #[arg(long)]
    out: PathBuf,
}

/// Failures that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
            Some(Error::Numerical(_)) | Some(Error::NonFinite(_)) => Failure::Numerical(e),
            _ => Failure::Data(e),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Data(e.into()))?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Phantom(a) => phantom(a, &config).map_err(Failure::from),
        Command::Register(a) => register(a, config, cli.deterministic),
        Command::Strain(a) => strain_cmd(a, &config).map_err(Failure::from),
        Command::Evaluate(a) => evaluate(a).map_err(Failure::from),
        Command::Track(a) => track(a).map_err(Failure::from),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn phantom(a: PhantomArgs, config: &RunConfig) -> Result<()> {
    let spec = PhantomSpec {
        nx: a.size,
        ny: a.size,
        nt: a.frames,
        r_inner: a.r_inner,
        r_outer: a.r_outer,
        amplitude: a.amplitude,
        mode: a.mode,
        noise: a.noise,
        pixel_spacing: a.pixel_spacing,
        seed: a.seed.unwrap_or(config.solver.seed),
        ..PhantomSpec::default()
    };
    let (seq, truth) = generate_phantom(&spec)?;
    ensure_dir(&a.out)?;
    io::write_cseq(&a.out.join("cine.cseq"), &seq)?;
    io::write_dsp1(&a.out.join("truth.dsp1"), truth.trajectory().field())?;
    io::write_msk1(&a.out.join("myo.msk1"), truth.mask())?;
    let (grs, gcs) = truth.global_truth();
    io::write_strain(&a.out.join("truth_strain.csv"), &StrainTable::from_fractions(&grs, &gcs, &[]))?;
    let endo = Contour::circle(spec.center(), spec.r_inner, 64, 0)?;
    io::write_contour(&a.out.join("endo.csv"), &endo)?;
    let es = truth.end_systole();
    let endo_es = Contour::circle(spec.center(), truth.inner_radius(es), 64, es)?;
    io::write_contour(&a.out.join("endo_es.csv"), &endo_es)?;
    log::info!("phantom written to {} (end-systole at frame {})", a.out.display(), es + 1);
    Ok(())
}

fn apply_solver_flags(solver: &mut SolverConfig, f: &SolverFlags) {
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    let setf = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut solver.levels, f.levels);
    set(&mut solver.patch_size, f.patch_size);
    set(&mut solver.patch_spacing, f.patch_spacing);
    set(&mut solver.max_iterations, f.max_iterations);
    setf(&mut solver.control_spacing, f.control_spacing);
    setf(&mut solver.lambda, f.lambda);
    setf(&mut solver.mu, f.mu);
    setf(&mut solver.tolerance, f.tolerance);
    setf(&mut solver.initial_step, f.step);
    if let Some(s) = f.seed {
        solver.seed = s;
    }
    if let (Some(size), Some(spacing)) = (f.coarse_patch, f.coarse_patch_spacing) {
        *solver = solver.clone().with_coarsest_patch(size, spacing);
    }
}

fn warn_inversion(inv: &Inversion) {
    if inv.max_residual > Inversion::WARN_RESIDUAL {
        log::warn!(
            "frame-1 inversion left a residual of {:.3} px (tolerance {})",
            inv.max_residual,
            Inversion::TOLERANCE
        );
    }
}

fn register(a: RegisterArgs, mut config: RunConfig, deterministic: bool) -> std::result::Result<(), Failure> {
    apply_solver_flags(&mut config.solver, &a.solver);
    config.solver.deterministic |= deterministic;
    config.solver.validate().map_err(|e| usage(e.to_string()))?;
    let metric = a.metric.or_else(|| Some(config.metric.to_string())).unwrap_or_default();
    let input = a
        .input
        .or(config.input.clone())
        .ok_or_else(|| Failure::Data(anyhow!("no input sequence: pass --in or set `input` in the config file")))?;
    let out = a
        .out
        .or(config.output.clone())
        .ok_or_else(|| usage("register needs --out (or `output` in the config file)"))?;
    let pairwise = metric.eq_ignore_ascii_case("pairwise");
    let kind = if pairwise {
        None
    } else {
        Some(
            metric
                .parse::<MetricKind>()
                .map_err(|_| usage(format!("unknown metric '{metric}' (expected llr, glr, variance or pairwise)")))?,
        )
    };
    let mut seq = io::read_cseq(&input).map_err(|e| Failure::Data(e.into()))?;
    if let Some(s) = a.pixel_spacing.or(config.pixel_spacing) {
        seq = seq.with_pixel_spacing(s).map_err(|e| usage(e.to_string()))?;
    }
    let seq = seq.normalized();
    let go = || -> Result<()> {
        ensure_dir(&out)?;
        match kind {
            None => {
                let r = register_pairwise(&seq, &config.solver)?;
                io::write_dsp1(&out.join("trajectory.dsp1"), r.trajectory.field())?;
                io::write_dsp1(&out.join("steps.dsp1"), &DisplacementField::stack(&r.steps)?)?;
                io::write_trace(&out.join("trace.csv"), &r.trace.records, true)?;
                log::info!("pairwise registration finished in {:.1} s", r.trace.wall_seconds);
            }
            Some(kind) => {
                let r = register_groupwise(&seq, kind, &config.solver)?;
                let (traj, inv) = compose_to_first_frame(&r.displacement)?;
                warn_inversion(&inv);
                io::write_dsp1(&out.join("trajectory.dsp1"), traj.field())?;
                io::write_dsp1(&out.join("displacement.dsp1"), &r.displacement)?;
                io::write_trace(&out.join("trace.csv"), &r.trace.records, false)?;
                log::info!("{kind} registration finished in {:.1} s", r.trace.wall_seconds);
            }
        }
        Ok(())
    };
    go().map_err(Failure::from)
}

/// A trajectory has an identically zero first frame; anything else is taken
/// as a groupwise displacement and composed onto frame 1 first.
fn load_trajectory(path: &Path) -> Result<TrajectoryField> {
    let field = io::read_dsp1(path)?;
    if field.frame(0).iter().all(|d| *d == [0.0; 2]) {
        return Ok(TrajectoryField::from_field(field));
    }
    log::info!("{}: first frame is non-zero, composing to frame-1 trajectories", path.display());
    let (traj, inv) = compose_to_first_frame(&field)?;
    warn_inversion(&inv);
    Ok(traj)
}

fn strain_cmd(a: StrainArgs, config: &RunConfig) -> Result<()> {
    let seq = io::read_cseq(&a.input)?;
    let traj = load_trajectory(&a.disp)?;
    io::check_companion(&seq, traj.field())?;
    let ref_angle = a.ref_angle.unwrap_or(config.ref_angle);
    let mask = io::read_msk1(&a.mask)?.with_reference_angle(ref_angle);
    let analysis = strain::analyze(&traj, &mask)?;
    let (grs, gcs, stat_mask) = if a.eroded {
        let eroded = mask.eroded(strain::EROSION_PX)?;
        let curves = &analysis.curves;
        match (&curves.grs_eroded, &curves.gcs_eroded) {
            (Some(r), Some(c)) => (r, c, eroded),
            _ => unreachable!("erosion succeeded above"),
        }
    } else {
        (&analysis.curves.grs, &analysis.curves.gcs, mask.clone())
    };
    let segments = match a.segments.or(config.segments) {
        Some(n) => strain::segmental_strain(&analysis.circumferential, &stat_mask, n)?.values,
        None => Vec::new(),
    };
    io::write_strain(&a.out, &StrainTable::from_fractions(grs, gcs, &segments))?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let est = load_trajectory(&a.est)?;
    let truth = TrajectoryField::from_field(io::read_dsp1(&a.truth)?);
    let mask = io::read_msk1(&a.mask)?;
    let est_strain = strain::analyze(&est, &mask)?;
    let truth_strain = strain::analyze(&truth, &mask)?;
    let curves = match (&a.est_strain, &a.truth_strain) {
        (Some(e), Some(t)) => Some((io::read_strain(e)?.fractions(), io::read_strain(t)?.fractions())),
        _ => None,
    };
    let es = match a.es_frame {
        Some(0) => return Err(anyhow!(Error::InvalidArgument("frames are numbered from 1".into()))),
        Some(f) => f - 1,
        None => match &curves {
            Some((_, (_, gcs))) => eval::peak_frame(gcs),
            None => eval::peak_frame(&truth_strain.curves.gcs),
        },
    };
    let spacing = a.pixel_spacing;
    let epe_es = eval::epe(&est, &truth, &mask, Frames::At(es), spacing)?;
    let epe_all = eval::epe(&est, &truth, &mask, Frames::All, spacing)?;
    let ((grs_e, gcs_e), (grs_t, gcs_t)) = curves.unwrap_or_else(|| {
        (
            (est_strain.curves.grs.clone(), est_strain.curves.gcs.clone()),
            (truth_strain.curves.grs.clone(), truth_strain.curves.gcs.clone()),
        )
    });
    let mut report = MetricReport {
        epe_es_px: epe_es.px,
        epe_es_mm: epe_es.mm,
        epe_all_px: epe_all.px,
        epe_all_mm: epe_all.mm,
        vse_es_radial: Some(eval::vse(&est_strain.radial, &truth_strain.radial, &mask, es)?),
        vse_es_circumferential: Some(eval::vse(&est_strain.circumferential, &truth_strain.circumferential, &mask, es)?),
        gse_es_radial: Some(eval::gse(&grs_e, &grs_t, es)?),
        gse_es_circumferential: Some(eval::gse(&gcs_e, &gcs_t, es)?),
        drift_radial: Some(eval::drift(&grs_e)?),
        drift_circumferential: Some(eval::drift(&gcs_e)?),
        contour_mm: Vec::new(),
    };
    if let (Some(t), Some(r)) = (&a.tracked_contour, &a.reference_contour) {
        let (tracked, reference) = (io::read_contour(t)?, io::read_contour(r)?);
        report.contour_mm.push(("tracked".into(), eval::contour_distance(&tracked, &reference, spacing)));
    }
    io::write_report(&a.out, &report)?;
    print!("{report}");
    Ok(())
}

fn track(a: TrackArgs) -> Result<()> {
    let contour = io::read_contour(&a.contour)?;
    if contour.frame != 0 {
        log::warn!("contour is labelled frame {}, tracking it from frame 1", contour.frame + 1);
    }
    let traj = load_trajectory(&a.disp)?;
    if a.frame == 0 || a.frame > traj.nt() {
        return Err(anyhow!(Error::InvalidArgument(format!("--frame must be in 1..={}", traj.nt()))));
    }
    let tracked = eval::track_contour(&contour, &traj, a.frame - 1)?;
    io::write_contour(&a.out, &tracked)?;
    Ok(())
}
