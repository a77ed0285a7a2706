//! The three subcommands. Each writes its files plus a manifest and returns
//! the lines to print.

use std::f64::consts::PI;

use dbb_core::dynamics_bound::{integrate_orbit, omega_table, period_grid, OrbitSpec};
use dbb_core::dynamics_free::{psi_free_reduced, wave_norm, PathPoint};
use dbb_core::ensemble::{
    run_tof_experiment, ExperimentOutput, ExperimentSummary, Histogram, Lobe, TrajectoryStatus,
};
use dbb_core::ode::Tolerances;
use dbb_core::quantum_state::{ground_state_psi, spin_vector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{FailureCounts, Manifest, MANIFEST_FILE};
use crate::output::OutputDir;

/// Largest closed-form vs numeric orbit deviation accepted, in units of `a`.
pub const ORBIT_TOLERANCE: f64 = 1e-7;
/// Accepted `|norm - 1|` of a free-evolution profile.
pub const NORM_TOLERANCE: f64 = 1e-4;
pub const SUP_NORM_TOLERANCE: f64 = 0.05;
pub const MIN_P_VALUE: f64 = 1e-3;

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Worker threads for the trajectory ensemble; `None` uses all cores.
    pub threads: Option<usize>,
    /// Number of full trajectories to dump.
    pub paths: usize,
}

/// What a command did.
#[derive(Debug, Clone)]
pub struct Report {
    pub lines: Vec<String>,
    /// Checks that did not meet their tolerance; fatal only with `--strict`.
    pub verification_failures: Vec<String>,
    pub manifest_sha256: String,
}

fn finish(
    out: &mut OutputDir,
    command: &str,
    cfg: &RunConfig,
    failures: Option<FailureCounts>,
    mut lines: Vec<String>,
    verification_failures: Vec<String>,
) -> Result<Report, CliError> {
    let manifest = Manifest::new(command, cfg, failures, out.digests()?);
    out.write_text(MANIFEST_FILE, &manifest.to_json())?;
    let manifest_sha256 = manifest.sha256();
    lines.push(format!("manifest sha256 {manifest_sha256}"));
    Ok(Report {
        lines,
        verification_failures,
        manifest_sha256,
    })
}

#[derive(Serialize)]
struct OrbitRow {
    #[serde(rename = "t [time]")]
    t: f64,
    #[serde(rename = "closed_x [length]")]
    closed_x: f64,
    #[serde(rename = "closed_y [length]")]
    closed_y: f64,
    #[serde(rename = "closed_z [length]")]
    closed_z: f64,
    #[serde(rename = "numeric_x [length]")]
    numeric_x: f64,
    #[serde(rename = "numeric_y [length]")]
    numeric_y: f64,
    #[serde(rename = "numeric_z [length]")]
    numeric_z: f64,
    #[serde(rename = "deviation [length]")]
    deviation: f64,
}

#[derive(Serialize)]
struct OmegaCsvRow {
    #[serde(rename = "r0_over_a [1]")]
    r0_over_a: f64,
    #[serde(rename = "omega_nr [hbar/(m a^2)]")]
    omega_nr: f64,
    #[serde(rename = "omega_rel [hbar/(m a^2)]")]
    omega_rel: f64,
}

/// Orbit through `bound.r0` (closed form next to the integrated path) and
/// the table of both angular frequencies.
pub fn bound_orbit(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = &cfg.params;
    let s = spin_vector(&cfg.chi);
    let spec = OrbitSpec::new(cfg.bound.r0, s, p, cfg.bound.regime)?;
    let tol = Tolerances {
        rtol: cfg.bound.rtol,
        atol: cfg.bound.atol,
    };
    let samples = integrate_orbit(&spec, p, &period_grid(&spec, cfg.bound.samples), tol)?;
    let worst = samples.iter().map(|s| s.deviation()).fold(0.0, f64::max);

    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.write_csv(
        "orbit.csv",
        samples.iter().map(|s| OrbitRow {
            t: s.t,
            closed_x: s.closed[0],
            closed_y: s.closed[1],
            closed_z: s.closed[2],
            numeric_x: s.numeric[0],
            numeric_y: s.numeric[1],
            numeric_z: s.numeric[2],
            deviation: s.deviation(),
        }),
    )?;
    let table = omega_table(p, cfg.bound.table_rows)?;
    out.write_csv(
        "omega_table.csv",
        table.iter().map(|r| OmegaCsvRow {
            r0_over_a: r.r0_over_a,
            omega_nr: r.omega_nr,
            omega_rel: r.omega_rel,
        }),
    )?;

    let lines = vec![
        format!(
            "orbit: regime {:?}, |R0| = {:.6}, omega = {:.6e}, period = {:.6e}",
            spec.regime,
            (cfg.bound.r0.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            spec.omega,
            spec.period()
        ),
        format!("max |closed - numeric| = {worst:.3e}"),
    ];
    let mut failures = Vec::new();
    if !(worst < ORBIT_TOLERANCE * p.box_radius) {
        failures.push(format!("orbit deviation {worst:.3e} exceeds {ORBIT_TOLERANCE:e} a"));
    }
    finish(&mut out, "bound-orbit", cfg, None, lines, failures)
}

#[derive(Serialize)]
struct ProfileRow {
    #[serde(rename = "r [length]")]
    r: f64,
    #[serde(rename = "re_psi [length^-3/2]")]
    re: f64,
    #[serde(rename = "im_psi [length^-3/2]")]
    im: f64,
    #[serde(rename = "abs_psi [length^-3/2]")]
    abs: f64,
    #[serde(rename = "psi0 [length^-3/2]")]
    psi0: f64,
    #[serde(rename = "norm [1]")]
    norm: f64,
}

pub fn profile_file_name(tau: f64) -> String {
    format!("psi_tau_{tau}.csv")
}

/// Radial profiles of the released wave at each requested reduced time.
pub fn free_evolve(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = &cfg.params;
    let a = p.box_radius;
    let r_max = cfg.free.r_max_over_a * a;
    let n = cfg.free.points;
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for &tau in &cfg.free.taus {
        let norm = wave_norm(tau, p)?;
        let rows = (1..=n)
            .map(|j| {
                let r = r_max * j as f64 / n as f64;
                let psi = psi_free_reduced(r, tau, p)?;
                Ok(ProfileRow {
                    r,
                    re: psi.re,
                    im: psi.im,
                    abs: psi.norm(),
                    psi0: if r < a { ground_state_psi(r, p) } else { 0.0 },
                    norm,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let name = profile_file_name(tau);
        out.write_csv(&name, rows)?;
        lines.push(format!("tau = {tau}: norm = {norm:.9} -> {name}"));
        if !((norm - 1.0).abs() < NORM_TOLERANCE) {
            failures.push(format!("norm at tau = {tau} is {norm}, outside 1 +- {NORM_TOLERANCE:e}"));
        }
    }
    finish(&mut out, "free-evolve", cfg, None, lines, failures)
}

#[derive(Serialize)]
struct RecordRow {
    index: usize,
    #[serde(rename = "R0x [length]")]
    r0x: f64,
    #[serde(rename = "R0y [length]")]
    r0y: f64,
    #[serde(rename = "R0z [length]")]
    r0z: f64,
    #[serde(rename = "t1 [time]")]
    t1: Option<f64>,
    #[serde(rename = "tf [time]")]
    tf: Option<f64>,
    #[serde(rename = "p [momentum]")]
    p: Option<f64>,
    status: TrajectoryStatus,
    resamples: usize,
}

#[derive(Serialize)]
struct TofBinRow {
    #[serde(rename = "tf_lo [time]")]
    lo: f64,
    #[serde(rename = "tf_hi [time]")]
    hi: f64,
    count: u64,
    #[serde(rename = "density [1/time]")]
    density: f64,
}

#[derive(Serialize)]
struct MomentumBinRow {
    #[serde(rename = "p_lo [momentum]")]
    lo: f64,
    #[serde(rename = "p_hi [momentum]")]
    hi: f64,
    count: u64,
    #[serde(rename = "density [1/momentum]")]
    density: f64,
}

#[derive(Serialize)]
struct LambdaRow {
    #[serde(rename = "p [momentum]")]
    p: f64,
    #[serde(rename = "lambda_qm [1/momentum]")]
    lambda_qm: f64,
}

#[derive(Serialize)]
struct PiRow {
    #[serde(rename = "tf [time]")]
    tf: f64,
    #[serde(rename = "pi_dbb [1/time]")]
    pi_dbb: f64,
}

#[derive(Serialize)]
struct PathRow {
    #[serde(rename = "t [time]")]
    t: f64,
    #[serde(rename = "R [length]")]
    r: f64,
    #[serde(rename = "Theta [rad]")]
    theta: f64,
    #[serde(rename = "Phi [rad]")]
    phi: f64,
    #[serde(rename = "x [length]")]
    x: f64,
    #[serde(rename = "y [length]")]
    y: f64,
    #[serde(rename = "z [length]")]
    z: f64,
}

#[derive(Serialize)]
struct Outliers {
    underflow: u64,
    overflow: u64,
}

impl Outliers {
    fn of(h: &Histogram) -> Self {
        Self {
            underflow: h.underflow,
            overflow: h.overflow,
        }
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    summary: &'a ExperimentSummary,
    lobes: &'a [Lobe],
    tof_hist: Outliers,
    p_hist: Outliers,
}

fn bin_rows(h: &Histogram) -> impl Iterator<Item = (f64, f64, u64, f64)> + '_ {
    let density = h.density();
    h.edges
        .windows(2)
        .zip(&h.counts)
        .zip(density)
        .map(|((w, &c), d)| (w[0], w[1], c, d))
}

fn failure_counts(out: &ExperimentOutput, attempted: usize) -> FailureCounts {
    let s = &out.summary;
    FailureCounts {
        attempted,
        detected: s.detected,
        failed: s.failed,
        resamples: s.resamples,
        max_time_exceeded: s.max_time_failures,
        node_encounter: s.node_failures,
    }
}

/// Monte Carlo time-of-flight run with all histograms, reference curves and
/// goodness-of-fit figures.
pub fn tof_run(cfg: &RunConfig, opts: &Options) -> Result<Report, CliError> {
    let exp = cfg.experiment(opts.paths);
    let result = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(|| run_tof_experiment(&exp)),
        None => run_tof_experiment(&exp),
    };
    let run = result?;
    let p = &cfg.params;

    let mut out = OutputDir::create(&cfg.output_dir)?;
    out.write_csv(
        "records.csv",
        run.outcomes.iter().map(|o| {
            let rec = o.record.as_ref();
            RecordRow {
                index: o.index,
                r0x: o.r0[0],
                r0y: o.r0[1],
                r0z: o.r0[2],
                t1: rec.map(|r| r.hit_time),
                tf: rec.map(|r| r.flight_time),
                p: rec.map(|r| r.p_reconstructed),
                status: o.status,
                resamples: o.resamples,
            }
        }),
    )?;
    out.write_csv(
        "tof_hist.csv",
        bin_rows(&run.tof_hist).map(|(lo, hi, count, density)| TofBinRow { lo, hi, count, density }),
    )?;
    out.write_csv(
        "p_hist.csv",
        bin_rows(&run.p_hist).map(|(lo, hi, count, density)| MomentumBinRow { lo, hi, count, density }),
    )?;
    out.write_csv(
        "lambda_qm.csv",
        run.lambda_curve
            .x
            .iter()
            .zip(&run.lambda_curve.density)
            .map(|(&p, &lambda_qm)| LambdaRow { p, lambda_qm }),
    )?;
    out.write_csv(
        "pi_dbb.csv",
        run.pi_curve.x.iter().zip(&run.pi_curve.density).map(|(&tf, &pi_dbb)| PiRow { tf, pi_dbb }),
    )?;
    for o in &run.outcomes {
        if let Some(path) = o.record.as_ref().and_then(|r| r.path.as_ref()) {
            out.write_csv(&format!("paths/path_{:06}.csv", o.index), path.iter().map(path_row))?;
        }
    }
    out.write_json(
        "summary.json",
        &SummaryFile {
            summary: &run.summary,
            lobes: &run.lobes,
            tof_hist: Outliers::of(&run.tof_hist),
            p_hist: Outliers::of(&run.p_hist),
        },
    )?;

    let s = &run.summary;
    let flux = s.flux_normalization;
    let lines = vec![
        format!(
            "trajectories: {} detected, {} failed ({} past t_max, {} at nodes), {} resamples",
            s.detected, s.failed, s.max_time_failures, s.node_failures, s.resamples
        ),
        format!(
            "momentum: sup-norm deviation {:.4} of the Lambda_QM peak; chi-square {:.2} on {} dof, p = {:.4}",
            s.p_sup_norm, s.p_chi_square.statistic, s.p_chi_square.dof, s.p_chi_square.p_value
        ),
        format!(
            "time of flight: chi-square {:.2} on {} dof, p = {:.4}; {} secondary lobe(s)",
            s.tof_chi_square.statistic, s.tof_chi_square.dof, s.tof_chi_square.p_value, s.secondary_lobes
        ),
        format!(
            "Pi_dBB mass up to t_max {:.6}, estimated mass beyond {:.2e} (L = {}, a = {})",
            flux.integral, flux.tail_estimate, p.detector_radius, p.box_radius
        ),
    ];
    let mut failures = Vec::new();
    if !(s.p_sup_norm < SUP_NORM_TOLERANCE) {
        failures.push(format!("momentum sup-norm deviation {:.4} >= {SUP_NORM_TOLERANCE}", s.p_sup_norm));
    }
    for (what, chi) in [("momentum", &s.p_chi_square), ("time-of-flight", &s.tof_chi_square)] {
        if !(chi.p_value > MIN_P_VALUE) {
            failures.push(format!(
                "{what} chi-square p-value {:.3e} not above {MIN_P_VALUE:e} ({} usable bins)",
                chi.p_value, chi.bins_used
            ));
        }
    }
    if s.secondary_lobes == 0 {
        failures.push("no secondary early-arrival lobe in the time-of-flight histogram".into());
    }
    let counts = failure_counts(&run, cfg.n_trajectories);
    finish(&mut out, "tof-run", cfg, Some(counts), lines, failures)
}

fn path_row(pt: &PathPoint) -> PathRow {
    PathRow {
        t: pt.t,
        r: pt.state.r,
        theta: pt.state.theta,
        phi: pt.state.phi.rem_euclid(2.0 * PI),
        x: pt.position[0],
        y: pt.position[1],
        z: pt.position[2],
    }
}
