//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use dbb_core::dynamics_bound::Regime;
use dbb_core::dynamics_free::{FarFieldSwitch, IntegrationControls};
use dbb_core::ensemble::ExperimentConfig;
use dbb_core::ode::Tolerances;
use dbb_core::quantum_state::{PhysicalParams, SpinorPair};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run needs. Missing keys take their defaults, which
/// reproduce the desk-scale time-of-flight experiment (`L = 500`, `n = 2e4`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n_trajectories: usize,
    pub bins: usize,
    /// Bins of the coarse momentum histogram used for the sup-norm check.
    pub compare_bins: usize,
    pub trim_quantiles: [f64; 2],
    pub max_resamples: usize,
    pub max_failure_fraction: f64,
    pub params: PhysicalParams,
    pub chi: SpinorPair,
    pub integrator: IntegratorConfig,
    pub far_field: FarFieldSwitch,
    pub bound: BoundConfig,
    pub free: FreeConfig,
}

/// Settings of the free-flight trajectory integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Reduced time at which trajectories leave their initial position.
    pub tau_start: f64,
    /// Lab-time cutoff; omitted means `t0 + 20 m L a / (hbar pi)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub r0: [f64; 3],
    pub regime: Regime,
    /// Rows of the orbit file, spread over one period.
    pub samples: usize,
    /// Rows of the angular-frequency table.
    pub table_rows: usize,
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeConfig {
    /// Reduced times `hbar (t - t0)/m` of the emitted profiles.
    pub taus: Vec<f64>,
    /// Profiles cover `0 < r <= r_max_over_a * a`.
    pub r_max_over_a: f64,
    pub points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            output_dir: PathBuf::from("out"),
            seed: exp.seed,
            n_trajectories: exp.n_trajectories,
            bins: exp.bins,
            compare_bins: exp.compare_bins,
            trim_quantiles: [exp.trim_quantiles.0, exp.trim_quantiles.1],
            max_resamples: exp.max_resamples,
            max_failure_fraction: exp.max_failure_fraction,
            params: exp.params,
            chi: exp.chi,
            integrator: IntegratorConfig::default(),
            far_field: exp.controls.far_field,
            bound: BoundConfig::default(),
            free: FreeConfig::default(),
        }
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let c = IntegrationControls::default();
        Self {
            rtol: c.tol.rtol,
            atol: c.tol.atol,
            tau_start: c.tau_start,
            t_max: c.t_max,
        }
    }
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            r0: [0.4, 0.0, 0.3],
            regime: Regime::Nonrelativistic,
            samples: 401,
            table_rows: 99,
            rtol: 1e-11,
            atol: 1e-13,
        }
    }
}

impl Default for FreeConfig {
    fn default() -> Self {
        Self {
            taus: vec![0.05, 0.2, 1.0],
            r_max_over_a: 4.0,
            points: 2000,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite (got {v})")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<(), CliError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be at least 1")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Output(e.to_string()))
    }

    /// Checks every field against the preconditions of the operations it feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        let p = &self.params;
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!(
                "seed must be at most {} so that it fits a TOML integer (got {})",
                i64::MAX,
                self.seed
            )));
        }
        at_least_one("n_trajectories", self.n_trajectories)?;
        at_least_one("bins", self.bins)?;
        at_least_one("compare_bins", self.compare_bins)?;
        let [lo, hi] = self.trim_quantiles;
        if !((0.0..0.5).contains(&lo) && (0.5..=1.0).contains(&hi)) {
            return Err(CliError::Config(format!(
                "trim_quantiles must satisfy 0 <= lo < 0.5 <= hi <= 1 (got [{lo}, {hi}])"
            )));
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return Err(CliError::Config(format!(
                "max_failure_fraction must lie in [0, 1) (got {})",
                self.max_failure_fraction
            )));
        }
        positive("integrator.rtol", self.integrator.rtol)?;
        positive("integrator.atol", self.integrator.atol)?;
        positive("integrator.tau_start", self.integrator.tau_start)?;
        if let Some(t_max) = self.integrator.t_max {
            if !(t_max > p.t0 && t_max.is_finite()) {
                return Err(CliError::Config(format!(
                    "integrator.t_max ({t_max}) must be finite and later than params.t0 ({})",
                    p.t0
                )));
            }
        }
        positive("far_field.min_r_over_a", self.far_field.min_r_over_a)?;
        positive("far_field.min_x_over_pi", self.far_field.min_x_over_pi)?;
        let r0 = self.bound.r0;
        let rad = (r0[0] * r0[0] + r0[1] * r0[1] + r0[2] * r0[2]).sqrt();
        if !(rad > 0.0 && rad < p.box_radius) {
            return Err(CliError::Config(format!(
                "bound.r0 must lie strictly inside the box, 0 < |r0| < {} (got |r0| = {rad})",
                p.box_radius
            )));
        }
        if self.bound.samples < 2 {
            return Err(CliError::Config("bound.samples must be at least 2".into()));
        }
        at_least_one("bound.table_rows", self.bound.table_rows)?;
        positive("bound.rtol", self.bound.rtol)?;
        positive("bound.atol", self.bound.atol)?;
        if self.free.taus.is_empty() {
            return Err(CliError::Config("free.taus must list at least one reduced time".into()));
        }
        for &tau in &self.free.taus {
            positive("each entry of free.taus", tau)?;
        }
        positive("free.r_max_over_a", self.free.r_max_over_a)?;
        if self.free.points < 2 {
            return Err(CliError::Config("free.points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn controls(&self) -> IntegrationControls {
        IntegrationControls {
            tol: Tolerances {
                rtol: self.integrator.rtol,
                atol: self.integrator.atol,
            },
            tau_start: self.integrator.tau_start,
            t_max: self.integrator.t_max,
            far_field: self.far_field,
            record_path: false,
        }
    }

    pub fn experiment(&self, keep_paths: usize) -> ExperimentConfig {
        ExperimentConfig {
            params: self.params,
            chi: self.chi,
            n_trajectories: self.n_trajectories,
            seed: self.seed,
            bins: self.bins,
            compare_bins: self.compare_bins,
            trim_quantiles: (self.trim_quantiles[0], self.trim_quantiles[1]),
            controls: self.controls(),
            max_resamples: self.max_resamples,
            max_failure_fraction: self.max_failure_fraction,
            keep_paths,
        }
    }
}
