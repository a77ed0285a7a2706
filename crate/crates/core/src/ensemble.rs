//! Quantum-equilibrium sampling, the time-of-flight experiment and its statistics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics_free::{
    integrate_to_detector, radial_flux_reduced, IntegrationControls, PathPoint, SpinFrame, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::quad::{gk15, integrate_partitioned, trapezoid, QuadOptions};
use crate::quantum_state::{spin_vector, PhysicalParams, SpinorPair};
use crate::vec3::{self, Vec3};

// ---------------------------------------------------------------------------
// Radial sampling

/// `x - sin x`, accurate for small `x`.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum = term;
        for j in 2..9 {
            let n = (2 * j + 1) as f64;
            term *= -x2 / ((n - 1.0) * n);
            sum += term;
        }
        sum
    } else {
        x - x.sin()
    }
}

/// Radial CDF `F(r) = r/a - sin(2 pi r/a)/(2 pi)` of the ground state.
pub fn radial_cdf(r: f64, params: &PhysicalParams) -> f64 {
    let a = params.box_radius;
    if r <= 0.0 {
        return 0.0;
    }
    if r >= a {
        return 1.0;
    }
    x_minus_sin(2.0 * PI * r / a) / (2.0 * PI)
}

/// Radial density `f(r) = (2/a) sin^2(pi r/a)`.
pub fn radial_density(r: f64, params: &PhysicalParams) -> f64 {
    let a = params.box_radius;
    if !(0.0..=a).contains(&r) {
        return 0.0;
    }
    2.0 / a * (PI * r / a).sin().powi(2)
}

/// Inverse-CDF sampler for the radial density, with a tabulated starting
/// guess and a safeguarded Newton polish.
#[derive(Debug, Clone)]
pub struct RadialSampler {
    params: PhysicalParams,
    cdf: Vec<f64>,
}

const RADIAL_TABLE: usize = 2048;

impl RadialSampler {
    pub fn new(params: &PhysicalParams) -> Self {
        let a = params.box_radius;
        let cdf = (0..=RADIAL_TABLE)
            .map(|j| radial_cdf(a * j as f64 / RADIAL_TABLE as f64, params))
            .collect();
        Self { params: *params, cdf }
    }

    /// `F^{-1}(u)` for `u` in `[0, 1]`.
    pub fn invert(&self, u: f64) -> f64 {
        let a = self.params.box_radius;
        let h = a / RADIAL_TABLE as f64;
        let j = self.cdf.partition_point(|&f| f <= u).clamp(1, RADIAL_TABLE) - 1;
        let (mut lo, mut hi) = (j as f64 * h, (j + 1) as f64 * h);
        let (f_lo, f_hi) = (self.cdf[j], self.cdf[j + 1]);
        let mut r = if f_hi > f_lo {
            lo + h * (u - f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..60 {
            let g = radial_cdf(r, &self.params) - u;
            if g == 0.0 {
                return r;
            }
            if g > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let d = radial_density(r, &self.params);
            let newton = r - g / d;
            let next = if d > 0.0 && newton >= lo && newton <= hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let done = (next - r).abs() <= 1e-12 * a;
            r = next;
            if done {
                break;
            }
        }
        r
    }

    /// Draws a point from `|psi|^2`: radius by inversion, direction uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        loop {
            let u: f64 = rng.random();
            let r = self.invert(u);
            let dir: [f64; 3] = UnitSphere.sample(rng);
            if r > 0.0 && r < self.params.box_radius {
                return vec3::scale(dir, r);
            }
        }
    }
}

/// RNG for trajectory `index`: one ChaCha stream per index, so results do
/// not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` initial positions drawn from the ground-state density.
pub fn sample_initial_positions(n: usize, seed: u64, params: &PhysicalParams) -> Vec<Vec3> {
    let sampler = RadialSampler::new(params);
    (0..n)
        .into_par_iter()
        .map(|i| sampler.sample(&mut trajectory_rng(seed, i as u64)))
        .collect()
}

// ---------------------------------------------------------------------------
// Analytic densities

/// `sin^2 q / (pi^2 - q^2)^2`, continuous at `q = pi`.
fn lobe_profile(q: f64) -> f64 {
    let d = q - PI;
    if d.abs() < 1e-3 {
        let d2 = d * d;
        // (sin d / d)^2 to O(d^6)
        let sinc = 1.0 - d2 / 6.0 + d2 * d2 / 120.0 - d2 * d2 * d2 / 5040.0;
        (sinc / (q + PI)).powi(2)
    } else {
        (q.sin() / ((PI - q) * (PI + q))).powi(2)
    }
}

/// Momentum-magnitude density `(4 pi a/hbar) sin^2 q / (pi^2 - q^2)^2`, `q = p a/hbar`.
pub fn lambda_qm(p: f64, params: &PhysicalParams) -> f64 {
    let a_over_hbar = params.box_radius / params.hbar;
    4.0 * PI * a_over_hbar * lobe_profile(p.abs() * a_over_hbar)
}

/// Cutoff in `q` beyond which moments of the lobe profile are taken analytically.
const MOMENT_CUTOFF_LOBES: usize = 400;

/// `int_Q^inf q^power sin^2 q / (q^2 - pi^2)^2 dq` for `power` in {0, 2}.
///
/// The non-oscillatory half has a closed form; the `cos 2q` half is reduced
/// by two integrations by parts.
fn lobe_tail(power: u32, big_q: f64) -> f64 {
    let q = big_q;
    let s = q * q - PI * PI;
    // ln((q - pi)/(q + pi))
    let log_ratio = (-PI / q).ln_1p() - (PI / q).ln_1p();
    let (plain, g, dg) = match power {
        0 => (
            q / (2.0 * PI * PI * s) + log_ratio / (4.0 * PI.powi(3)),
            1.0 / (s * s),
            -4.0 * q / (s * s * s),
        ),
        2 => (
            q / (2.0 * s) - log_ratio / (4.0 * PI),
            q * q / (s * s),
            -2.0 * q * (q * q + PI * PI) / (s * s * s),
        ),
        _ => panic!("lobe_tail supports powers 0 and 2"),
    };
    let oscillatory = -g * (2.0 * q).sin() / 2.0 - dg * (2.0 * q).cos() / 4.0;
    0.5 * plain - 0.5 * oscillatory
}

/// `int_0^inf p^power Lambda_QM(p) dp` for `power` in {0, 2}.
pub fn lambda_qm_moment(power: u32, params: &PhysicalParams) -> f64 {
    let big_q = MOMENT_CUTOFF_LOBES as f64 * PI;
    let breaks: Vec<f64> = (0..=MOMENT_CUTOFF_LOBES).map(|j| j as f64 * PI).collect();
    let body = integrate_partitioned(
        |q| q.powi(power as i32) * lobe_profile(q),
        &breaks,
        QuadOptions::with_tol(1e-15, 1e-13),
    );
    let scale = (params.hbar / params.box_radius).powi(power as i32);
    4.0 * PI * scale * (body.value + lobe_tail(power, big_q))
}

/// Cumulative distribution of `Lambda_QM` at `p`.
pub fn lambda_qm_cdf(p: f64, params: &PhysicalParams) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let q = p * params.box_radius / params.hbar;
    if q > MOMENT_CUTOFF_LOBES as f64 * PI {
        return 1.0 - 4.0 * PI * lobe_tail(0, q);
    }
    let lobes = (q / PI).ceil() as usize;
    let mut breaks: Vec<f64> = (0..lobes).map(|j| j as f64 * PI).collect();
    breaks.push(q);
    let r = integrate_partitioned(lobe_profile, &breaks, QuadOptions::with_tol(1e-15, 1e-13));
    (4.0 * PI * r.value).min(1.0)
}

/// `p` with `lambda_qm_cdf(p) = u`.
pub fn lambda_qm_quantile(u: f64, params: &PhysicalParams) -> f64 {
    let (mut lo, mut hi) = (0.0, params.hbar / params.box_radius);
    while lambda_qm_cdf(hi, params) < u {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if lambda_qm_cdf(mid, params) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Arrival-time density `(hbar/m) 4 pi L^2 Im[psi* psi'](L, t1)`.
pub fn pi_dbb(t1: f64, params: &PhysicalParams) -> Result<f64> {
    let tau = params.reduced_time(t1);
    let big_l = params.detector_radius;
    // dt = (m/hbar) dtau is absorbed by the flux being per unit lab time
    Ok(4.0 * PI * big_l * big_l * radial_flux_reduced(big_l, tau, params)?)
}

/// Probability that `t1 <= t` under `pi_dbb`, by adaptive quadrature.
pub fn pi_dbb_mass(t_lo: f64, t_hi: f64, params: &PhysicalParams) -> f64 {
    let breaks = log_breaks(t_lo - params.t0, t_hi - params.t0, 64);
    let r = integrate_partitioned(
        |tf| pi_dbb(params.t0 + tf, params).unwrap_or(0.0),
        &breaks,
        QuadOptions::with_tol(1e-13, 1e-10),
    );
    r.value
}

fn log_breaks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l0, l1) = (lo.max(1e-300).ln(), hi.ln());
    (0..=n).map(|j| (l0 + (l1 - l0) * j as f64 / n as f64).exp()).collect()
}

/// Normalization of `pi_dbb` over `(t0, t_max]` plus the probability beyond `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxNormalization {
    pub integral: f64,
    /// Estimated probability of arriving after `t_max` (slow momenta below `m L / t_f`).
    pub tail_estimate: f64,
}

pub fn pi_dbb_normalization(t_max: f64, params: &PhysicalParams) -> FluxNormalization {
    let tf_max = t_max - params.t0;
    // below tau ~ 1e-3 L the flux is smaller than any double
    let lo = 1e-3 * params.mass * params.detector_radius * params.box_radius / params.hbar;
    let integral = pi_dbb_mass(params.t0 + lo, t_max, params);
    let p_min = params.mass * params.detector_radius / tf_max;
    FluxNormalization {
        integral,
        tail_estimate: lambda_qm_cdf(p_min, params),
    }
}

// ---------------------------------------------------------------------------
// Curves and histograms

/// Tabulated density on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityCurve {
    pub fn tabulate<F: Fn(f64) -> f64>(x: Vec<f64>, f: F) -> Self {
        let density = x.iter().map(|&v| f(v)).collect();
        Self { x, density }
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.x, &self.density)
    }

    pub fn peak(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }
}

/// Change of variables `Lambda(p) = (m L / p^2) Pi(m L / p)` from flight
/// time to momentum. The output grid is ascending in `p`.
pub fn tof_to_momentum_density(curve: &DensityCurve, params: &PhysicalParams) -> DensityCurve {
    let ml = params.mass * params.detector_radius;
    let (mut x, mut density) = (Vec::with_capacity(curve.x.len()), Vec::with_capacity(curve.x.len()));
    for (&tf, &pi) in curve.x.iter().zip(&curve.density).rev() {
        let p = ml / tf;
        x.push(p);
        density.push(ml / (p * p) * pi);
    }
    DensityCurve { x, density }
}

/// Fixed-edge histogram. Samples outside the edges are tallied in
/// `underflow`/`overflow`, so `sum(counts) + underflow + overflow = total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn with_edges(samples: &[f64], edges: Vec<f64>) -> Self {
        assert!(edges.len() >= 2, "a histogram needs at least one bin");
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        let (mut underflow, mut overflow) = (0, 0);
        let last = edges[bins];
        for &v in samples {
            if v < edges[0] {
                underflow += 1;
            } else if v > last {
                overflow += 1;
            } else {
                // the top edge belongs to the last bin
                let j = edges.partition_point(|&e| e <= v).clamp(1, bins) - 1;
                counts[j] += 1;
            }
        }
        Self {
            edges,
            counts,
            total: samples.len() as u64,
            underflow,
            overflow,
        }
    }

    pub fn uniform(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|j| lo + (hi - lo) * j as f64 / bins as f64).collect();
        Self::with_edges(samples, edges)
    }

    /// Uniform bins over the `[q_lo, q_hi]` sample-quantile range.
    pub fn trimmed(samples: &[f64], bins: usize, q_lo: f64, q_hi: f64) -> Self {
        let (lo, hi) = quantile_range(samples, q_lo, q_hi);
        Self::uniform(samples, lo, hi, bins)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Density per bin, normalized by the total sample count.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts
            .iter()
            .zip(self.widths())
            .map(|(&c, w)| c as f64 / (n * w))
            .collect()
    }

    /// Bin-wise image under a decreasing map `x -> g(x)`: counts carry
    /// over, edges are mapped and reversed, densities follow the widths.
    pub fn map_decreasing<G: Fn(f64) -> f64>(&self, g: G) -> Histogram {
        Histogram {
            edges: self.edges.iter().rev().map(|&e| g(e)).collect(),
            counts: self.counts.iter().rev().cloned().collect(),
            total: self.total,
            underflow: self.overflow,
            overflow: self.underflow,
        }
    }
}

/// Momentum histogram obtained from a flight-time histogram by `p = m L / t_f`.
pub fn momentum_histogram_from_tof(tof: &Histogram, params: &PhysicalParams) -> Histogram {
    let ml = params.mass * params.detector_radius;
    tof.map_decreasing(|tf| ml / tf)
}

/// Sample quantiles by sorting (linear interpolation between order statistics).
pub fn quantile_range(samples: &[f64], q_lo: f64, q_hi: f64) -> (f64, f64) {
    let mut v: Vec<f64> = samples.iter().cloned().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, q_lo), quantile_sorted(&v, q_hi))
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins_used: usize,
}

/// Minimum expected count for a bin to enter the chi-square sum.
pub const MIN_EXPECTED: f64 = 20.0;

/// Pearson chi-square over bins with expected count `>= MIN_EXPECTED`,
/// `k - 1` degrees of freedom.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> ChiSquareResult {
    let mut statistic = 0.0;
    let mut bins_used = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= MIN_EXPECTED {
            statistic += (o as f64 - e).powi(2) / e;
            bins_used += 1;
        }
    }
    let dof = bins_used.saturating_sub(1);
    let p_value = if dof == 0 {
        f64::NAN
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        1.0 - dist.cdf(statistic)
    };
    ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins_used,
    }
}

/// Expected counts per histogram bin for a density, by bin-wise quadrature.
pub fn expected_counts<F: FnMut(f64) -> f64>(hist: &Histogram, mut density: F) -> Vec<f64> {
    let n = hist.total as f64;
    hist.edges
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let (a, _) = gk15(&mut density, w[0], mid);
            let (b, _) = gk15(&mut density, mid, w[1]);
            n * (a + b)
        })
        .collect()
}

/// Largest `|histogram density - bin-averaged reference|`, relative to the reference peak.
pub fn sup_norm_deviation<F: FnMut(f64) -> f64>(hist: &Histogram, density: F, reference_peak: f64) -> f64 {
    let expected = expected_counts(hist, density);
    let n = hist.total as f64;
    hist.density()
        .iter()
        .zip(expected.iter().zip(hist.widths()))
        .map(|(&d, (&e, w))| (d - e / (n * w)).abs())
        .fold(0.0, f64::max)
        / reference_peak
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx).powi(2);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my).powi(2);
    }
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    }
}

/// Fit of `R(t)` over the last decade of flight, `t - t0` in `[t_f/10, t_f]`.
pub fn last_decade_fit(path: &[PathPoint], params: &PhysicalParams, flight_time: f64) -> Option<LinearFit> {
    let (t, r): (Vec<f64>, Vec<f64>) = path
        .iter()
        .filter(|pt| pt.t - params.t0 >= 0.1 * flight_time)
        .map(|pt| (pt.t, pt.state.r))
        .unzip();
    (t.len() >= 3).then(|| linear_fit(&t, &r))
}

/// A local maximum of a histogram ahead of its main peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lobe {
    pub bin: usize,
    pub center: f64,
    pub count: u64,
    /// Deepest count between this lobe and the main peak.
    pub dip: u64,
}

/// Local maxima before the main peak that are separated from it by a dip
/// deeper than three Poisson standard deviations of the lobe count.
pub fn secondary_lobes(hist: &Histogram) -> Vec<Lobe> {
    let c = &hist.counts;
    let Some((main, _)) = c.iter().enumerate().max_by_key(|&(i, &v)| (v, std::cmp::Reverse(i))) else {
        return Vec::new();
    };
    let centers = hist.centers();
    let mut lobes = Vec::new();
    for i in 1..main {
        let is_max = c[i] >= c[i - 1] && c[i] >= c[i + 1] && (c[i] > c[i - 1] || c[i] > c[i + 1]);
        if !is_max {
            continue;
        }
        let dip = *c[i + 1..main].iter().min().unwrap_or(&c[i]);
        if (c[i] - dip.min(c[i])) as f64 > 3.0 * (c[i] as f64).sqrt() {
            // keep only the tallest maximum per dip-separated region
            if let Some(prev) = lobes.last_mut() {
                let prev: &mut Lobe = prev;
                let between = c[prev.bin + 1..i].iter().min().copied().unwrap_or(prev.count);
                if (prev.count.min(c[i]) - between.min(prev.count.min(c[i]))) as f64
                    <= 3.0 * (prev.count.min(c[i]) as f64).sqrt()
                {
                    if c[i] > prev.count {
                        *prev = Lobe { bin: i, center: centers[i], count: c[i], dip };
                    }
                    continue;
                }
            }
            lobes.push(Lobe {
                bin: i,
                center: centers[i],
                count: c[i],
                dip,
            });
        }
    }
    lobes
}

// ---------------------------------------------------------------------------
// Experiment

/// Settings of a time-of-flight run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: PhysicalParams,
    pub chi: SpinorPair,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Bins of the emitted histograms (also used for chi-square).
    pub bins: usize,
    /// Bins of the coarser momentum histogram used for the sup-norm comparison.
    pub compare_bins: usize,
    pub trim_quantiles: (f64, f64),
    pub controls: IntegrationControls,
    /// Initial positions redrawn per trajectory before it counts as failed.
    pub max_resamples: usize,
    pub max_failure_fraction: f64,
    /// Number of leading trajectories whose full path is kept.
    pub keep_paths: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: PhysicalParams::default(),
            chi: SpinorPair::spin_up(),
            n_trajectories: 20_000,
            seed: 1,
            bins: 200,
            compare_bins: 25,
            trim_quantiles: (0.001, 0.999),
            controls: IntegrationControls::default(),
            max_resamples: 8,
            max_failure_fraction: 1e-3,
            keep_paths: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Detected,
    MaxTimeExceeded,
    NodeEncounter,
    StepUnderflow,
    Failed,
}

/// Result of one trajectory slot (after any resampling).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub index: usize,
    pub r0: Vec3,
    pub status: TrajectoryStatus,
    pub resamples: usize,
    pub record: Option<TrajectoryRecord>,
}

fn classify(e: &Error) -> TrajectoryStatus {
    match e {
        Error::MaxTimeExceeded { .. } => TrajectoryStatus::MaxTimeExceeded,
        Error::NodeEncounter { .. } | Error::Node { .. } => TrajectoryStatus::NodeEncounter,
        Error::StepUnderflow { .. } => TrajectoryStatus::StepUnderflow,
        _ => TrajectoryStatus::Failed,
    }
}

fn run_one(index: usize, cfg: &ExperimentConfig, sampler: &RadialSampler, frame: &SpinFrame) -> TrajectoryOutcome {
    let mut rng = trajectory_rng(cfg.seed, index as u64);
    let controls = IntegrationControls {
        record_path: index < cfg.keep_paths,
        ..cfg.controls
    };
    let mut resamples = 0;
    loop {
        let r0 = sampler.sample(&mut rng);
        match integrate_to_detector(r0, frame, &cfg.params, &controls) {
            Ok(record) => {
                return TrajectoryOutcome {
                    index,
                    r0,
                    status: TrajectoryStatus::Detected,
                    resamples,
                    record: Some(record),
                }
            }
            Err(e) => {
                let status = classify(&e);
                let retry = matches!(status, TrajectoryStatus::NodeEncounter | TrajectoryStatus::StepUnderflow);
                if retry && resamples < cfg.max_resamples {
                    resamples += 1;
                    continue;
                }
                return TrajectoryOutcome {
                    index,
                    r0,
                    status,
                    resamples,
                    record: None,
                };
            }
        }
    }
}

/// Goodness-of-fit figures of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub detected: usize,
    pub failed: usize,
    pub resamples: usize,
    pub max_time_failures: usize,
    pub node_failures: usize,
    /// Sup-norm deviation of the coarse momentum histogram from `Lambda_QM`, relative to its peak.
    pub p_sup_norm: f64,
    pub p_chi_square: ChiSquareResult,
    pub tof_chi_square: ChiSquareResult,
    pub secondary_lobes: usize,
    pub flux_normalization: FluxNormalization,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub outcomes: Vec<TrajectoryOutcome>,
    pub tof_hist: Histogram,
    pub p_hist: Histogram,
    pub p_compare_hist: Histogram,
    pub lambda_curve: DensityCurve,
    pub pi_curve: DensityCurve,
    pub lobes: Vec<Lobe>,
    pub summary: ExperimentSummary,
}

impl ExperimentOutput {
    pub fn flight_times(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.record.as_ref().map(|r| r.flight_time))
            .collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.record.as_ref().map(|r| r.p_reconstructed))
            .collect()
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    cfg.params.validate()?;
    if cfg.n_trajectories == 0 {
        return Err(Error::Config("n_trajectories must be at least 1".into()));
    }
    if cfg.bins == 0 || cfg.compare_bins == 0 {
        return Err(Error::Config("histograms need at least one bin".into()));
    }
    let (lo, hi) = cfg.trim_quantiles;
    if !(0.0..0.5).contains(&lo) || !(0.5..=1.0).contains(&hi) {
        return Err(Error::Config(format!("trim quantiles ({lo}, {hi}) out of range")));
    }
    let t_max = cfg.controls.resolved_t_max(&cfg.params);
    if !(t_max > cfg.params.t0) {
        return Err(Error::Config(format!("t_max = {t_max} must exceed t0")));
    }
    Ok(())
}

/// Runs the time-of-flight experiment; results depend only on the config.
pub fn run_tof_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    validate(cfg)?;
    let params = &cfg.params;
    let sampler = RadialSampler::new(params);
    let frame = SpinFrame::new(&spin_vector(&cfg.chi));

    let outcomes: Vec<TrajectoryOutcome> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| run_one(i, cfg, &sampler, &frame))
        .collect();

    let failed = outcomes.iter().filter(|o| o.record.is_none()).count();
    let limit = cfg.max_failure_fraction;
    if failed as f64 > limit * cfg.n_trajectories as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.n_trajectories,
            limit,
        });
    }
    let count = |s: TrajectoryStatus| outcomes.iter().filter(|o| o.status == s).count();
    let resamples = outcomes.iter().map(|o| o.resamples).sum();

    let tf: Vec<f64> = outcomes.iter().filter_map(|o| o.record.as_ref().map(|r| r.flight_time)).collect();
    let p: Vec<f64> = outcomes.iter().filter_map(|o| o.record.as_ref().map(|r| r.p_reconstructed)).collect();
    let (q_lo, q_hi) = cfg.trim_quantiles;
    let tof_hist = Histogram::trimmed(&tf, cfg.bins, q_lo, q_hi);
    let (p_lo, p_hi) = quantile_range(&p, q_lo, q_hi);
    let p_hist = Histogram::uniform(&p, p_lo, p_hi, cfg.bins);
    let p_compare_hist = Histogram::uniform(&p, p_lo, p_hi, cfg.compare_bins);

    let lambda_curve = DensityCurve::tabulate(fine_grid(p_lo, p_hi, 4 * cfg.bins), |v| lambda_qm(v, params));
    let (tf_lo, tf_hi) = (tof_hist.edges[0], tof_hist.edges[tof_hist.bins()]);
    let pi_curve = DensityCurve::tabulate(fine_grid(tf_lo, tf_hi, 4 * cfg.bins), |v| {
        pi_dbb(params.t0 + v, params).unwrap_or(f64::NAN)
    });

    let lambda_peak = lambda_qm(lambda_qm_peak(params), params);
    let p_sup_norm = sup_norm_deviation(&p_compare_hist, |v| lambda_qm(v, params), lambda_peak);
    let p_chi_square = chi_square(&p_hist.counts, &expected_counts(&p_hist, |v| lambda_qm(v, params)));
    let tof_expected = expected_counts(&tof_hist, |v| pi_dbb(params.t0 + v, params).unwrap_or(0.0));
    let tof_chi_square = chi_square(&tof_hist.counts, &tof_expected);
    let lobes = secondary_lobes(&tof_hist);
    let flux_normalization = pi_dbb_normalization(cfg.controls.resolved_t_max(params), params);

    let summary = ExperimentSummary {
        detected: tf.len(),
        failed,
        resamples,
        max_time_failures: count(TrajectoryStatus::MaxTimeExceeded),
        node_failures: count(TrajectoryStatus::NodeEncounter),
        p_sup_norm,
        p_chi_square,
        tof_chi_square,
        secondary_lobes: lobes.len(),
        flux_normalization,
    };
    Ok(ExperimentOutput {
        outcomes,
        tof_hist,
        p_hist,
        p_compare_hist,
        lambda_curve,
        pi_curve,
        lobes,
        summary,
    })
}

fn fine_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect()
}

/// Location of the maximum of `Lambda_QM`.
pub fn lambda_qm_peak(params: &PhysicalParams) -> f64 {
    // golden-section search on the first lobe, q in (0, 2 pi)
    let (mut a, mut b) = (0.5, 2.0 * PI - 0.5);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if lobe_profile(c) > lobe_profile(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b) * params.hbar / params.box_radius
}
