//! Circular orbits of the confined ground state and the two velocity fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Dp5, Tolerances};
use crate::quantum_state::{
    gamma_length, ground_state_log_derivative, sinc_slope, x_over_sin, PhysicalParams, SpinVector,
};
use crate::vec3::{self, Vec3};

/// Which velocity field drives the bound orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Nonrelativistic,
    Relativistic,
}

/// Radii within this relative distance of the wall are out of domain.
const EDGE_GUARD: f64 = 1e-12;

fn check_radius(r: f64, params: &PhysicalParams) -> Result<()> {
    let hi = params.box_radius * (1.0 - EDGE_GUARD);
    if r > 0.0 && r <= hi {
        Ok(())
    } else {
        Err(Error::RadiusOutOfDomain {
            r,
            lo: 0.0,
            hi: params.box_radius,
        })
    }
}

/// `omega_0 = hbar/(m R^2) [1 - x cot x]` with `x = pi R/a`.
///
/// Written as `(hbar/m) k^2 g(x) x/sin x` so that both ends of the interval
/// are free of cancellation.
pub fn omega_nr(r0: f64, params: &PhysicalParams) -> Result<f64> {
    check_radius(r0, params)?;
    Ok(omega_nr_unchecked(r0, params))
}

fn omega_nr_unchecked(r0: f64, params: &PhysicalParams) -> f64 {
    let k = params.k();
    let x = k * r0;
    params.hbar / params.mass * k * k * sinc_slope(x) * x_over_sin(x)
}

/// `F(xi) = 2 xi / (1 + xi^2)`.
pub fn f_profile(xi: f64) -> f64 {
    if xi.abs() > 1e150 {
        return 2.0 / xi;
    }
    2.0 * xi / (1.0 + xi * xi)
}

/// `omega_0R = (c/R) F(m R gamma omega_0 / hbar)`.
pub fn omega_rel(r0: f64, params: &PhysicalParams) -> Result<f64> {
    check_radius(r0, params)?;
    let xi = params.mass * r0 * gamma_length(params) * omega_nr_unchecked(r0, params) / params.hbar;
    Ok(params.c / r0 * f_profile(xi))
}

pub fn omega(r0: f64, params: &PhysicalParams, regime: Regime) -> Result<f64> {
    match regime {
        Regime::Nonrelativistic => omega_nr(r0, params),
        Regime::Relativistic => omega_rel(r0, params),
    }
}

/// Initial point, spin axis and angular frequency of a bound orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub r0: Vec3,
    pub s_hat: SpinVector,
    pub omega: f64,
    pub regime: Regime,
}

impl OrbitSpec {
    /// Builds the orbit through `r0`, computing its frequency for `regime`.
    pub fn new(r0: Vec3, s_hat: SpinVector, params: &PhysicalParams, regime: Regime) -> Result<Self> {
        let omega = omega(vec3::norm(r0), params, regime)?;
        Ok(Self {
            r0,
            s_hat,
            omega,
            regime,
        })
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Rodrigues form `cos(wt) R0 + sin(wt) s x R0 + (1 - cos(wt)) (R0 . s) s`,
/// evaluated as axial part plus rotated perpendicular part.
pub fn orbit_position(t: f64, spec: &OrbitSpec) -> Vec3 {
    let s = spec.s_hat.as_array();
    let (sin, cos) = (spec.omega * t).sin_cos();
    let axial = vec3::scale(s, vec3::dot(spec.r0, s));
    let perp = vec3::sub(spec.r0, axial);
    vec3::add(
        axial,
        vec3::add(vec3::scale(perp, cos), vec3::scale(vec3::cross(s, spec.r0), sin)),
    )
}

/// Bound-state velocity at `rvec`.
///
/// Nonrelativistic: `(hbar/m)(psi'/psi) e_r x s = -omega_0 r x s`.
/// Relativistic: `c F(gamma psi'/psi) e_r x s`.
pub fn velocity_bound(rvec: Vec3, s_hat: &SpinVector, params: &PhysicalParams, regime: Regime) -> Result<Vec3> {
    let r = vec3::norm(rvec);
    check_radius(r, params)?;
    let axis = vec3::cross(rvec, s_hat.as_array());
    let log_d = ground_state_log_derivative(r, params);
    let speed_over_r = match regime {
        Regime::Nonrelativistic => params.hbar / params.mass * log_d / r,
        Regime::Relativistic => params.c * f_profile(gamma_length(params) * log_d) / r,
    };
    Ok(vec3::scale(axis, speed_over_r))
}

/// A point of an orbit tabulated by both the closed form and the ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitSample {
    pub t: f64,
    pub closed: Vec3,
    pub numeric: Vec3,
}

impl OrbitSample {
    pub fn deviation(&self) -> f64 {
        vec3::norm(vec3::sub(self.closed, self.numeric))
    }
}

/// Integrates the velocity field from `spec.r0` and samples it at `times`
/// (ascending, starting at or after zero) next to the closed form.
pub fn integrate_orbit(
    spec: &OrbitSpec,
    params: &PhysicalParams,
    times: &[f64],
    tol: Tolerances,
) -> Result<Vec<OrbitSample>> {
    let s_hat = spec.s_hat;
    let regime = spec.regime;
    let rhs = |_t: f64, y: &[f64; 3]| velocity_bound(*y, &s_hat, params, regime);
    let h0 = if spec.omega > 0.0 { 1e-3 / spec.omega } else { 1.0 };
    let mut stepper = Dp5::new(rhs, 0.0, spec.r0, h0, tol)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let y = stepper.integrate_to(t, |_| {})?;
        out.push(OrbitSample {
            t,
            closed: orbit_position(t, spec),
            numeric: y,
        });
    }
    Ok(out)
}

/// Uniform sample times over one period (both ends included).
pub fn period_grid(spec: &OrbitSpec, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let period = if spec.omega > 0.0 { spec.period() } else { 1.0 };
    (0..n).map(|i| period * i as f64 / (n - 1) as f64).collect()
}

/// Row of the nondimensional angular-frequency table `omega m a^2 / hbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaRow {
    pub r0_over_a: f64,
    pub omega_nr: f64,
    pub omega_rel: f64,
}

/// Tabulates both frequencies at `n` interior radii, uniform in `R0/a`.
pub fn omega_table(params: &PhysicalParams, n: usize) -> Result<Vec<OmegaRow>> {
    let unit = params.mass * params.box_radius.powi(2) / params.hbar;
    (1..=n)
        .map(|i| {
            let s = i as f64 / (n + 1) as f64;
            let r0 = s * params.box_radius;
            Ok(OmegaRow {
                r0_over_a: s,
                omega_nr: omega_nr(r0, params)? * unit,
                omega_rel: omega_rel(r0, params)? * unit,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_state::{dirac_ground_state, dirac_velocity, SpinorPair};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    fn z_axis() -> SpinVector {
        SpinVector { x: 0.0, y: 0.0, z: 1.0 }
    }

    #[test]
    fn omega_nr_anchors() {
        let p = unit();
        assert_relative_eq!(omega_nr(0.5, &p).unwrap(), 4.0, epsilon = 1e-14);
        assert!((omega_nr(1e-4, &p).unwrap() - PI * PI / 3.0).abs() < 1e-6);
        let edge = omega_nr(0.999, &p).unwrap();
        assert!((edge - 1000.0).abs() / 1000.0 < 0.05, "{edge}");
    }

    #[test]
    fn omega_nr_matches_cotangent_form() {
        let p = unit();
        for &r in &[0.01, 0.2, 0.5, 0.77, 0.95] {
            let x = PI * r;
            let want = (1.0 - x / x.tan()) / (r * r);
            assert_relative_eq!(omega_nr(r, &p).unwrap(), want, max_relative = 1e-11);
        }
    }

    #[test]
    fn omega_domain() {
        let p = unit();
        assert!(omega_nr(0.0, &p).is_err());
        assert!(omega_nr(1.0, &p).is_err());
        assert!(omega_nr(-0.5, &p).is_err());
        assert!(omega_rel(1.2, &p).is_err());
    }

    #[test]
    fn f_profile_values() {
        assert_eq!(f_profile(0.0), 0.0);
        assert_eq!(f_profile(1.0), 1.0);
        assert_eq!(f_profile(-1.0), -1.0);
        assert!(f_profile(1e200).is_finite());
    }

    #[test]
    fn omega_rel_regimes() {
        let p = PhysicalParams { c: 1e3, ..unit() };
        let ratio = omega_rel(0.5, &p).unwrap() / omega_nr(0.5, &p).unwrap();
        assert!((ratio - 1.0).abs() < 1e-2, "{ratio}");

        let r0 = 1.0 - 1e-6;
        let edge = 2.0 * p.c / gamma_length(&p) * (1.0 - r0);
        let got = omega_rel(r0, &p).unwrap();
        assert!((got - edge).abs() / edge < 0.01, "{got} vs {edge}");

        let near = omega_rel(1.0 - 1e-3, &p).unwrap();
        let nearer = omega_rel(1.0 - 1e-9, &p).unwrap();
        assert!(nearer < near);
    }

    #[test]
    fn orbit_closed_form_special_times() {
        let p = unit();
        let spec = OrbitSpec::new([0.3, 0.1, 0.2], z_axis(), &p, Regime::Nonrelativistic).unwrap();
        assert_eq!(orbit_position(0.0, &spec), spec.r0);
        let back = orbit_position(spec.period(), &spec);
        assert!(vec3::norm(vec3::sub(back, spec.r0)) < 1e-14);
        let flat = OrbitSpec::new([0.3, 0.1, 0.0], z_axis(), &p, Regime::Nonrelativistic).unwrap();
        let half = orbit_position(flat.period() / 2.0, &flat);
        assert!(vec3::norm(vec3::add(half, flat.r0)) < 1e-14);
    }

    #[test]
    fn velocity_examples() {
        let p = unit();
        let s = z_axis();
        for regime in [Regime::Nonrelativistic, Regime::Relativistic] {
            let v = velocity_bound([0.0, 0.0, 0.4], &s, &p, regime).unwrap();
            assert_eq!(v, [0.0; 3]);
        }
        let v = velocity_bound([0.5, 0.0, 0.0], &s, &p, Regime::Nonrelativistic).unwrap();
        assert_relative_eq!(vec3::norm(v), 2.0, epsilon = 1e-13);
        // -omega r x s with r = x, s = z gives +y
        assert!(v[1] > 0.0);
        let p10 = PhysicalParams { c: 10.0, ..unit() };
        let v = velocity_bound([0.99, 0.0, 0.0], &s, &p10, Regime::Relativistic).unwrap();
        assert!(vec3::norm(v) <= 10.0);
        assert!(velocity_bound([1.0, 0.0, 0.0], &s, &p, Regime::Nonrelativistic).is_err());
    }

    #[test]
    fn relativistic_field_matches_dirac_current() {
        let p = PhysicalParams { c: 5.0, ..unit() };
        let chi = SpinorPair::new(Complex64::new(0.8, -0.1), Complex64::new(0.3, 0.5)).unwrap();
        let s = crate::quantum_state::spin_vector(&chi);
        for rv in [[0.3, -0.2, 0.4], [0.05, 0.6, -0.1], [-0.7, 0.1, 0.6]] {
            let psi4 = dirac_ground_state(rv, 0.37, &chi, &p).unwrap();
            let matrix = dirac_velocity(&psi4, p.c);
            let closed = velocity_bound(rv, &s, &p, Regime::Relativistic).unwrap();
            for i in 0..3 {
                assert!((matrix[i] - closed[i]).abs() < 1e-12 * p.c, "{matrix:?} vs {closed:?}");
            }
        }
    }

    #[test]
    fn numeric_orbit_tracks_closed_form() {
        let p = PhysicalParams { c: 20.0, ..unit() };
        let s = SpinVector::from_direction([0.2, -0.5, 0.8]).unwrap();
        for regime in [Regime::Nonrelativistic, Regime::Relativistic] {
            let spec = OrbitSpec::new([0.4, 0.3, -0.2], s, &p, regime).unwrap();
            let tol = Tolerances { rtol: 1e-10, atol: 1e-10 };
            let samples = integrate_orbit(&spec, &p, &period_grid(&spec, 50), tol).unwrap();
            let worst = samples.iter().map(OrbitSample::deviation).fold(0.0, f64::max);
            assert!(worst < 1e-7, "{regime:?}: {worst:e}");
        }
    }

    #[test]
    fn omega_table_shape() {
        let p = PhysicalParams { c: 1e3, ..unit() };
        let rows = omega_table(&p, 99).unwrap();
        assert_eq!(rows.len(), 99);
        assert_relative_eq!(rows[49].r0_over_a, 0.5);
        assert_relative_eq!(rows[49].omega_nr, 4.0, epsilon = 1e-13);
        let last = rows.last().unwrap();
        assert!(last.omega_rel <= last.omega_nr);
    }
}
