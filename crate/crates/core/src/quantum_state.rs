//! Ground states of the spherical box (Pauli and Dirac), spinor algebra and energies.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::ComplexScalar;
use crate::vec3::{self, Vec3};

/// Box radius, mass, hbar, speed of light, release instant and detector radius.
///
/// The default unit system is `hbar = m = a = 1`; times are then in units of
/// `m a^2 / hbar` and `c` is the box radius in reduced Compton wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    pub box_radius: f64,
    pub mass: f64,
    pub hbar: f64,
    pub c: f64,
    pub t0: f64,
    pub detector_radius: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            box_radius: 1.0,
            mass: 1.0,
            hbar: 1.0,
            c: 1000.0,
            t0: 0.0,
            detector_radius: 500.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("box_radius", self.box_radius),
            ("mass", self.mass),
            ("hbar", self.hbar),
            ("c", self.c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidParams(format!("t0 must be finite, got {}", self.t0)));
        }
        if !(self.detector_radius > self.box_radius && self.detector_radius.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "detector_radius ({}) must exceed box_radius ({})",
                self.detector_radius, self.box_radius
            )));
        }
        Ok(())
    }

    /// Ground-state wavenumber `pi / a`.
    pub fn k(&self) -> f64 {
        PI / self.box_radius
    }

    /// Reduced time `tau = (hbar/m)(t - t0)`.
    pub fn reduced_time(&self, t: f64) -> f64 {
        self.hbar / self.mass * (t - self.t0)
    }

    /// Inverse of [`reduced_time`](Self::reduced_time).
    pub fn time_from_reduced(&self, tau: f64) -> f64 {
        self.t0 + tau * self.mass / self.hbar
    }
}

/// Constant two-spinor `(chi_+, chi_-)`, normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpinor", into = "RawSpinor")]
pub struct SpinorPair {
    up: ComplexScalar,
    down: ComplexScalar,
}

impl SpinorPair {
    pub fn new(up: ComplexScalar, down: ComplexScalar) -> Result<Self> {
        let n = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroSpinor);
        }
        // already unit up to rounding: keep the bits so normalization is idempotent
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self { up, down });
        }
        Ok(Self {
            up: up / n,
            down: down / n,
        })
    }

    pub fn spin_up() -> Self {
        Self {
            up: Complex64::new(1.0, 0.0),
            down: Complex64::new(0.0, 0.0),
        }
    }

    pub fn up(&self) -> ComplexScalar {
        self.up
    }

    pub fn down(&self) -> ComplexScalar {
        self.down
    }

    pub fn with_phase(&self, phi: f64) -> Self {
        let p = Complex64::from_polar(1.0, phi);
        Self {
            up: self.up * p,
            down: self.down * p,
        }
    }

    /// `(n . sigma) chi` for a (not necessarily unit) vector `n`.
    pub fn sigma_dot(&self, n: Vec3) -> [ComplexScalar; 2] {
        let (u, d) = (self.up, self.down);
        let nm = Complex64::new(n[0], -n[1]);
        let np = Complex64::new(n[0], n[1]);
        [n[2] * u + nm * d, np * u - n[2] * d]
    }
}

/// Serialized form `{ up = [re, im], down = [re, im] }`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpinor {
    up: [f64; 2],
    down: [f64; 2],
}

impl TryFrom<RawSpinor> for SpinorPair {
    type Error = Error;
    fn try_from(raw: RawSpinor) -> Result<Self> {
        SpinorPair::new(
            Complex64::new(raw.up[0], raw.up[1]),
            Complex64::new(raw.down[0], raw.down[1]),
        )
    }
}

impl From<SpinorPair> for RawSpinor {
    fn from(s: SpinorPair) -> Self {
        RawSpinor {
            up: [s.up.re, s.up.im],
            down: [s.down.re, s.down.im],
        }
    }
}

/// Unit spin vector `chi^dagger sigma chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpinVector {
    pub fn as_array(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Normalizes an arbitrary nonzero direction.
    pub fn from_direction(v: Vec3) -> Result<Self> {
        let n = vec3::norm(v);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroSpinor);
        }
        Ok(Self {
            x: v[0] / n,
            y: v[1] / n,
            z: v[2] / n,
        })
    }
}

pub fn spin_vector(chi: &SpinorPair) -> SpinVector {
    let cross = chi.up.conj() * chi.down;
    SpinVector {
        x: 2.0 * cross.re,
        y: 2.0 * cross.im,
        z: chi.up.norm_sqr() - chi.down.norm_sqr(),
    }
}

fn psi_normalization(params: &PhysicalParams) -> f64 {
    (2.0 * PI * params.box_radius).sqrt()
}

/// Below this fraction of `a` the radial functions switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1e-6;

/// Spatial ground state `sin(pi r/a) / (sqrt(2 pi a) r)` inside the box, zero outside.
pub fn ground_state_psi(r: f64, params: &PhysicalParams) -> f64 {
    let a = params.box_radius;
    if r >= a {
        return 0.0;
    }
    let k = params.k();
    let n = psi_normalization(params);
    if r < SERIES_CUTOFF * a {
        let x2 = (k * r).powi(2);
        k / n * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    } else {
        (k * r).sin() / (n * r)
    }
}

/// `d psi / dr` inside the box.
pub fn ground_state_dpsi(r: f64, params: &PhysicalParams) -> f64 {
    ground_state_dpsi_over_r(r, params) * r
}

/// `(d psi / dr) / r`, finite at the origin.
pub fn ground_state_dpsi_over_r(r: f64, params: &PhysicalParams) -> f64 {
    if r >= params.box_radius {
        return 0.0;
    }
    let k = params.k();
    -k.powi(3) * sinc_slope(k * r) / psi_normalization(params)
}

/// `psi'/psi = k cot(kr) - 1/r` inside the box, regular at the origin.
pub fn ground_state_log_derivative(r: f64, params: &PhysicalParams) -> f64 {
    let k = params.k();
    let x = k * r;
    -k * k * r * sinc_slope(x) * x_over_sin(x)
}

pub(crate) fn x_over_sin(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x / x.sin()
    }
}

/// `g(x) = (sin x - x cos x) / x^3`, with `g(0) = 1/3`.
///
/// The closed form cancels like `eps/x^2`, so small arguments use the series
/// `g(x) = sum_{j>=1} (-1)^(j+1) 2j x^(2j-2) / (2j+1)!`.
pub fn sinc_slope(x: f64) -> f64 {
    if x.abs() < SINC_SLOPE_SERIES_CUTOFF {
        let x2 = x * x;
        let mut term = 1.0 / 3.0;
        let mut sum = term;
        for j in 2..10 {
            let jf = j as f64;
            term *= -x2 * jf / ((jf - 1.0) * (2.0 * jf) * (2.0 * jf + 1.0));
            sum += term;
        }
        sum
    } else {
        (x.sin() - x * x.cos()) / (x * x * x)
    }
}

const SINC_SLOPE_SERIES_CUTOFF: f64 = 0.3;

/// Nonrelativistic ground energy `hbar^2 pi^2 / (2 m a^2)`.
pub fn ground_energy(params: &PhysicalParams) -> f64 {
    let k = params.k();
    params.hbar * params.hbar * k * k / (2.0 * params.mass)
}

/// Rest energy `m c^2`.
pub fn rest_energy(params: &PhysicalParams) -> f64 {
    params.mass * params.c * params.c
}

/// `E_R = m c^2 sqrt(1 + 2E/(m c^2))`.
pub fn relativistic_energy(params: &PhysicalParams) -> f64 {
    let mc2 = rest_energy(params);
    mc2 * (1.0 + 2.0 * ground_energy(params) / mc2).sqrt()
}

/// `E_R - m c^2`, evaluated without cancellation.
pub fn relativistic_kinetic_energy(params: &PhysicalParams) -> f64 {
    let mc2 = rest_energy(params);
    let x = 2.0 * ground_energy(params) / mc2;
    mc2 * x / ((1.0 + x).sqrt() + 1.0)
}

/// `gamma = hbar c / (E_R + m c^2)`, a length below `hbar/(m c)`.
pub fn gamma_length(params: &PhysicalParams) -> f64 {
    params.hbar * params.c / (relativistic_energy(params) + rest_energy(params))
}

/// Dirac four-spinor `(c1, c2, c3, c4)`; upper pair first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourSpinor(pub [ComplexScalar; 4]);

impl FourSpinor {
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Psi^dagger A Psi`.
    pub fn expectation(&self, m: &Matrix4) -> ComplexScalar {
        m.iter()
            .zip(&self.0)
            .map(|(row, pi)| {
                let mp: ComplexScalar = row.iter().zip(&self.0).map(|(mij, pj)| mij * pj).sum();
                pi.conj() * mp
            })
            .sum()
    }
}

pub type Matrix4 = [[ComplexScalar; 4]; 4];

/// Dirac matrices in the standard representation.
pub struct DiracMatrices {
    pub alpha: [Matrix4; 3],
    pub beta: Matrix4,
    /// `alpha_x alpha_y alpha_z beta`
    pub alpha_xyz_beta: Matrix4,
}

fn mat_mul(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn dirac_matrices() -> &'static DiracMatrices {
    static MATS: OnceLock<DiracMatrices> = OnceLock::new();
    MATS.get_or_init(|| {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::i();
        let pauli: [[[Complex64; 2]; 2]; 3] = [
            [[z, one], [one, z]],
            [[z, -i], [i, z]],
            [[one, z], [z, -one]],
        ];
        let alpha = pauli.map(|s| {
            let mut m = [[z; 4]; 4];
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c + 2] = s[r][c];
                    m[r + 2][c] = s[r][c];
                }
            }
            m
        });
        let mut beta = [[z; 4]; 4];
        for (d, sign) in [1.0, 1.0, -1.0, -1.0].into_iter().enumerate() {
            beta[d][d] = Complex64::new(sign, 0.0);
        }
        let alpha_xyz_beta = mat_mul(&mat_mul(&mat_mul(&alpha[0], &alpha[1]), &alpha[2]), &beta);
        DiracMatrices {
            alpha,
            beta,
            alpha_xyz_beta,
        }
    })
}

/// Relativistic ground state `exp(-i t E_R/hbar) (psi chi, -i gamma psi'(r) (e_r . sigma) chi)`.
pub fn dirac_ground_state(
    rvec: Vec3,
    t: f64,
    chi: &SpinorPair,
    params: &PhysicalParams,
) -> Result<FourSpinor> {
    let r = vec3::norm(rvec);
    let a = params.box_radius;
    if !(r < a) {
        return Err(Error::RadiusOutOfDomain { r, lo: 0.0, hi: a });
    }
    let phase = Complex64::from_polar(1.0, -t * relativistic_energy(params) / params.hbar);
    let psi = ground_state_psi(r, params);
    // psi'(r) e_r = (psi'/r) rvec keeps the origin regular
    let lower_scale = Complex64::new(0.0, -gamma_length(params) * ground_state_dpsi_over_r(r, params));
    let [l1, l2] = chi.sigma_dot(rvec);
    Ok(FourSpinor([
        phase * psi * chi.up(),
        phase * psi * chi.down(),
        phase * lower_scale * l1,
        phase * lower_scale * l2,
    ]))
}

/// Terms of the Fierz identity `(Psi^dag Psi)^2 - |Psi^dag alpha Psi|^2 = mu^2 + nu^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FierzTerms {
    pub lhs: f64,
    pub mu: f64,
    pub nu: f64,
    /// Largest imaginary part among the Hermitian forms (zero up to rounding).
    pub max_imag: f64,
}

impl FierzTerms {
    pub fn residual(&self) -> f64 {
        self.lhs - self.mu * self.mu - self.nu * self.nu
    }
}

pub fn fierz_residual(psi4: &FourSpinor) -> FierzTerms {
    let mats = dirac_matrices();
    let density = psi4.norm_sqr();
    let currents = mats.alpha.each_ref().map(|m| psi4.expectation(m));
    let mu = psi4.expectation(&mats.beta);
    let nu = psi4.expectation(&mats.alpha_xyz_beta);
    let current_sq: f64 = currents.iter().map(|j| j.re * j.re).sum();
    let max_imag = currents
        .iter()
        .chain([&mu, &nu])
        .map(|v| v.im.abs())
        .fold(0.0, f64::max);
    FierzTerms {
        lhs: density * density - current_sq,
        mu: mu.re,
        nu: nu.re,
        max_imag,
    }
}

/// Dirac velocity `c Psi^dag alpha Psi / Psi^dag Psi` by explicit matrix algebra.
pub fn dirac_velocity(psi4: &FourSpinor, c: f64) -> Vec3 {
    let mats = dirac_matrices();
    let density = psi4.norm_sqr();
    let j = mats.alpha.each_ref().map(|m| psi4.expectation(m).re);
    vec3::scale(j, c / density)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn spin_vector_basis_states() {
        let s = spin_vector(&SpinorPair::spin_up());
        assert_eq!(s.as_array(), [0.0, 0.0, 1.0]);
        let h = FRAC_1_SQRT_2;
        let s = spin_vector(&SpinorPair::new(Complex64::new(h, 0.0), Complex64::new(h, 0.0)).unwrap());
        assert_relative_eq!(s.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.z, 0.0, epsilon = 1e-15);
        let s = spin_vector(&SpinorPair::new(Complex64::new(h, 0.0), Complex64::new(0.0, h)).unwrap());
        assert_relative_eq!(s.y, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn spinor_rejects_zero() {
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(SpinorPair::new(z, z), Err(Error::ZeroSpinor));
    }

    #[test]
    fn ground_state_values() {
        let p = unit();
        assert_relative_eq!(ground_state_psi(0.5, &p), 2.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        assert_eq!(ground_state_psi(1.0, &p), 0.0);
        assert_eq!(ground_state_psi(1.5, &p), 0.0);
        let origin = PI / (2.0 * PI).sqrt();
        assert_relative_eq!(ground_state_psi(0.0, &p), origin, epsilon = 1e-15);
        assert_relative_eq!(ground_state_psi(2e-6, &p), ground_state_psi(0.9e-6, &p), epsilon = 1e-10);
    }

    #[test]
    fn dpsi_series_matches_closed_form_at_switch() {
        let p = unit();
        let switch = SINC_SLOPE_SERIES_CUTOFF / p.k();
        let below = ground_state_dpsi_over_r(switch * (1.0 - 1e-12), &p);
        let above = ground_state_dpsi_over_r(switch * (1.0 + 1e-12), &p);
        assert_relative_eq!(below, above, max_relative = 1e-13);
        let fd = (ground_state_psi(0.5 + 1e-6, &p) - ground_state_psi(0.5 - 1e-6, &p)) / 2e-6;
        assert_relative_eq!(ground_state_dpsi(0.5, &p), fd, max_relative = 1e-8);
    }

    #[test]
    fn log_derivative_matches_cotangent_form() {
        let p = unit();
        for &r in &[0.05, 0.3, 0.5, 0.9] {
            let want = PI / (PI * r).tan() - 1.0 / r;
            assert_relative_eq!(ground_state_log_derivative(r, &p), want, max_relative = 1e-12);
        }
        assert_eq!(ground_state_log_derivative(0.0, &p), 0.0);
    }

    #[test]
    fn energies() {
        let p = unit();
        assert_relative_eq!(ground_energy(&p), PI * PI / 2.0, epsilon = 1e-15);
        let p2 = PhysicalParams { box_radius: 2.0, ..p };
        assert_relative_eq!(ground_energy(&p2), PI * PI / 8.0, epsilon = 1e-15);
        assert_relative_eq!(ground_energy(&p2), ground_energy(&p) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn relativistic_energy_limits() {
        let e = PI * PI / 2.0;
        // E/(mc^2) = 3/2 gives E_R = 2 mc^2
        let c = (e / 1.5).sqrt();
        let p = PhysicalParams { c, ..unit() };
        assert_relative_eq!(relativistic_energy(&p), 2.0 * c * c, max_relative = 1e-14);

        // E/(mc^2) = 1e-8
        let c = (e / 1e-8).sqrt();
        let p = PhysicalParams { c, ..unit() };
        let remainder = (relativistic_kinetic_energy(&p) - e) / e;
        assert!(remainder.abs() < 1e-7, "{remainder:e}");
        assert!(relativistic_energy(&p) > rest_energy(&p));
    }

    #[test]
    fn gamma_limits() {
        let p = PhysicalParams { c: 1e6, ..unit() };
        assert!((gamma_length(&p) * p.c - 0.5).abs() < 1e-11);
        let huge_box = PhysicalParams { box_radius: 1e12, detector_radius: 1e13, c: 3.0, ..unit() };
        assert_relative_eq!(gamma_length(&huge_box), 1.0 / (2.0 * 3.0), max_relative = 1e-15);
        let g: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&c| gamma_length(&PhysicalParams { c, ..unit() }))
            .collect();
        assert!(g[0] > g[1] && g[1] > g[2]);
        for (&gi, c) in g.iter().zip([10.0, 100.0, 1000.0]) {
            assert!(gi > 0.0 && gi < 1.0 / c);
        }
    }

    #[test]
    fn dirac_state_at_origin_and_t0() {
        let p = PhysicalParams { c: 10.0, ..unit() };
        let chi = SpinorPair::new(Complex64::new(0.6, 0.1), Complex64::new(-0.2, 0.7)).unwrap();
        let s = dirac_ground_state([0.0; 3], 0.0, &chi, &p).unwrap();
        assert_eq!(s.0[2].norm() + s.0[3].norm(), 0.0);
        let s = dirac_ground_state([1e-8, 0.0, 0.0], 0.0, &chi, &p).unwrap();
        assert!(s.0[2].norm() < 1e-8 * s.0[0].norm().max(s.0[1].norm()));

        let r = [0.3, -0.2, 0.4];
        let s = dirac_ground_state(r, 0.0, &chi, &p).unwrap();
        let psi = ground_state_psi(vec3::norm(r), &p);
        assert_relative_eq!((s.0[0] - psi * chi.up()).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((s.0[1] - psi * chi.down()).norm(), 0.0, epsilon = 1e-15);

        assert!(dirac_ground_state([1.0, 0.0, 0.0], 0.0, &chi, &p).is_err());
    }

    #[test]
    fn fierz_for_basis_spinor() {
        let one = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let f = fierz_residual(&FourSpinor([one, z, z, z]));
        assert_eq!((f.lhs, f.mu, f.nu), (1.0, 1.0, 0.0));
    }

    #[test]
    fn alpha_xyz_beta_is_hermitian() {
        let m = dirac_matrices().alpha_xyz_beta;
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i][j], m[j][i].conj());
            }
        }
    }
}
