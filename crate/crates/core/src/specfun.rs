//! Complex complementary error function and the Moshinsky function family.
//!
//! `erfc` is evaluated through the Faddeeva function `w(z) = exp(-z^2) erfc(-iz)`
//! restricted to the closed upper half plane, where `w` is bounded and well
//! conditioned:
//!
//! * `|z| < 6`: Weideman's rational expansion with 40 terms,
//! * `|z| >= 6`: the Laplace continued fraction, evaluated bottom-up.
//!
//! The Moshinsky function is assembled in scaled form. With
//! `z = (r - kt)/sqrt(2it)` one has `|exp(-z^2)| = 1` and
//! `exp(-z^2) exp(ikr - itk^2/2) = exp(ir^2/(2t))`, so `M` never forms the
//! individually large factors.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type ComplexScalar = Complex64;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const WEIDEMAN_TERMS: usize = 40;
const CF_RADIUS: f64 = 6.0;

fn weideman_coefficients() -> &'static (f64, [f64; WEIDEMAN_TERMS]) {
    static COEFFS: OnceLock<(f64, [f64; WEIDEMAN_TERMS])> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let n = WEIDEMAN_TERMS;
        let m = 2 * n;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        // Cosine transform of f(t) = exp(-t^2)(L^2 + t^2) sampled at t = L tan(theta/2).
        let samples: Vec<(f64, f64)> = (-(m as i64) + 1..m as i64)
            .map(|k| {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                (k as f64, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut a = [0.0; WEIDEMAN_TERMS];
        for (j, coeff) in a.iter_mut().enumerate() {
            let order = (j + 1) as f64;
            let sum: f64 = samples
                .iter()
                .map(|&(k, f)| f * (PI * k * order / m as f64).cos())
                .sum();
            *coeff = sum / (2 * m) as f64;
        }
        (l, a)
    })
}

fn faddeeva_weideman(z: Complex64) -> Complex64 {
    let (l, a) = weideman_coefficients();
    let iz = Complex64::i() * z;
    let denom = *l - iz;
    let big_z = (*l + iz) / denom;
    let mut p = Complex64::new(0.0, 0.0);
    for &c in a.iter().rev() {
        p = p * big_z + c;
    }
    2.0 * p / (denom * denom) + FRAC_1_SQRT_PI / denom
}

fn faddeeva_continued_fraction(z: Complex64) -> Complex64 {
    let r = z.norm();
    let terms = if r < 12.0 {
        26
    } else if r < 30.0 {
        16
    } else {
        10
    };
    let mut tail = Complex64::new(0.0, 0.0);
    for n in (1..=terms).rev() {
        tail = (0.5 * n as f64) / (z - tail);
    }
    Complex64::new(0.0, FRAC_1_SQRT_PI) / (z - tail)
}

/// Faddeeva function `w(z)` for `Im z >= 0`.
pub(crate) fn faddeeva_upper(z: Complex64) -> Complex64 {
    debug_assert!(z.im >= -1e-300, "faddeeva_upper needs Im z >= 0, got {z}");
    if z.norm_sqr() < CF_RADIUS * CF_RADIUS {
        faddeeva_weideman(z)
    } else {
        faddeeva_continued_fraction(z)
    }
}

/// `exp(-z^2) * w` with magnitude saturated at `f64::MAX`.
fn scale_by_gaussian(z: Complex64, w: Complex64) -> Complex64 {
    let log_mag = z.im * z.im - z.re * z.re + w.norm().ln();
    let phase = -2.0 * z.re * z.im + w.arg();
    let mag = if log_mag >= f64::MAX.ln() {
        f64::MAX
    } else {
        log_mag.exp()
    };
    Complex64::from_polar(mag, phase)
}

/// Complementary error function of a complex argument.
///
/// Relative accuracy is better than `1e-12` for `|z| <= 30` wherever the
/// result is representable. Magnitudes beyond `f64::MAX` saturate (the phase
/// is kept), so the output is always finite.
pub fn erfc_complex(z: ComplexScalar) -> ComplexScalar {
    if z.re >= 0.0 {
        let w = faddeeva_upper(Complex64::new(-z.im, z.re));
        scale_by_gaussian(z, w)
    } else {
        let w = faddeeva_upper(Complex64::new(z.im, -z.re));
        let e = scale_by_gaussian(z, w);
        let out = Complex64::new(2.0, 0.0) - e;
        if out.re.is_finite() && out.im.is_finite() {
            out
        } else {
            -e
        }
    }
}

/// Arguments of the Moshinsky function `M(r, k, t)`.
///
/// `t` is the reduced time `(hbar/m)(t - t0)` and carries units of length
/// squared; `k` is the wavenumber of the truncated plane wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoshinskyArgs {
    pub r: f64,
    pub k: f64,
    pub t: f64,
}

impl MoshinskyArgs {
    pub fn new(r: f64, k: f64, t: f64) -> Self {
        Self { r, k, t }
    }

    fn check(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::NonPositiveTime(self.t));
        }
        if !(self.k > 0.0) {
            return Err(Error::NonPositiveWavenumber(self.k));
        }
        Ok(())
    }

    /// `exp(ikr - itk^2/2)`, the plane wave carried behind the front.
    fn plane_wave(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.k * self.r - 0.5 * self.t * self.k * self.k)
    }

    /// `exp(ir^2/(2t))`.
    fn free_phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.r * self.r / (2.0 * self.t))
    }

    fn behind_front(&self) -> bool {
        self.r < self.k * self.t
    }
}

/// Amplitude of the diffractive part of `M`, without its `exp(ir^2/(2t))` phase.
///
/// `M(r,k,t) = H(kt - r) exp(ikr - itk^2/2) + tail_amplitude * exp(ir^2/(2t))`.
/// The principal branch `sqrt(2it) = exp(i pi/4) sqrt(2t)` is used throughout.
pub(crate) fn tail_amplitude(r: f64, k: f64, t: f64) -> Complex64 {
    let u = (r - k * t) / (2.0 * t).sqrt();
    let zeta = Complex64::new(u.abs() * FRAC_1_SQRT_2, u.abs() * FRAC_1_SQRT_2);
    let w = 0.5 * faddeeva_upper(zeta);
    if r >= k * t {
        w
    } else {
        -w
    }
}

/// Moshinsky function `M(r,k,t) = erfc((r - kt)/sqrt(2it)) exp(ikr - itk^2/2) / 2`.
pub fn moshinsky(args: MoshinskyArgs) -> Result<ComplexScalar> {
    args.check()?;
    let tail = tail_amplitude(args.r, args.k, args.t) * args.free_phase();
    Ok(if args.behind_front() {
        args.plane_wave() + tail
    } else {
        tail
    })
}

/// Radial derivative `dM/dr = ik M - exp(ir^2/(2t)) / sqrt(2 pi i t)`.
pub fn moshinsky_dr(args: MoshinskyArgs) -> Result<ComplexScalar> {
    let m = moshinsky(args)?;
    let root = Complex64::from_polar((2.0 * PI * args.t).sqrt(), PI / 4.0);
    Ok(Complex64::i() * args.k * m - args.free_phase() / root)
}

/// Validity band of the large-argument form of `M`.
///
/// The dropped remainder is of relative size `t/(r - kt)^2` against the
/// diffractive term. Behind the front the plane wave dominates `|M|` and a
/// ratio `|r - kt|/sqrt(t) >= 8` keeps the error below `1e-3`; ahead of the
/// front the diffractive term is all of `M` and the ratio must reach 40.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticBand {
    pub behind: f64,
    pub ahead: f64,
}

impl Default for AsymptoticBand {
    fn default() -> Self {
        Self {
            behind: 8.0,
            ahead: 40.0,
        }
    }
}

impl AsymptoticBand {
    pub fn contains(&self, args: &MoshinskyArgs) -> bool {
        let ratio = (args.r - args.k * args.t).abs() / args.t.sqrt();
        ratio >= self.threshold(args)
    }

    fn threshold(&self, args: &MoshinskyArgs) -> f64 {
        if args.behind_front() {
            self.behind
        } else {
            self.ahead
        }
    }
}

/// Large-argument form `sqrt(it/(2pi)) exp(ir^2/(2t))/(r - kt) + H(kt - r) exp(ikr - itk^2/2)`.
pub fn moshinsky_asymptotic(args: MoshinskyArgs, band: &AsymptoticBand) -> Result<ComplexScalar> {
    args.check()?;
    if !band.contains(&args) {
        return Err(Error::InsideFrontBand {
            ratio: (args.r - args.k * args.t).abs() / args.t.sqrt(),
            threshold: band.threshold(&args),
        });
    }
    let prefactor = Complex64::from_polar((args.t / (2.0 * PI)).sqrt(), PI / 4.0);
    let tail = prefactor * args.free_phase() / (args.r - args.k * args.t);
    Ok(if args.behind_front() {
        tail + args.plane_wave()
    } else {
        tail
    })
}
