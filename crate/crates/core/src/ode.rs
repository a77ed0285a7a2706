//! Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output.
//!
//! The right-hand side is fallible. An [`Error::Node`] raised at a stage is
//! treated like an error-test failure: the step is shrunk and retried, and
//! only a node that survives repeated shrinking surfaces as
//! [`Error::NodeEncounter`]. Every other error is propagated unchanged.

use crate::error::{Error, Result};

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
/// Difference between the 5th- and 4th-order weights (stages 1..7).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const NODE_SHRINK: f64 = 0.25;
const MAX_NODE_RETRIES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

fn combine<const N: usize>(y: &[f64; N], h: f64, ks: &[&[f64; N]], coeffs: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (k, &c) in ks.iter().zip(coeffs) {
        if c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// One Dormand-Prince step of size `h` from `(t, y)` with `f0 = rhs(t, y)`.
///
/// Returns `(y1, f1, err)` where `f1 = rhs(t + h, y1)` is reused as the
/// first stage of the next step and `err` is the embedded error estimate.
pub fn dp5_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]> + ?Sized,
{
    let k1 = *f0;
    let k2 = rhs(t + C[0] * h, &combine(y, h, &[&k1], &[A21]))?;
    let k3 = rhs(t + C[1] * h, &combine(y, h, &[&k1, &k2], &A3))?;
    let k4 = rhs(t + C[2] * h, &combine(y, h, &[&k1, &k2, &k3], &A4))?;
    let k5 = rhs(t + C[3] * h, &combine(y, h, &[&k1, &k2, &k3, &k4], &A5))?;
    let k6 = rhs(t + C[4] * h, &combine(y, h, &[&k1, &k2, &k3, &k4, &k5], &A6))?;
    let y1 = combine(y, h, &[&k1, &k2, &k3, &k4, &k5, &k6], &B);
    let k7 = rhs(t + h, &y1)?;
    let mut err = [0.0; N];
    let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
    for i in 0..N {
        err[i] = h * ks.iter().zip(E).map(|(k, e)| e * k[i]).sum::<f64>();
    }
    Ok((y1, k7, err))
}

/// Weighted RMS norm of an error estimate.
pub fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: Tolerances) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| {
            let scale = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / scale).powi(2)
        })
        .sum();
    (sum / N as f64).sqrt()
}

/// An accepted step, carrying what cubic Hermite interpolation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub f0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Accepted<N> {
    /// Cubic Hermite interpolant on `[t0, t1]`.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        std::array::from_fn(|i| h00 * self.y0[i] + h * h10 * self.f0[i] + h01 * self.y1[i] + h * h11 * self.f1[i])
    }
}

/// Stateful adaptive stepper.
pub struct Dp5<const N: usize, F> {
    rhs: F,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    h_max: f64,
    tol: Tolerances,
    rejected: usize,
}

impl<const N: usize, F> Dp5<N, F>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], h0: f64, tol: Tolerances) -> Result<Self> {
        let f = rhs(t0, &y0)?;
        Ok(Self {
            rhs,
            t: t0,
            y: y0,
            f,
            h: h0,
            h_max: f64::INFINITY,
            tol,
            rejected: 0,
        })
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self.h = self.h.min(h_max);
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn f(&self) -> &[f64; N] {
        &self.f
    }

    /// Proposed size of the next step.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn underflow(&self, h: f64) -> bool {
        h <= 1e-14 * self.t.abs() || h <= f64::MIN_POSITIVE
    }

    /// Takes one accepted step, never going past `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<Accepted<N>> {
        let mut h = self.h.min(self.h_max);
        let mut node_hits = 0;
        loop {
            let last = self.t + h >= t_stop;
            if last {
                h = t_stop - self.t;
            }
            if self.underflow(h) {
                return Err(Error::StepUnderflow { tau: self.t });
            }
            match dp5_step(&mut self.rhs, self.t, &self.y, &self.f, h) {
                Ok((y1, f1, err)) => {
                    let e = error_norm(&err, &self.y, &y1, self.tol);
                    if e <= 1.0 {
                        let factor = if e == 0.0 {
                            MAX_FACTOR
                        } else {
                            (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                        };
                        let t1 = if last { t_stop } else { self.t + h };
                        let acc = Accepted {
                            t0: self.t,
                            y0: self.y,
                            f0: self.f,
                            t1,
                            y1,
                            f1,
                        };
                        self.t = t1;
                        self.y = y1;
                        self.f = f1;
                        // a clamped final step says little about the natural size
                        if !last || factor < 1.0 {
                            self.h = (h * factor).min(self.h_max);
                        }
                        return Ok(acc);
                    }
                    self.rejected += 1;
                    h *= (SAFETY * e.powf(-0.2)).max(MIN_FACTOR);
                }
                Err(Error::Node { r, tau }) => {
                    node_hits += 1;
                    if node_hits > MAX_NODE_RETRIES {
                        return Err(Error::NodeEncounter { r, tau });
                    }
                    self.rejected += 1;
                    h *= NODE_SHRINK;
                }
                Err(other) => return Err(other),
            }
        }
    }

    /// State at `t + h` from a single unchecked step off the current state.
    ///
    /// Intended for `h` no larger than the last accepted step, e.g. for
    /// refining an event located inside it.
    pub fn probe(&mut self, h: f64) -> Result<[f64; N]> {
        if h == 0.0 {
            return Ok(self.y);
        }
        let (y1, _, _) = dp5_step(&mut self.rhs, self.t, &self.y, &self.f, h)?;
        Ok(y1)
    }

    /// Restores the stepper to an earlier accepted point.
    pub fn rewind(&mut self, t: f64, y: [f64; N], f: [f64; N]) {
        self.t = t;
        self.y = y;
        self.f = f;
    }

    /// Integrates up to `t_end`, calling `observe` after every accepted step.
    pub fn integrate_to<O: FnMut(&Accepted<N>)>(&mut self, t_end: f64, mut observe: O) -> Result<[f64; N]> {
        while self.t < t_end {
            let acc = self.step(t_end)?;
            observe(&acc);
        }
        Ok(self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tableau_rows_sum_to_nodes() {
        assert_relative_eq!(A3.iter().sum::<f64>(), C[1], epsilon = 1e-15);
        assert_relative_eq!(A4.iter().sum::<f64>(), C[2], epsilon = 1e-15);
        assert_relative_eq!(A5.iter().sum::<f64>(), C[3], epsilon = 1e-14);
        assert_relative_eq!(A6.iter().sum::<f64>(), C[4], epsilon = 1e-14);
        assert_relative_eq!(B.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(E.iter().sum::<f64>().abs() < 1e-16);
    }

    type ScalarRhs<'a> = dyn FnMut(f64, &[f64; 1]) -> Result<[f64; 1]> + 'a;

    #[test]
    fn fifth_order_convergence() {
        // y' = y cos t, y = exp(sin t)
        let mut rhs = |t: f64, y: &[f64; 1]| Ok([y[0] * t.cos()]);
        let run = |n: usize, rhs: &mut ScalarRhs| {
            let h = 1.0 / n as f64;
            let mut y = [1.0];
            let mut t = 0.0;
            for _ in 0..n {
                let f0 = rhs(t, &y).unwrap();
                let (y1, _, _) = dp5_step(rhs, t, &y, &f0, h).unwrap();
                y = y1;
                t += h;
            }
            (y[0] - 1f64.sin().exp()).abs()
        };
        let e1 = run(10, &mut rhs);
        let e2 = run(20, &mut rhs);
        let order = (e1 / e2).log2();
        assert!(order > 4.6 && order < 5.6, "observed order {order}");
    }

    #[test]
    fn adaptive_harmonic_oscillator() {
        let rhs = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let tol = Tolerances { rtol: 1e-11, atol: 1e-12 };
        let mut s = Dp5::new(rhs, 0.0, [1.0, 0.0], 1e-3, tol).unwrap();
        let mut max_interp_err: f64 = 0.0;
        let y = s
            .integrate_to(10.0, |acc| {
                let tm = 0.5 * (acc.t0 + acc.t1);
                let yi = acc.interpolate(tm);
                max_interp_err = max_interp_err.max((yi[0] - tm.cos()).abs());
            })
            .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
        assert_eq!(s.t(), 10.0);
        assert!(max_interp_err < 1e-3);
    }

    #[test]
    fn persistent_node_becomes_encounter() {
        let rhs = |t: f64, y: &[f64; 1]| {
            if t > 0.5 {
                Err(Error::Node { r: y[0], tau: t })
            } else {
                Ok([1.0])
            }
        };
        let mut s = Dp5::new(rhs, 0.0, [0.0], 0.1, Tolerances::default()).unwrap();
        let out = s.integrate_to(1.0, |_| {});
        assert!(matches!(out, Err(Error::NodeEncounter { .. }) | Err(Error::StepUnderflow { .. })));
    }
}
