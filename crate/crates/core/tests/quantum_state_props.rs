use std::f64::consts::PI;

use dbb_core::quad::{integrate, QuadOptions};
use dbb_core::quantum_state::*;
use dbb_core::vec3;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_four_spinor(rng: &mut ChaCha8Rng) -> FourSpinor {
    FourSpinor(std::array::from_fn(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
}

fn random_interior_point(rng: &mut ChaCha8Rng, a: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-a..a));
        let r = vec3::norm(v);
        if r > 1e-3 * a && r < 0.999 * a {
            return v;
        }
    }
}

proptest! {
    #[test]
    fn spin_vector_is_unit_and_phase_free(
        ur in -1.0f64..1.0, ui in -1.0f64..1.0, dr in -1.0f64..1.0, di in -1.0f64..1.0, phase in 0.0f64..(2.0 * PI)
    ) {
        prop_assume!(ur * ur + ui * ui + dr * dr + di * di > 1e-6);
        let chi = SpinorPair::new(c(ur, ui), c(dr, di)).unwrap();
        let s = spin_vector(&chi);
        prop_assert!((vec3::norm(s.as_array()) - 1.0).abs() < 1e-12);
        let t = spin_vector(&chi.with_phase(phase));
        for (x, y) in s.as_array().iter().zip(t.as_array()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spinor_is_normalized(ur in -5.0f64..5.0, ui in -5.0f64..5.0, dr in -5.0f64..5.0, di in -5.0f64..5.0) {
        prop_assume!(ur.abs() + ui.abs() + dr.abs() + di.abs() > 1e-6);
        let chi = SpinorPair::new(c(ur, ui), c(dr, di)).unwrap();
        prop_assert!((chi.up().norm_sqr() + chi.down().norm_sqr() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn ground_state_is_normalized() {
    for a in [1.0, 2.5] {
        let p = PhysicalParams { box_radius: a, detector_radius: 10.0 * a, ..PhysicalParams::default() };
        let r = integrate(
            |r| 4.0 * PI * r * r * ground_state_psi(r, &p).powi(2),
            0.0,
            a,
            QuadOptions::with_tol(1e-14, 1e-13),
        );
        assert!((r.value - 1.0).abs() < 1e-10, "a = {a}: {}", r.value);
    }
}

#[test]
fn fierz_identity_on_random_spinors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let psi = random_four_spinor(&mut rng);
        let f = fierz_residual(&psi);
        let rho = psi.norm_sqr();
        assert!(f.residual().abs() / (rho * rho) < 1e-10);
        assert!(f.max_imag < 1e-12);
        assert!(f.lhs >= 0.0);
        let v = dirac_velocity(&psi, 1.0);
        assert!(vec3::norm(v) <= 1.0 + 1e-12);
    }
}

#[test]
fn dirac_density_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = PhysicalParams { c: 3.0, ..PhysicalParams::default() };
    let g = gamma_length(&p);
    for _ in 0..200 {
        let rv = random_interior_point(&mut rng, 1.0);
        let chi = SpinorPair::new(c(rng.random(), rng.random()), c(rng.random(), rng.random())).unwrap();
        let t = rng.random_range(0.0..5.0);
        let psi4 = dirac_ground_state(rv, t, &chi, &p).unwrap();
        let r = vec3::norm(rv);
        let want = ground_state_psi(r, &p).powi(2) + (g * ground_state_dpsi(r, &p)).powi(2);
        assert!((psi4.norm_sqr() - want).abs() < 1e-12 * want.max(1.0));
    }
}

/// Closed-form radial functions used only by this oracle.
fn psi_derivs(r: f64, a: f64) -> (f64, f64, f64) {
    let k = PI / a;
    let n = (2.0 * PI * a).sqrt();
    let (s, co) = (k * r).sin_cos();
    let psi = s / (n * r);
    let d1 = (k * r * co - s) / (n * r * r);
    let d2 = (-k * k * r * r * s - 2.0 * k * r * co + 2.0 * s) / (n * r * r * r);
    (psi, d1, d2)
}

fn pauli(j: usize, v: [Complex64; 2]) -> [Complex64; 2] {
    let i = Complex64::i();
    match j {
        0 => [v[1], v[0]],
        1 => [-i * v[1], i * v[0]],
        _ => [v[0], -v[1]],
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn dirac_state_is_an_eigenstate() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for c_light in [2.0, 10.0, 100.0] {
        let p = PhysicalParams { c: c_light, ..PhysicalParams::default() };
        let g = gamma_length(&p);
        let e_r = relativistic_energy(&p);
        let mc2 = rest_energy(&p);
        for _ in 0..100 {
            let rv = random_interior_point(&mut rng, 1.0);
            let chi = SpinorPair::new(c(rng.random(), rng.random()), c(rng.random(), rng.random())).unwrap();
            let psi4 = dirac_ground_state(rv, 0.0, &chi, &p).unwrap();
            let r = vec3::norm(rv);
            let (_, d1, d2) = psi_derivs(r, 1.0);
            let h = d1 / r;
            let dh = (d2 - h) / r;
            let x = [chi.up(), chi.down()];
            // gradients of the upper pair u = psi chi and lower pair l = -i g h (r.sigma) chi
            let mut grad_u = [[c(0.0, 0.0); 2]; 3];
            let mut grad_l = [[c(0.0, 0.0); 2]; 3];
            let rs = {
                let mut acc = [c(0.0, 0.0); 2];
                for j in 0..3 {
                    let s = pauli(j, x);
                    acc[0] += rv[j] * s[0];
                    acc[1] += rv[j] * s[1];
                }
                acc
            };
            for j in 0..3 {
                let sj = pauli(j, x);
                for s in 0..2 {
                    grad_u[j][s] = d1 * rv[j] / r * x[s];
                    grad_l[j][s] = -Complex64::i() * g * (dh * rv[j] / r * rs[s] + h * sj[s]);
                }
            }
            let mut sigma_grad_l = [c(0.0, 0.0); 2];
            let mut sigma_grad_u = [c(0.0, 0.0); 2];
            for j in 0..3 {
                let a = pauli(j, grad_l[j]);
                let b = pauli(j, grad_u[j]);
                for s in 0..2 {
                    sigma_grad_l[s] += a[s];
                    sigma_grad_u[s] += b[s];
                }
            }
            let minus_i_hc = -Complex64::i() * p.hbar * p.c;
            let comps = psi4.0;
            let res = [
                minus_i_hc * sigma_grad_l[0] + mc2 * comps[0] - e_r * comps[0],
                minus_i_hc * sigma_grad_l[1] + mc2 * comps[1] - e_r * comps[1],
                minus_i_hc * sigma_grad_u[0] - mc2 * comps[2] - e_r * comps[2],
                minus_i_hc * sigma_grad_u[1] - mc2 * comps[3] - e_r * comps[3],
            ];
            let norm_res = res.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let norm_psi = psi4.norm_sqr().sqrt();
            assert!(norm_res < 1e-8 * norm_psi * e_r, "c = {c_light}, r = {r}: {norm_res:e}");
        }
    }
}
