use gravlink_core::kernels::{
    delta_kernel, dp_kernel, eta_closed_form, eta_tensor, gaussian_kernel, invert_kernel, Insertion, SmearingProfile,
};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Trapezoid sum of `∫ d³k k_l k_j k^{4−n} e^{−2αk²} cos(k·d)` on a cube;
/// the integrand is smooth and decays like a Gaussian, so the lattice sum
/// converges spectrally.
fn lattice_eta(n: i32, alpha: f64, d: [f64; 3], half_width: f64, h: f64) -> [[f64; 3]; 3] {
    let m = (half_width / h).round() as i64;
    let mut t = [[0.0; 3]; 3];
    let w = h * h * h;
    for i in -m..=m {
        let kx = i as f64 * h;
        for j in -m..=m {
            let ky = j as f64 * h;
            for l in -m..=m {
                let kz = l as f64 * h;
                let k2 = kx * kx + ky * ky + kz * kz;
                if k2 == 0.0 {
                    continue;
                }
                let f = w * k2.powf(2.0 - n as f64 / 2.0) * (-2.0 * alpha * k2).exp() * (kx * d[0] + ky * d[1] + kz * d[2]).cos();
                let k = [kx, ky, kz];
                for a in 0..3 {
                    for b in 0..3 {
                        t[a][b] += f * k[a] * k[b];
                    }
                }
            }
        }
    }
    t
}

#[test]
fn tensor_matches_a_lattice_quadrature() {
    let alpha = 1.0;
    let s = SmearingProfile::power_gaussian(alpha, 2.0).unwrap();
    let d = [2.0 / 3f64.sqrt(), -2.0 / 3f64.sqrt(), 2.0 / 3f64.sqrt()];
    let exact = eta_tensor(2, &s, &Insertion::None, d, 1.0).unwrap();
    let lattice = lattice_eta(2, alpha, d, 6.0, 0.12);
    let scale = exact.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for a in 0..3 {
        for b in 0..3 {
            assert!((exact[a][b] - lattice[a][b]).abs() < 1e-4 * scale, "({a},{b}): {} vs {}", exact[a][b], lattice[a][b]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tensor_trace_is_the_lower_scalar(alpha in 0.3f64..2.0, z in 0.0f64..6.0, dir in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0], n in prop_oneof![Just(2), Just(4)]) {
        let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        prop_assume!(norm > 0.1);
        let d = [z * dir[0] / norm, z * dir[1] / norm, z * dir[2] / norm];
        let s = SmearingProfile::power_gaussian(alpha, 2.0).unwrap();
        let t = eta_tensor(n, &s, &Insertion::None, d, 1.0).unwrap();
        let trace = t[0][0] + t[1][1] + t[2][2];
        let scalar = eta_closed_form(n - 2, alpha, z, 1.0).unwrap();
        let scale = eta_closed_form(n - 2, alpha, 0.0, 1.0).unwrap().abs();
        prop_assert!((trace - scalar).abs() < 1e-8 * scale, "{} vs {}", trace, scalar);
        for a in 0..3 {
            for b in 0..3 {
                prop_assert!((t[a][b] - t[b][a]).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn inversion_is_an_involution(a in 0.1f64..10.0, sigma in 0.05f64..3.0, g in 0.1f64..10.0, hbar in 0.2f64..5.0, q in -3.0f64..3.0) {
        let k = 10f64.powf(q);
        for kernel in [delta_kernel(a, hbar).unwrap(), gaussian_kernel(sigma, hbar).unwrap(), dp_kernel(hbar, g).unwrap()] {
            let inv = invert_kernel(&kernel).unwrap();
            let v = kernel.eval(k);
            prop_assume!(v > 1e-250);
            prop_assert!((v * inv.eval(k) * (2.0 * PI * hbar).powi(3) - 1.0).abs() < 1e-12);
            let twice = invert_kernel(&inv).unwrap();
            prop_assert!((twice.eval(k) - v).abs() <= 1e-13 * v);
        }
    }
}
