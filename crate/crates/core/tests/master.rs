use gravlink_core::hilbert::position_op;
use gravlink_core::linalg::{self, trace};
use gravlink_core::master::{integrate, lindblad_form, moment_oracle, moments_of, rhs, IntegrateOptions, PhaseSpace};
use gravlink_core::models::{ktm_protocol, ModelParams, Rates};
use gravlink_core::stochastic::{Channel, FeedbackChannel, MeasurementChannel};
use gravlink_core::{DensityOperator, HilbertSpec, Mode, Operator, ProtocolSpec, StateVector, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(uniform(rng), uniform(rng)));
    (&a + a.adjoint()) * C64::from(0.5)
}

fn random_rho(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(uniform(rng), uniform(rng)));
    let r = &a * a.adjoint();
    let t = trace(&r);
    r / t
}

fn random_protocol(rng: &mut ChaCha8Rng, n: usize, channels: usize) -> ProtocolSpec {
    let op = |rng: &mut ChaCha8Rng| Operator::from_dense(&random_hermitian(rng, n), true).unwrap();
    let h0 = op(rng);
    let chans = (0..channels)
        .map(|_| {
            let gamma = 0.1 + uniform(rng).abs() * 4.0;
            Channel::new(MeasurementChannel::new(op(rng), gamma).unwrap(), FeedbackChannel::new(op(rng)).unwrap())
        })
        .collect();
    ProtocolSpec::new(h0, chans, 0.5 + uniform(rng).abs(), "random").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_traceless_and_hermiticity_preserving(seed in any::<u64>(), n in 2usize..6, channels in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_protocol(&mut rng, n, channels);
        let rho = random_rho(&mut rng, n);
        let d = rhs(&rho, &p).unwrap();
        let scale = linalg::max_abs(&d).max(1.0);
        prop_assert!(trace(&d).norm() < 1e-12 * scale);
        prop_assert!(linalg::max_abs(&(&d - d.adjoint())) < 1e-12 * scale);
    }
}

#[test]
fn lindblad_repackaging_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let p = random_protocol(&mut rng, 3, 2);
        let rho = random_rho(&mut rng, 3);
        let a = rhs(&rho, &p).unwrap();
        let b = lindblad_form(&p).apply(&rho);
        let scale = linalg::max_abs(&a).max(1.0);
        assert!(linalg::max_abs(&(&a - &b)) < 1e-12 * scale);
    }
}

#[test]
fn rk4_preserves_trace_and_positivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_protocol(&mut rng, 4, 2);
    let rho0 = DensityOperator::new(random_rho(&mut rng, 4)).unwrap();
    let sol = integrate(&rho0, &p, 1e-3, 1.0, &IntegrateOptions { store_every: 100, ..Default::default() }).unwrap();
    assert!(sol.trace_drift < 1e-10);
    for s in &sol.states {
        assert!(linalg::min_eigenvalue(s) > -1e-9);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_protocol(&mut rng, 3, 1);
    let rho0 = DensityOperator::new(random_rho(&mut rng, 3)).unwrap();
    let run = |dt: f64| integrate(&rho0, &p, dt, 0.5, &IntegrateOptions { store_every: 1_000_000, ..Default::default() }).unwrap();
    let reference = run(1e-4).final_state();
    let e1 = linalg::max_abs(&(run(0.05).final_state().matrix() - reference.matrix()));
    let e2 = linalg::max_abs(&(run(0.025).final_state().matrix() - reference.matrix()));
    let order = (e1 / e2).log2();
    assert!((3.5..4.5).contains(&order), "observed order {order}");
}

#[test]
fn moments_follow_the_gaussian_oracle() {
    let params = ModelParams::collinear(vec![1.0, 1.0], &[0.0, 1.0], vec![1.0, 1.0], 0.05, 1.0).unwrap();
    let p = ktm_protocol(&params, &Rates::Minimal, 14).unwrap();
    let space = p.space().unwrap().clone();
    let psi = StateVector::coherent(&space, &[C64::new(0.4, 0.1), C64::new(-0.2, 0.3)]).unwrap();
    let phase = PhaseSpace::new(&space).unwrap();
    let sol = integrate(&DensityOperator::from_pure(&psi), &p, 1e-3, 0.5, &IntegrateOptions { store_every: 500, ..Default::default() }).unwrap();
    let oracle = moment_oracle(&p, &phase).unwrap();
    let m0 = moments_of(&psi.projector(), &phase);
    let exact = oracle.solve(&m0, 0.5).unwrap();
    let numeric = moments_of(sol.final_state().matrix(), &phase);
    assert!(numeric.relative_error(&exact, 1e-2) < 1e-4, "{}", numeric.relative_error(&exact, 1e-2));
    let x1 = position_op(&space, 0).unwrap();
    assert!((numeric.mean_x(0) - sol.final_state().expect(&x1)).abs() < 1e-12);
}

#[test]
fn embedded_operators_on_distinct_modes_commute() {
    let space = HilbertSpec::new(vec![Mode::harmonic(1.0, 1.0), Mode::harmonic(2.0, 0.5), Mode::free(1.0, 0.7)], vec![3, 4, 2], 1.0).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            if a == b {
                continue;
            }
            let x = position_op(&space, a).unwrap();
            let y = position_op(&space, b).unwrap();
            assert!(x.commutator(&y).max_abs() < 1e-14);
        }
    }
}
