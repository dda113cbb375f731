use gravlink_core::hilbert::{free_hamiltonian, number_op, position_op};
use gravlink_core::master::integrate;
use gravlink_core::models::{ktm_protocol, ModelParams, Rates};
use gravlink_core::stochastic::{
    combined_increment, combined_step, simulate_ensemble, snapshot_statistics, whiten_correlated_channels, Channel,
    FeedbackChannel, MeasurementChannel, SimulationConfig, SseStepper, WienerBundle,
};
use gravlink_core::{DensityOperator, HilbertSpec, Mode, ProtocolSpec, StateVector, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn ktm(cutoff: usize, g: f64) -> ProtocolSpec {
    let p = ModelParams::collinear(vec![1.0, 1.0], &[0.0, 1.0], vec![1.0, 1.0], g, 1.0).unwrap();
    ktm_protocol(&p, &Rates::Minimal, cutoff).unwrap()
}

fn state_from(re: &[f64], im: &[f64]) -> StateVector {
    StateVector::new(re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn precompiled_stepper_matches_combined_step(
        re in proptest::collection::vec(-1.0f64..1.0, 16),
        im in proptest::collection::vec(-1.0f64..1.0, 16),
        dw in proptest::collection::vec(-0.1f64..0.1, 2),
    ) {
        let protocol = ktm(4, 0.05);
        let psi = state_from(&re, &im);
        let dt = 1e-3;
        let reference = combined_step(&psi, &protocol, &dw, dt).unwrap();
        let stepper = SseStepper::new(&protocol).unwrap();
        let mut ws = stepper.workspace();
        let mut amps = psi.amplitudes().to_vec();
        let mut rec = vec![0.0; 2];
        stepper.step(&mut amps, &dw, dt, &mut ws, &mut rec, 0).unwrap();
        for (a, b) in amps.iter().zip(reference.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        // renormalized to the contract tolerance
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-10);
        prop_assert!((reference.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn same_triple_same_increment(seed in any::<u64>(), traj in 0u64..1000, step in 0u64..1000) {
        let a = WienerBundle::new(3, 1e-3, seed).unwrap();
        let b = WienerBundle::new(3, 1e-3, seed).unwrap();
        let (mut x, mut y) = ([0.0; 3], [0.0; 3]);
        a.increments(traj, step, &mut x);
        b.increments(traj, step, &mut y);
        prop_assert_eq!(x, y);
        let mut s = a.stream(traj);
        s.seek(step);
        let mut z = [0.0; 3];
        s.next_into(&mut z);
        prop_assert_eq!(x, z);
    }
}

/// `E‖ψ + dψ‖² − 1` evaluated exactly: the Euler increment is affine in each
/// dW, so a 3-point Gauss–Hermite rule per channel integrates it without error.
fn expected_norm_defect(psi: &StateVector, protocol: &ProtocolSpec, dt: f64) -> f64 {
    let nodes = [(-(3.0f64).sqrt(), 1.0 / 6.0), (0.0, 2.0 / 3.0), ((3.0f64).sqrt(), 1.0 / 6.0)];
    let mut acc = 0.0;
    for &(x1, w1) in &nodes {
        for &(x2, w2) in &nodes {
            let dw = [x1 * dt.sqrt(), x2 * dt.sqrt()];
            let d = combined_increment(psi, protocol, &dw, dt).unwrap();
            let n2: f64 = psi.amplitudes().iter().zip(&d).map(|(p, d)| (p + d).norm_sqr()).sum();
            acc += w1 * w2 * (n2 - 1.0);
        }
    }
    acc
}

#[test]
fn norm_defect_is_second_order_in_expectation() {
    let protocol = ktm(5, 0.2);
    let space = protocol.space().unwrap().clone();
    let psi = StateVector::coherent(&space, &[C64::new(0.5, 0.2), C64::new(-0.3, 0.4)]).unwrap();
    let defects: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|&dt| expected_norm_defect(&psi, &protocol, dt)).collect();
    for w in defects.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio} from {defects:?}");
    }
}

#[test]
fn measurement_alone_is_a_martingale() {
    let space = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], 6, 1.0).unwrap();
    let x = position_op(&space, 0).unwrap();
    let ch = Channel::new(MeasurementChannel::new(x.clone(), 0.8).unwrap(), FeedbackChannel::none(space.dim()));
    let protocol = ProtocolSpec::new(gravlink_core::Operator::zeros(space.dim()), vec![ch], 1.0, "measure").unwrap();
    let psi = StateVector::coherent(&space, &[C64::new(0.6, 0.3)]).unwrap();
    let before = psi.expect(&x);
    let bundle = WienerBundle::new(1, 1e-3, 7).unwrap();
    let n = 20_000;
    let mut dw = [0.0];
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            bundle.increments(i, 0, &mut dw);
            combined_step(&psi, &protocol, &dw, 1e-3).unwrap().expect(&x) - before
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / (n as f64).sqrt(), "drift {mean} vs error {}", sd / (n as f64).sqrt());
}

#[test]
fn record_noise_has_unit_variance() {
    let space = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], 8, 1.0).unwrap();
    let x = position_op(&space, 0).unwrap();
    let gamma = 0.5;
    let ch = Channel::new(MeasurementChannel::new(x.clone(), gamma).unwrap(), FeedbackChannel::none(space.dim()));
    let protocol = ProtocolSpec::new(free_hamiltonian(&space).unwrap(), vec![ch], 1.0, "measure").unwrap();
    let stepper = SseStepper::new(&protocol).unwrap();
    let mut ws = stepper.workspace();
    let dt = 1e-3;
    let mut psi = StateVector::ground(&space).amplitudes().to_vec();
    let mut stream = WienerBundle::new(1, dt, 11).unwrap().stream(0);
    let (mut dw, mut rec) = ([0.0], [0.0]);
    let mut z = Vec::new();
    for step in 0..40_000 {
        let mean = StateVector::new(psi.clone()).unwrap().expect(&x);
        stream.next_into(&mut dw);
        stepper.step(&mut psi, &dw, dt, &mut ws, &mut rec, step).unwrap();
        // (r − ⟨a⟩) √dt √γ / ħ with r = rec/dt
        z.push((rec[0] / dt - mean) * dt.sqrt() * gamma.sqrt());
    }
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (z.len() as f64 - 1.0);
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn increments_have_the_wiener_moments() {
    let dt = 2e-3;
    let bundle = WienerBundle::new(2, dt, 5).unwrap();
    let n = 50_000u64;
    let mut out = [0.0; 2];
    let (mut s1, mut s2, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..n {
        bundle.increments(i % 7, i, &mut out);
        s1 += out[0];
        s2 += out[0] * out[0];
        cross += out[0] * out[1];
    }
    let nf = n as f64;
    assert!((s1 / nf).abs() < 4.0 * (dt / nf).sqrt());
    assert!((s2 / nf / dt - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
    assert!((cross / nf).abs() < 4.0 * dt / nf.sqrt());
}

#[test]
fn whitened_records_carry_the_correlator() {
    let space = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0); 2], 2, 1.0).unwrap();
    let ops: Vec<_> = (0..2).map(|k| number_op(&space, k).unwrap()).collect();
    let rho = 0.6;
    let g = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let w = whiten_correlated_channels(&ops, &g).unwrap();
    let dt = 1e-3;
    let bundle = WienerBundle::new(w.rank(), dt, 3).unwrap();
    let n = 100_000u64;
    let mut dw = vec![0.0; w.rank()];
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for step in 0..n {
        bundle.increments(0, step, &mut dw);
        let raw = w.raw_noise(&dw);
        acc += raw[0] * raw[1];
        acc2 += (raw[0] * raw[1]).powi(2);
    }
    let mean = acc / n as f64;
    let sd = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - rho * dt).abs() < 3.0 * sd, "{mean} vs {}", rho * dt);
}

#[test]
fn ensemble_mean_tracks_the_master_equation() {
    let protocol = ktm(6, 0.1);
    let space = protocol.space().unwrap().clone();
    let psi0 = StateVector::coherent(&space, &[C64::new(0.5, 0.0), C64::new(0.0, 0.0)]).unwrap();
    let mut cfg = SimulationConfig::new(1e-3, 0.5, 400, 42);
    cfg.snapshot_every = 250;
    cfg.store_records = false;
    let ens = simulate_ensemble(&protocol, &psi0, &cfg).unwrap();
    let x1 = position_op(&space, 0).unwrap();
    let me = integrate(&DensityOperator::from_pure(&psi0), &protocol, 1e-3, 0.5, &Default::default()).unwrap();
    for (k, t) in ens.times().iter().enumerate().skip(1) {
        let (mean, err) = snapshot_statistics(&ens, k, |psi| psi.expect(&x1));
        let exact = me.state_at(*t).unwrap().expect(&x1);
        assert!((mean - exact).abs() <= 3.0 * err + 1e-3, "t={t}: {mean} vs {exact} (err {err})");
    }
    let again = simulate_ensemble(&protocol, &psi0, &cfg).unwrap();
    assert_eq!(again, ens);
}
