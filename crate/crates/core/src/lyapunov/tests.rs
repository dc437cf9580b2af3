use super::*;
use crate::mpo::{Mpo, TruncationPolicy};
use crate::operator::{commutator_derivative, DenseOperator};
use crate::oracle::{qfi_exact, qfi_truncated_exact, SpectralQfiInput};
use crate::probes::{
    encoding_generator_dense, encoding_generator_mpo, state_derivative_mpo, thermal_probe_dense,
    ProbeSpec,
};
use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// rho = diag(0.9, 0.1) with A = sigma_x: dF(s) = 1.28 e^{-s} and
/// F(X) = 2.56 (1 - e^{-X}).
fn single_qubit_backend() -> DenseBackend {
    let rho = DenseOperator::hermitian(array![
        [c(0.9, 0.0), c(0.0, 0.0)],
        [c(0.0, 0.0), c(0.1, 0.0)]
    ])
    .unwrap();
    let a = DenseOperator::hermitian(array![
        [c(0.0, 0.0), c(1.0, 0.0)],
        [c(1.0, 0.0), c(0.0, 0.0)]
    ])
    .unwrap();
    let drho = commutator_derivative(&a, &rho).unwrap();
    DenseBackend::new(&rho, &drho, Some(&a)).unwrap()
}

fn tfim_backend(n: usize, g: f64, beta: f64, theta: f64) -> (DenseBackend, DenseOperator, DenseOperator) {
    let spec = ProbeSpec::new(n, 1.0, g, beta, theta).unwrap();
    let rho0 = thermal_probe_dense(&spec).unwrap();
    let rho = crate::probes::encode_dense(&rho0, theta, n).unwrap();
    let a = encoding_generator_dense(n);
    let drho = commutator_derivative(&a, &rho).unwrap();
    let backend = DenseBackend::new(&rho, &drho, Some(&a)).unwrap();
    (backend, rho, drho)
}

const SINGLE_QUBIT_F: f64 = 2.56;

#[test]
fn integrand_value_initial_and_decayed() {
    let mut backend = single_qubit_backend();
    let b0 = backend.drho();
    assert_abs_diff_eq!(
        qfi_integrand_value(&backend, &b0),
        1.28,
        epsilon = 1e-12
    );
    let zero = backend.zero();
    assert_eq!(qfi_integrand_value(&backend, &zero), 0.0);
    // dF(1) needs the integrand at half argument
    let (half, _) = backend
        .propagate(&b0, 0.5, &TruncationPolicy::exact())
        .unwrap();
    assert_abs_diff_eq!(
        qfi_integrand_value(&backend, &half),
        1.28 * (-1.0f64).exp(),
        epsilon = 1e-12
    );
}

#[test]
fn fixed_lower_rule_brackets_closed_form() {
    let mut backend = single_qubit_backend();
    let config = IntegrationConfig::fixed(1.0, 1e-3);
    let (f_num, trace) = integrate_qfi(&mut backend, &config).unwrap();
    let closed = SINGLE_QUBIT_F * (1.0 - (-1.0f64).exp());
    assert!(f_num <= closed);
    assert!(f_num >= closed - 2e-3);
    assert!((999..=1001).contains(&trace.rows.len()));
    assert_abs_diff_eq!(trace.rows.last().unwrap().s, 1.0, epsilon = 1e-9);
}

#[test]
fn zero_cutoff_yields_zero() {
    let mut backend = single_qubit_backend();
    let config = IntegrationConfig::fixed(0.0, 1e-3);
    let (f_num, trace) = integrate_qfi(&mut backend, &config).unwrap();
    assert_eq!(f_num, 0.0);
    assert!(trace.rows.is_empty());
}

#[test]
fn pure_state_truncation_error_is_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let dim = 8;
    let mut psi: Vec<C64> = (0..dim)
        .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut psi {
        *z /= norm;
    }
    let mut mat: Array2<C64> = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            mat[[i, j]] = psi[i] * psi[j].conj();
        }
    }
    let rho = DenseOperator::hermitian(mat).unwrap();
    let a = encoding_generator_dense(3);
    let drho = commutator_derivative(&a, &rho).unwrap();
    let f_exact = qfi_exact(&SpectralQfiInput::from_state(&rho, &drho).unwrap()).unwrap();

    let mut backend = DenseBackend::new(&rho, &drho, Some(&a)).unwrap();
    let x = 5.0;
    let mut config = IntegrationConfig::fixed(x, 1e-3);
    config.quadrature = Quadrature::Trapezoid;
    config.tail_window = 0.0;
    let (f_num, _) = integrate_qfi(&mut backend, &config).unwrap();
    let eps = (f_exact - f_num) / f_exact;
    assert_abs_diff_eq!(eps, (-x).exp(), epsilon = 1e-6);
}

#[test]
fn sld_single_qubit_element() {
    let mut backend = single_qubit_backend();
    let mut config = IntegrationConfig::fixed(20.0, 1e-3);
    config.quadrature = Quadrature::Trapezoid;
    let (l_eig, _) = accumulate_sld(&mut backend, &config).unwrap();
    let l = backend.to_computational(&l_eig);
    let elem = l.matrix()[[0, 1]];
    assert_abs_diff_eq!(elem.im, 1.6, epsilon = 1e-6);
    assert_abs_diff_eq!(elem.re, 0.0, epsilon = 1e-10);
}

#[test]
fn sld_of_zero_derivative_is_zero() {
    let rho = DenseOperator::hermitian(array![
        [c(0.9, 0.0), c(0.0, 0.0)],
        [c(0.0, 0.0), c(0.1, 0.0)]
    ])
    .unwrap();
    let drho = DenseOperator::zeros(2);
    let mut backend = DenseBackend::new(&rho, &drho, None).unwrap();
    let config = IntegrationConfig::fixed(2.0, 0.1);
    let (l, trace) = accumulate_sld(&mut backend, &config).unwrap();
    assert!(backend.to_computational(&l).frobenius_norm() < 1e-14);
    assert_eq!(trace.f_num, 0.0);
}

#[test]
fn sld_trace_inner_product_reproduces_f_num() {
    let (mut backend, _, _) = tfim_backend(3, 1.5, 2.0, 1.0);
    let config = IntegrationConfig::fixed(5.0, 0.01);
    let (l, trace) = accumulate_sld(&mut backend, &config).unwrap();
    let f_from_l = backend.inner_with_drho(&l);
    assert_abs_diff_eq!(f_from_l, trace.f_num, epsilon = 1e-10 * trace.f_num.max(1.0));
}

#[test]
fn encoding_variant_at_zero_cutoff() {
    let mut backend = single_qubit_backend();
    let mut config = IntegrationConfig::fixed(0.0, 0.1);
    config.variant = Variant::EncodingOperator;
    let (k, l, f, _) = integrate_encoding_variant(&mut backend, &config).unwrap();
    assert!(backend.to_computational(&k).frobenius_norm() < 1e-14);
    assert!(backend.to_computational(&l).frobenius_norm() < 1e-14);
    assert_eq!(f, 0.0);
}

#[test]
fn encoding_variant_matches_integrand_path() {
    let (mut backend, _, drho) = tfim_backend(4, 2.0, 4.0, 1.0);
    let mut config = IntegrationConfig::fixed(10.0, 0.01);
    config.quadrature = Quadrature::Trapezoid;

    let (l_int, trace_int) = accumulate_sld(&mut backend, &config).unwrap();
    let mut config_var = config;
    config_var.variant = Variant::EncodingOperator;
    let (_, l_var, f_var, _) = integrate_encoding_variant(&mut backend, &config_var).unwrap();

    let l_int_c = backend.to_computational(&l_int);
    let l_var_c = backend.to_computational(&l_var);
    let scale = l_int_c.frobenius_norm().max(1.0);
    assert!(l_var_c.frobenius_dist(&l_int_c).unwrap() < 1e-8 * scale);
    assert_abs_diff_eq!(f_var, trace_int.f_num, epsilon = 1e-8 * trace_int.f_num);
    assert!(drho.frobenius_norm() > 0.0);
}

#[test]
fn encoding_variant_on_maximally_mixed() {
    let d = 4.0;
    let rho = DenseOperator::identity(4).scale(c(0.25, 0.0));
    let a = encoding_generator_dense(2);
    let drho = commutator_derivative(&a, &rho).unwrap();
    let mut backend = DenseBackend::new(&rho, &drho, Some(&a)).unwrap();
    let x = 2.0;
    let mut config = IntegrationConfig::fixed(x, 1e-3);
    config.quadrature = Quadrature::Trapezoid;
    config.variant = Variant::EncodingOperator;
    let (k, l, f, _) = integrate_encoding_variant(&mut backend, &config).unwrap();
    let k_c = backend.to_computational(&k);
    let scalar = 0.5 * d * (1.0 - (-2.0 * x / d).exp());
    let expect = a.scale(c(scalar, 0.0));
    assert!(k_c.frobenius_dist(&expect).unwrap() < 1e-6 * expect.frobenius_norm());
    assert!(backend.to_computational(&l).frobenius_norm() < 1e-12);
    assert!(f.abs() < 1e-12);
}

#[test]
fn controller_accepts_flat_integrand_and_grows() {
    match adaptive_controller(1.0, 1.0, 1e-3, 0.1) {
        StepDecision::Accept { next_ds } => assert_abs_diff_eq!(next_ds, 0.2, epsilon = 1e-15),
        _ => panic!("flat integrand must accept"),
    }
}

#[test]
fn controller_boundary_ratio_accepts_without_growth() {
    // tau and the ratio are exactly representable so the boundary is sharp
    let tau = 0.25;
    let df_prev = 1.25;
    let df_new = 1.0;
    match adaptive_controller(df_prev, df_new, tau, 0.1) {
        StepDecision::Accept { next_ds } => assert_abs_diff_eq!(next_ds, 0.1, epsilon = 1e-15),
        _ => panic!("boundary ratio must accept"),
    }
}

#[test]
fn controller_rejects_fast_drop_and_zero() {
    match adaptive_controller(1.0, 0.5, 1e-3, 0.1) {
        StepDecision::Reject { retry_ds } => assert_abs_diff_eq!(retry_ds, 0.05, epsilon = 1e-15),
        _ => panic!("fast drop must reject"),
    }
    assert!(matches!(
        adaptive_controller(1.0, 0.0, 1e-3, 0.1),
        StepDecision::Reject { .. }
    ));
    assert!(matches!(
        adaptive_controller(0.0, 0.0, 1e-3, 0.1),
        StepDecision::Accept { .. }
    ));
}

#[test]
fn adaptive_error_certificate_single_qubit() {
    let mut backend = single_qubit_backend();
    let tau = 1e-3;
    let x = 10.0;
    let mut config = IntegrationConfig::adaptive(x, tau);
    config.tail_window = 0.0;
    let (f_num, trace) = integrate_qfi(&mut backend, &config).unwrap();
    let closed = SINGLE_QUBIT_F * (1.0 - (-x).exp());
    assert!(f_num <= closed);
    assert!((closed - f_num) / f_num <= 0.5 * tau);
    assert!((closed - f_num) / f_num <= 5e-4);
    assert!(trace.warnings.is_empty());
}

#[test]
fn lower_rule_is_monotone_in_cutoff() {
    let mut backend = single_qubit_backend();
    let (f2, _) = integrate_qfi(&mut backend, &IntegrationConfig::fixed(2.0, 1e-3)).unwrap();
    let (f5, _) = integrate_qfi(&mut backend, &IntegrationConfig::fixed(5.0, 1e-3)).unwrap();
    assert!(f2 <= f5);
    let (f5_again, _) = integrate_qfi(&mut backend, &IntegrationConfig::fixed(5.0, 1e-3)).unwrap();
    assert_eq!(f5, f5_again);
}

#[test]
fn trace_rows_are_monotone() {
    let (mut backend, _, _) = tfim_backend(3, 1.5, 2.0, 1.0);
    let config = IntegrationConfig::adaptive(5.0, 1e-3);
    let (_, trace) = integrate_qfi(&mut backend, &config).unwrap();
    let mut prev_s = 0.0;
    let mut prev_f = 0.0;
    for row in &trace.rows {
        assert!(row.s > prev_s);
        assert!(row.d_f >= 0.0);
        assert!(row.f_cum >= prev_f);
        prev_s = row.s;
        prev_f = row.f_cum;
    }
    assert_abs_diff_eq!(prev_s, 5.0, epsilon = 1e-9);
}

#[test]
fn qfi_is_invariant_under_encoded_parameter() {
    let (mut b1, _, _) = tfim_backend(3, 1.5, 2.0, 0.3);
    let (mut b2, _, _) = tfim_backend(3, 1.5, 2.0, 1.0);
    let config = IntegrationConfig::adaptive(10.0, 1e-4);
    let (f1, _) = integrate_qfi(&mut b1, &config).unwrap();
    let (f2, _) = integrate_qfi(&mut b2, &config).unwrap();
    assert_abs_diff_eq!(f1, f2, epsilon = 1e-10 * f1.max(1.0));
}

#[test]
fn integrator_tracks_truncated_oracle() {
    let (mut backend, rho, drho) = tfim_backend(4, 2.0, 4.0, 1.0);
    let input = SpectralQfiInput::from_state(&rho, &drho).unwrap();
    for x in [1.0, 5.0, 15.0] {
        let mut config = IntegrationConfig::fixed(x, 1e-3);
        config.quadrature = Quadrature::Trapezoid;
        config.tail_window = 0.0;
        let (f_num, _) = integrate_qfi(&mut backend, &config).unwrap();
        let oracle = qfi_truncated_exact(&input, x).unwrap();
        assert_abs_diff_eq!(f_num, oracle, epsilon = 1e-6 * oracle.max(1.0));
    }
}

#[test]
fn sld_residual_shrinks_with_cutoff() {
    let (mut backend, rho, drho) = tfim_backend(4, 2.0, 4.0, 1.0);
    let residual = |l: &DenseOperator| -> f64 {
        let sym = rho
            .matmul(l)
            .unwrap()
            .add(&l.matmul(&rho).unwrap())
            .unwrap()
            .scale(c(0.5, 0.0));
        drho.sub(&sym).unwrap().frobenius_norm()
    };
    let mut values = Vec::new();
    for x in [5.0, 20.0, 100.0] {
        let mut config = IntegrationConfig::fixed(x, 0.01);
        config.quadrature = Quadrature::Trapezoid;
        let (l, _) = accumulate_sld(&mut backend, &config).unwrap();
        values.push(residual(&backend.to_computational(&l)));
    }
    assert!(values[0] > values[1] && values[1] > values[2]);
    assert!(values[2] <= 1e-4 * drho.frobenius_norm());
}

#[test]
fn tail_fit_recovers_single_exponential() {
    let x = 10.0;
    let mut rows = Vec::new();
    let ds = 0.05;
    let mut s: f64 = ds;
    let mut f_cum = 0.0;
    while s <= x + 1e-12 {
        let df = 1.28 * (-s).exp();
        f_cum += 2.0 * ds * df;
        rows.push(TraceRow {
            s,
            ds,
            d_f: df,
            f_cum,
            max_bond: 0,
            sv_cutoff: 0.0,
            discarded_weight: 0.0,
            wall_ms: 0.0,
        });
        s += ds;
    }
    let fit = tail_extrapolate(&rows, x, 5.0).unwrap();
    assert_abs_diff_eq!(fit.a, 1.28, epsilon = 1e-10);
    assert_abs_diff_eq!(fit.b, 1.0, epsilon = 1e-10);
    let exact_tail = 2.0 * 1.28 * (-x).exp();
    assert_abs_diff_eq!(fit.delta_f, exact_tail, epsilon = 1e-10);
    let closed = SINGLE_QUBIT_F * (1.0 - (-x).exp());
    let total = closed + fit.delta_f;
    assert_abs_diff_eq!(total, SINGLE_QUBIT_F, epsilon = 1e-10);
}

#[test]
fn tail_fit_skips_flat_or_empty_windows() {
    let rows: Vec<TraceRow> = (1..=20)
        .map(|k| TraceRow {
            s: k as f64 * 0.5,
            ds: 0.5,
            d_f: 0.0,
            f_cum: 0.0,
            max_bond: 0,
            sv_cutoff: 0.0,
            discarded_weight: 0.0,
            wall_ms: 0.0,
        })
        .collect();
    assert!(tail_extrapolate(&rows, 10.0, 5.0).is_none());
    assert!(tail_extrapolate(&[], 10.0, 5.0).is_none());

    let growing: Vec<TraceRow> = (1..=20)
        .map(|k| TraceRow {
            s: k as f64 * 0.5,
            ds: 0.5,
            d_f: (0.1 * k as f64).exp(),
            f_cum: 0.0,
            max_bond: 0,
            sv_cutoff: 0.0,
            discarded_weight: 0.0,
            wall_ms: 0.0,
        })
        .collect();
    assert!(tail_extrapolate(&growing, 10.0, 5.0).is_none());
}

#[test]
fn tail_fit_tracks_slow_mode_of_two_exponentials() {
    let x = 20.0;
    let slow_rate = 1e-3;
    let slow_amp = 1e-4;
    let ds = 0.1;
    let mut rows = Vec::new();
    let mut s: f64 = ds;
    while s <= x + 1e-12 {
        let df = (-s).exp() + slow_amp * (-slow_rate * s).exp();
        rows.push(TraceRow {
            s,
            ds,
            d_f: df,
            f_cum: 0.0,
            max_bond: 0,
            sv_cutoff: 0.0,
            discarded_weight: 0.0,
            wall_ms: 0.0,
        });
        s += ds;
    }
    // the window starts past s ~ 17 where the fast mode has decayed away
    let fit = tail_extrapolate(&rows, x, 2.0).unwrap();
    assert!((fit.b - slow_rate).abs() <= 0.1 * slow_rate);
    let exact_tail = 2.0 * ((-x).exp() + (slow_amp / slow_rate) * (-slow_rate * x).exp());
    assert!((fit.delta_f - exact_tail).abs() <= 0.15 * exact_tail);
}

#[test]
fn dynamic_cutoff_scaling() {
    let eps = 1e-8;
    assert_abs_diff_eq!(dynamic_cutoff(1.28, 1.28, eps), eps, epsilon = 1e-20);
    assert_abs_diff_eq!(dynamic_cutoff(1.28, 0.64, eps), 2.0 * eps, epsilon = 1e-20);
    assert_eq!(dynamic_cutoff(1.28, 0.0, eps), f64::INFINITY);
}

#[test]
fn mpo_backend_tracks_dense_backend() {
    let spec = ProbeSpec::new(3, 1.0, 2.0, 4.0, 1.0).unwrap();
    let rho_dense = thermal_probe_dense(&spec).unwrap();
    let rho_enc = crate::probes::encode_dense(&rho_dense, 1.0, 3).unwrap();
    let a_dense = encoding_generator_dense(3);
    let drho_dense = commutator_derivative(&a_dense, &rho_enc).unwrap();
    let mut dense = DenseBackend::new(&rho_enc, &drho_dense, Some(&a_dense)).unwrap();

    let policy = TruncationPolicy::new(1e-14, usize::MAX);
    let (rho_mpo, _) = Mpo::from_dense(&rho_enc, &TruncationPolicy::exact()).unwrap();
    let a_mpo = encoding_generator_mpo(3).unwrap();
    let drho_mpo = state_derivative_mpo(&rho_mpo, &a_mpo, &TruncationPolicy::exact()).unwrap();
    let mut mpo = MpoBackend::new(rho_mpo, drho_mpo, Some(a_mpo), policy);

    let mut config = IntegrationConfig::fixed(2.0, 0.02);
    config.truncation = policy;
    config.tail_window = 0.0;
    let (f_dense, _) = integrate_qfi(&mut dense, &config).unwrap();
    let (f_mpo, trace) = integrate_qfi(&mut mpo, &config).unwrap();
    assert!((f_dense - f_mpo).abs() <= 1e-3 * f_dense.max(1e-6));
    assert!(trace.rows.iter().all(|r| r.max_bond >= 1));
}
