use lyapcert::lyapunov::{canonical_member, membership_margin, refute_stability, scale_member, solve_algebraic};
use lyapcert::models::{heat_dirichlet, jordan_block, random_stable, upwind_shift, SplitMix64};
use lyapcert::numkernel::{
    expm, hermitian_eig, hermitian_part, identity, real, singular_extremes, solve_linear, spectral_abscissa, Matrix,
    DEFAULT_EXPM_TOL,
};
use lyapcert::perturb::{admissible_radius, random_perturbations, verify_perturbation};
use lyapcert::resolvent::resolvent_norm;
use lyapcert::semigroup::{datko_integral, growth_bound_estimate, log_grid, lower_envelope};
use lyapcert::space::{dual_map_norm, op_norm, pairing, strong_positivity_theta, vec_norm, NormModel};
use lyapcert::{Complex64, Vector};
use proptest::prelude::*;

fn spd_weight(n: usize, seed: u64) -> NormModel {
    let mut rng = SplitMix64::new(seed);
    NormModel::new(rng.psd_matrix(n, n) + identity(n) * real(0.5)).unwrap()
}

fn hermitian(n: usize, seed: u64) -> Matrix {
    hermitian_part(&SplitMix64::new(seed).complex_matrix(n))
}

fn model(kind: u8, n: usize, seed: u64) -> Matrix {
    match kind % 4 {
        0 => heat_dirichlet(n, 1.0).unwrap(),
        1 => jordan_block(n, real(-1.0)).unwrap(),
        2 => upwind_shift(n, 1.0, 1.0).unwrap(),
        _ => random_stable(n, 0.4, seed).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_semigroup_law(seed in any::<u64>(), n in 1usize..8, s in 0.0f64..5.0, t in 0.0f64..5.0) {
        let a = random_stable(n, 0.2, seed).unwrap();
        let lhs = expm(&a, s + t, DEFAULT_EXPM_TOL).unwrap();
        let es = expm(&a, s, DEFAULT_EXPM_TOL).unwrap();
        let et = expm(&a, t, DEFAULT_EXPM_TOL).unwrap();
        let rhs = &es * &et;
        let scale = es.norm() * et.norm() + lhs.norm();
        prop_assert!((&lhs - &rhs).norm() <= 10.0 * DEFAULT_EXPM_TOL * scale,
            "gap {}", (&lhs - &rhs).norm() / scale);
    }

    #[test]
    fn hermitian_eig_reconstructs(seed in any::<u64>(), n in 1usize..=64) {
        let h = hermitian(n, seed);
        let (values, v) = hermitian_eig(&h).unwrap();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let lam = Matrix::from_diagonal(&Vector::from_iterator(n, values.iter().map(|&x| real(x))));
        let rebuilt = &v * lam * v.adjoint();
        prop_assert!((&h - &rebuilt).norm() <= 1e-9 * h.norm());
    }

    #[test]
    fn singular_values_of_inverse(seed in any::<u64>(), n in 1usize..12) {
        // Diagonally shifted random matrices are well conditioned.
        let m = SplitMix64::new(seed).complex_matrix(n) + identity(n) * real(2.0 * n as f64);
        let inv = solve_linear(&m, &identity(n)).unwrap();
        let (_, smin) = singular_extremes(&m).unwrap();
        let (smax_inv, _) = singular_extremes(&inv).unwrap();
        prop_assert!((smin * smax_inv - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn weighted_norm_is_the_weight_pairing(seed in any::<u64>(), n in 1usize..10) {
        let nm = spd_weight(n, seed);
        let x = SplitMix64::new(seed ^ 1).complex_vector(n);
        let v = vec_norm(&x, &nm).unwrap();
        let p = pairing(nm.weight(), &x, &x).unwrap().re;
        prop_assert!((v * v - p).abs() <= 1e-12 * p);
    }

    #[test]
    fn dual_norm_homogeneous_and_dominates_theta(seed in any::<u64>(), n in 1usize..10, c in 0.01f64..100.0) {
        let nm = spd_weight(n, seed);
        let q = SplitMix64::new(seed ^ 2).psd_matrix(n, 1 + (seed as usize) % n);
        let base = dual_map_norm(&q, &nm).unwrap();
        let scaled = dual_map_norm(&(&q * real(c)), &nm).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-12 * c * base);
        prop_assert!(strong_positivity_theta(&q, &nm).unwrap() <= base * (1.0 + 1e-12));
    }

    #[test]
    fn pairing_cauchy_schwarz(seed in any::<u64>(), n in 1usize..10) {
        let nm = spd_weight(n, seed);
        let mut rng = SplitMix64::new(seed ^ 3);
        let q = rng.psd_matrix(n, n);
        let (x, y) = (rng.complex_vector(n), rng.complex_vector(n));
        let lhs = pairing(&q, &x, &y).unwrap().norm();
        let rhs = dual_map_norm(&q, &nm).unwrap() * vec_norm(&x, &nm).unwrap() * vec_norm(&y, &nm).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn scaling_keeps_members(seed in any::<u64>(), n in 2usize..8, c in 1.0f64..50.0) {
        let a = random_stable(n, 0.3, seed).unwrap();
        let nm = NormModel::identity(n);
        let cand = canonical_member(&a, &nm).unwrap();
        let scaled = scale_member(&cand, c).unwrap();
        let direct = membership_margin(&(&cand.q * real(c)), &a, &nm).unwrap();
        prop_assert!(direct.margin <= 1e-8);
        prop_assert!((direct.margin - scaled.margin).abs() <= 1e-8 * c);
    }

    #[test]
    fn refutation_is_sound(seed in any::<u64>(), n in 1usize..6, re in 0.0f64..2.0) {
        let a = jordan_block(n, real(re)).unwrap() + SplitMix64::new(seed).complex_matrix(n) * real(1e-3);
        if let Some(w) = refute_stability(&a).unwrap() {
            prop_assert!(w.lambda.re >= -1e-10);
            prop_assert!(w.relative_residual(&a) <= 1e-8);
            let mut rng = SplitMix64::new(seed ^ 4);
            let q = rng.psd_matrix(n, n);
            prop_assert!(membership_margin(&q, &a, &NormModel::identity(n)).unwrap().margin > 0.0);
        }
    }

    #[test]
    fn growth_estimate_dominates_spectral_bound(kind in 0u8..4, n in 2usize..8, seed in any::<u64>()) {
        let a = model(kind, n, seed);
        let s = spectral_abscissa(&a).unwrap();
        let g = growth_bound_estimate(&a, &NormModel::identity(n), &log_grid(0.01, 10.0, 24)).unwrap();
        prop_assert!(g.omega0_hat >= s - 1e-9);
    }

    #[test]
    fn envelope_and_strong_positivity(kind in 0u8..4, n in 2usize..7, seed in any::<u64>()) {
        let a = model(kind, n, seed);
        let nm = NormModel::identity(n);
        let s = spectral_abscissa(&a).unwrap();
        let fit = lower_envelope(&a, &nm, &log_grid(0.01, 20.0 / s.abs(), 32)).unwrap();
        prop_assert!(fit.worst_violation() <= 1e-12);
        let a_norm = op_norm(&a, &nm).unwrap();
        for &(t, m) in &fit.grid {
            prop_assert!(m >= (-t * a_norm).exp() * (1.0 - 1e-10));
        }
        let cand = canonical_member(&a, &nm).unwrap();
        if let Some(lb) = fit.theta_lower_bound() {
            prop_assert!(cand.theta >= lb - 1e-8, "theta {} < {}", cand.theta, lb);
        }
    }

    #[test]
    fn datko_chain_for_members(kind in 0u8..4, n in 2usize..6, seed in any::<u64>(), c in 1.0f64..4.0) {
        let a = model(kind, n, seed);
        let nm = spd_weight(n, seed);
        let cand = scale_member(&canonical_member(&a, &nm).unwrap(), c).unwrap();
        let x = SplitMix64::new(seed ^ 5).complex_vector(n);
        let integral = datko_integral(&a, &nm, &x, 1e-12).unwrap();
        let quad = pairing(&cand.q, &x, &x).unwrap().re;
        let xn = vec_norm(&x, &nm).unwrap();
        prop_assert!(integral <= quad * (1.0 + 1e-8));
        prop_assert!(quad <= cand.q_norm * xn * xn * (1.0 + 1e-12));
    }

    #[test]
    fn resolvent_bounds_hold_pointwise(kind in 0u8..4, n in 2usize..7, seed in any::<u64>(), u in 0.0f64..1.0, v in -1.0f64..1.0) {
        let a = model(kind, n, seed);
        let nm = NormModel::identity(n);
        let cand = canonical_member(&a, &nm).unwrap();
        let q = cand.q_norm;
        let scale = op_norm(&a, &nm).unwrap();
        let right = Complex64::new(u * scale, 3.0 * v * scale);
        prop_assert!(resolvent_norm(&a, right, &nm).unwrap() <= 2.0 * q * (1.0 + 1e-9));
        let edge = spectral_abscissa(&a).unwrap().max(-1.0 / (2.0 * q));
        let re = edge * (1.0 - u.max(1e-3));
        let left = Complex64::new(re, 3.0 * v * scale);
        let bound = 2.0 * q / (1.0 + 2.0 * q * re);
        prop_assert!(resolvent_norm(&a, left, &nm).unwrap() <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn perturbations_at_radius_pass(kind in 0u8..4, n in 2usize..7, seed in any::<u64>(), alpha in 1.05f64..20.0) {
        let a = model(kind, n, seed);
        let nm = NormModel::identity(n);
        let cand = canonical_member(&a, &nm).unwrap();
        let radius = admissible_radius(&cand, alpha).unwrap();
        for b in random_perturbations(n, 2, radius, &nm, seed).unwrap() {
            let r = verify_perturbation(&a, &b, &cand, alpha, &nm).unwrap();
            prop_assert!(r.margin_after <= 1e-9, "{r:?}");
            prop_assert!(r.rescaled_member);
        }
    }

    #[test]
    fn algebraic_solution_residual(n in 1usize..30, seed in any::<u64>()) {
        let a = random_stable(n, 0.3, seed).unwrap();
        let rhs = SplitMix64::new(seed ^ 6).psd_matrix(n, n) + identity(n);
        let q = solve_algebraic(&a, &rhs).unwrap();
        let residual = a.adjoint() * &q + &q * &a + &rhs;
        prop_assert!(residual.norm() <= 1e-8 * rhs.norm());
    }
}
