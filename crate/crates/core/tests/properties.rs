use num_complex::Complex64;
use proptest::prelude::*;
use statrs::function::gamma::gamma;

use degschro::bessel::{bessel_j, bessel_j_prime, r_of, theta_norm_sq};
use degschro::diffusive::build_xi_quadrature;
use degschro::evolution::MidpointStepper;
use degschro::model::{classify_kappa, energy, inner_product};
use degschro::resolvent::{
    default_lambdas, resolvent_norm, scan_resolvent, theoretical_exponents, DiagonalStub, Regime,
};
use degschro::{assemble_operator, build_x_grid, Kappa, ProblemSpec, StateVector, SystemOperator, Variant};

fn c64() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b))
}

/// Small operator with random physics, plus two random states for it.
fn op_and_states() -> impl Strategy<Value = (SystemOperator, StateVector, StateVector)> {
    (any::<bool>(), 0.05f64..1.95, 0.05f64..0.95, 0.1f64..5.0, 16usize..60, 16usize..40, 1.0f64..3.0)
        .prop_filter_map("variant P needs alpha < 1", |(pp, alpha, beta, rho, nx, nxi, g)| {
            let variant = if pp { Variant::Pprime } else { Variant::P };
            let spec = ProblemSpec::power_law(variant, alpha, beta, rho).ok()?;
            let xi = build_xi_quadrature(beta, nxi, 1e-3, 1e3).ok()?;
            assemble_operator(&spec, &build_x_grid(nx, g).ok()?, &xi).ok()
        })
        .prop_flat_map(|op| {
            let (nx, nxi) = (op.nx(), op.nxi());
            let state = move || {
                (prop::collection::vec(c64(), nx), prop::collection::vec(c64(), nxi))
                    .prop_map(|(y, psi)| StateVector { y, psi })
            };
            (Just(op), state(), state())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_half_the_squared_norm((op, s, _) in op_and_states()) {
        let e = energy(&s, &op).unwrap();
        let ip = inner_product(&s, &s, &op).unwrap();
        prop_assert!((e - 0.5 * ip.re).abs() <= 1e-15 * e.max(1.0));
        prop_assert!(ip.im.abs() <= 1e-15 * ip.re.max(1.0));
    }

    #[test]
    fn dissipativity_identity((op, s, _) in op_and_states()) {
        let re = inner_product(&op.apply(&s).unwrap(), &s, &op).unwrap().re;
        let d = op.dissipation(&s).unwrap();
        prop_assert!(d <= 0.0);
        prop_assert!((re - d).abs() <= 1e-12 * d.abs().max(1.0), "{} vs {}", re, d);
    }

    #[test]
    fn adjoint_consistency((op, a, b) in op_and_states()) {
        let lhs = inner_product(&op.apply(&a).unwrap(), &b, &op).unwrap();
        let rhs = inner_product(&a, &op.apply_adjoint(&b).unwrap(), &op).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn midpoint_step_balances_and_contracts((op, s, _) in op_and_states(), dt in 1e-3f64..0.5) {
        let st = MidpointStepper::new(&op, dt).unwrap();
        let v0 = s.to_flat();
        let v1 = st.step_flat(&v0);
        let s1 = StateVector::from_flat(&v1, op.nx());
        let mid: Vec<Complex64> = v0.iter().zip(&v1).map(|(a, b)| 0.5 * (a + b)).collect();
        let dmid = op.dissipation(&StateVector::from_flat(&mid, op.nx())).unwrap();
        let (e0, e1) = (energy(&s, &op).unwrap(), energy(&s1, &op).unwrap());
        prop_assert!(e1 <= e0 * (1.0 + 1e-13));
        prop_assert!((e1 - e0 - dt * dmid).abs() <= 1e-11 * e0.max(1.0));
    }

    #[test]
    fn graded_grid_invariants(n in 16usize..500, g in 1.0f64..=4.0) {
        let grid = build_x_grid(n, g).unwrap();
        let x = grid.nodes();
        prop_assert_eq!(x.len(), n);
        prop_assert!(x.windows(2).all(|p| p[1] > p[0]));
        prop_assert!(x[0] > 0.0 && x[n - 1] == 1.0);
        prop_assert!((grid.widths().iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn xi_grid_invariants(beta in 0.02f64..0.98, n in 16usize..300) {
        let g = build_xi_quadrature(beta, n, 1e-4, 1e4).unwrap();
        prop_assert!(g.nodes().iter().all(|x| (1e-4 * (1.0 - 1e-12)..=1e4 * (1.0 + 1e-12)).contains(x)));
        prop_assert!(g.weights().iter().all(|w| *w > 0.0));
        prop_assert!(g.eta().iter().all(|e| *e > 0.0));
    }

    #[test]
    fn reflection_identity(beta in 0.01f64..0.99, rho in 0.01f64..100.0) {
        let spec = ProblemSpec::power_law(Variant::Pprime, 0.5, beta, rho).unwrap();
        let lhs = spec.zeta() * gamma(beta) * gamma(1.0 - beta);
        prop_assert!((lhs - rho).abs() <= 1e-12 * rho);
    }

    #[test]
    fn power_law_degeneracy_is_alpha(alpha in 0.001f64..1.999) {
        let r = classify_kappa(&Kappa::PowerLaw { alpha }).unwrap();
        prop_assert_eq!(r.m_kappa, alpha);
    }

    #[test]
    fn predictions_are_consistent(pp in any::<bool>(), alpha in 0.01f64..1.99, beta in 0.01f64..0.99) {
        let variant = if pp { Variant::Pprime } else { Variant::P };
        prop_assume!(variant == Variant::Pprime || alpha < 1.0);
        let p = theoretical_exponents(&ProblemSpec::power_law(variant, alpha, beta, 1.0).unwrap());
        prop_assert!(p.theta >= 1.0);
        prop_assert_eq!(p.varsigma, p.theta.max(p.upsilon));
        prop_assert_eq!(p.decay_exponent, 2.0 / p.varsigma);
    }

    #[test]
    fn stub_norm_is_even_in_lambda(d in prop::collection::vec(-5.0f64..-0.1, 1..20), l in 0.0f64..50.0) {
        let stub = DiagonalStub::new(d.iter().map(|v| Complex64::new(*v, 0.0)).collect());
        let a = resolvent_norm(&stub, l).unwrap();
        let b = resolvent_norm(&stub, -l).unwrap();
        let want = d.iter().map(|v| 1.0 / (v * v + l * l).sqrt()).fold(0.0, f64::max);
        prop_assert!((a - b).abs() <= 1e-10 * a);
        prop_assert!((a - want).abs() <= 1e-8 * want);
    }

    #[test]
    fn bessel_wronskian(nu in 0.1f64..0.45, z in 0.1f64..10.0) {
        let z = Complex64::new(z, 0.0);
        let w = bessel_j(nu, z).unwrap() * bessel_j_prime(-nu, z).unwrap()
            - bessel_j_prime(nu, z).unwrap() * bessel_j(-nu, z).unwrap();
        let want = -2.0 * (nu * std::f64::consts::PI).sin() / (std::f64::consts::PI * z);
        prop_assert!((w - want).norm() < 1e-12);
    }

    #[test]
    fn theta_norm_is_real_positive_for_real_mu(alpha in 0.0f64..0.99, mu in 0.01f64..5.0) {
        let v = theta_norm_sq(r_of(Complex64::new(mu, 0.0), alpha), alpha).unwrap();
        prop_assert!(v.re > 0.0);
        prop_assert!(v.im == 0.0);
    }

    #[test]
    fn spec_json_round_trip(pp in any::<bool>(), alpha in 0.01f64..1.99, beta in 0.01f64..0.99, rho in 0.01f64..10.0) {
        let variant = if pp { Variant::Pprime } else { Variant::P };
        prop_assume!(variant == Variant::Pprime || alpha < 1.0);
        let s = ProblemSpec::power_law(variant, alpha, beta, rho).unwrap();
        let back: ProblemSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn flat_round_trip(y in prop::collection::vec(c64(), 1..30), psi in prop::collection::vec(c64(), 0..30)) {
        let s = StateVector { y: y.clone(), psi };
        prop_assert_eq!(StateVector::from_flat(&s.to_flat(), y.len()), s);
    }
}

#[test]
fn near_zero_exponent_is_stable_under_refinement() {
    let spec = ProblemSpec::power_law(Variant::P, 0.5, 0.5, 1.0).unwrap();
    let slope = |nx: usize, nxi: usize| {
        let op = assemble_operator(
            &spec,
            &build_x_grid(nx, 1.0).unwrap(),
            &build_xi_quadrature(0.5, nxi, 1e-4, 1e4).unwrap(),
        )
        .unwrap();
        let l = default_lambdas(Regime::NearZero);
        scan_resolvent(&op, &l, Regime::NearZero).unwrap().fit.exponent
    };
    let (a, b) = (slope(200, 100), slope(400, 200));
    assert!((a - b).abs() <= 0.05, "{a} vs {b}");
}
