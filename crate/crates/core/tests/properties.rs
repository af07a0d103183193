use besovinf::cli::{fit_exponent, growth_factor, spread, InflationConfig, Mode};
use besovinf::inflation_barotropic::{choose_parameters, ParamTriplet};
use besovinf::inflation_heat::{choose_parameters_heat, HeatParamTriplet};
use besovinf::lp_frame::{make_data_bump, make_lp_frame};
use besovinf::patch_field::{add, apply_multiplier, FourierPatch, PatchField};
use besovinf::semigroup::{
    compressible_projector, duhamel_kernel, duhamel_kernel_difference, helmholtz_split, ViscosityParams,
};
use besovinf::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(e in -18.0f64..18.0) {
        let frame = make_lp_frame(-22, 22).unwrap();
        prop_assert!((frame.partition_sum(2f64.powf(e)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blocks_are_disjoint(e in -10.0f64..10.0, gap in 2i32..6) {
        let frame = make_lp_frame(-20, 20).unwrap();
        let xi = [2f64.powf(e), 0.0, 0.0];
        let j = e.floor() as i32;
        for a in j - 2..=j + 2 {
            prop_assert_eq!(frame.phi_j(a, xi) * frame.phi_j(a + gap, xi), 0.0);
        }
    }

    #[test]
    fn duhamel_kernel_is_symmetric_and_sandwiched(a in 0.0f64..50.0, b in 0.0f64..50.0, t in 1e-4f64..1.0) {
        let d = duhamel_kernel(a, b, t);
        let d2 = duhamel_kernel(b, a, t);
        prop_assert!((d - d2).abs() <= 1e-12 * d);
        // e^{−max·t} ≤ D/t ≤ e^{−min·t}
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(d <= t * (-lo * t).exp() * (1.0 + 1e-12));
        prop_assert!(d >= t * (-hi * t).exp() * (1.0 - 1e-12));
    }

    #[test]
    fn kernel_difference_matches_plain_difference(
        a1 in 0.0f64..20.0, gap in 0.5f64..20.0, b in 30.0f64..60.0, t in 0.05f64..0.5,
    ) {
        let a2 = a1 + gap;
        let want = duhamel_kernel(a2, b, t) - duhamel_kernel(a1, b, t);
        let got = duhamel_kernel_difference(a1, a2, b, t, (-a1 * t).exp(), (-b * t).exp());
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-300), "{got} vs {want}");
    }

    #[test]
    fn barotropic_search_is_feasible(p in 6.05f64..1e4) {
        let t: ParamTriplet = choose_parameters(p).unwrap();
        prop_assert!(t.violations().is_empty());
        prop_assert!(t.predicted_exponent() > 0.0);
    }

    #[test]
    fn heat_search_is_feasible(p in 3.05f64..1e4) {
        let t: HeatParamTriplet = choose_parameters_heat(p).unwrap();
        prop_assert!(t.violations().is_empty());
        prop_assert!(t.predicted_exponent() > 0.0);
        prop_assert!(t.eps < 2.0 / 3.0 - 1.0 / t.q - 1.0 / t.p);
    }

    #[test]
    fn fit_recovers_power_laws(slope in -4.0f64..4.0, c in 0.01f64..100.0, start in 0u32..20, len in 4usize..10) {
        let rows: Vec<(f64, f64)> =
            (0..len).map(|i| { let n = (start as usize + i) as f64; (n, c * 2f64.powf(slope * n)) }).collect();
        let f = fit_exponent(&rows).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-9);
        prop_assert!((f.intercept - c.log2()).abs() < 1e-8);
        prop_assert!(f.residual < 1e-8);
    }

    #[test]
    fn growth_never_exceeds_spread(v in prop::collection::vec(0.01f64..100.0, 1..12)) {
        prop_assert!(growth_factor(&v) <= spread(&v) * (1.0 + 1e-15));
        prop_assert!(growth_factor(&v) >= 1.0);
    }

    #[test]
    fn config_round_trip(p in 3.5f64..50.0, n_min in 9u32..12, extra in 0u32..4, heat in any::<bool>(), seed in any::<u64>()) {
        let c = InflationConfig {
            mode: if heat { Mode::Heat } else { Mode::Barotropic },
            p,
            n_min,
            n_max: n_min + extra,
            seed,
            ..Default::default()
        };
        let text = c.to_json().unwrap();
        let back = InflationConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn helmholtz_parts_sum_and_project(cx in 2.0f64..8.0, cy in -4.0f64..4.0, re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let b = make_data_bump();
        let c = [(cx * 4.0).round() / 4.0, (cy * 4.0).round() / 4.0, 0.0];
        let amp = Complex64::new(re, im);
        let comps: Vec<Vec<FourierPatch>> = (0..3)
            .map(|k| vec![FourierPatch::radial(c, 0.25, 1.0, amp * (k as f64 + 1.0), |r| b.eval(2.0 * r)).unwrap()])
            .collect();
        let u = PatchField::new(comps, false).unwrap();
        let (p, q) = helmholtz_split(&u).unwrap();
        let s = add(&p, &q).unwrap();
        let pp = apply_multiplier(&compressible_projector(), &p).unwrap();
        for xi in [c, [c[0] + 0.25, c[1] - 0.5, 0.25]] {
            for k in 0..3 {
                prop_assert!((s.evaluate(xi)[k] - u.evaluate(xi)[k]).norm() < 1e-12);
                prop_assert!((pp.evaluate(xi)[k] - p.evaluate(xi)[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn viscosity_rates_are_ordered(mu in 0.1f64..5.0, lambda in -0.06f64..5.0, rho in 0.5f64..3.0) {
        if let Ok(v) = ViscosityParams::new(mu, lambda, rho) {
            prop_assert!(v.mu_bar() > 0.0 && v.nu_bar() > 0.0);
            prop_assert!((v.nu_bar() - v.mu_bar() - v.lambda_bar() - v.mu_bar()).abs() < 1e-12 * v.nu_bar());
        }
    }
}
