use proptest::prelude::*;
use sfc_ldpc::evolution::{
    ce_initial, drift, ege_initial, empirical_moments, solve_ege, EmpiricalConfig, MinimumKind,
    SolverOptions,
};
use sfc_ldpc::stats::jarque_bera;
use sfc_ldpc::EnsembleParams;

#[test]
fn interior_degree_one_mass_at_half_erasure() {
    let p = EnsembleParams::parse(3, 6, 6, "1", 10).unwrap();
    let st = ege_initial(&p, 0.5).unwrap();
    assert!((st.r_hat(1, 0) - 0.046875).abs() < 1e-15);
}

#[test]
fn growth_gives_minimum_and_plain_coupling_a_plateau() {
    let sfc = EnsembleParams::parse(3, 6, 20, "1.1", 100).unwrap();
    let t = solve_ege(&sfc, 0.46, &SolverOptions::for_params(&sfc)).unwrap();
    assert_eq!(t.minimum.kind, MinimumKind::Strict);
    assert!(t.completed);

    let sc = EnsembleParams::parse(3, 6, 50, "1", 100).unwrap();
    let t = solve_ege(&sc, 0.46, &SolverOptions::for_params(&sc)).unwrap();
    assert_ne!(t.minimum.kind, MinimumKind::Strict);
}

#[test]
fn above_threshold_decoding_stops_early() {
    let p = EnsembleParams::parse(3, 6, 7, "1.1", 100).unwrap();
    let t = solve_ege(&p, 0.48, &SolverOptions::for_params(&p)).unwrap();
    assert!(!t.completed);
}

#[test]
fn gamma_example_for_slow_growth() {
    let p = EnsembleParams::parse(3, 6, 20, "1.05", 100).unwrap();
    let t = solve_ege(&p, 0.4785 - 0.01, &SolverOptions::for_params(&p)).unwrap();
    let r = t.r1_star.unwrap();
    assert!((r - 0.0539).abs() < 0.0539 * 0.02, "r1(tau*) = {r}");
}

#[test]
fn degree_one_count_is_gaussian_at_bottleneck() {
    let p = EnsembleParams::parse(3, 6, 5, "1.1", 1000).unwrap();
    let eps = 0.44;
    let mean = solve_ege(&p, eps, &SolverOptions::for_params(&p)).unwrap();
    let ts = mean.tau_star.unwrap();
    let mut cfg = EmpiricalConfig::new(1000, 400, 21, vec![ts]);
    cfg.full_covariance = false;
    let emp = empirical_moments(&p, eps, &cfg).unwrap();
    let (stat, pval) = jarque_bera(&emp.r1_samples[0]);
    assert!(pval > 1e-3, "Jarque-Bera {stat:.2}, p = {pval:.2e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drift_removes_one_variable_and_dv_edges(
        l in 1u32..6,
        alpha in prop::sample::select(vec!["1", "1.05", "6/5", "3/2"]),
        eps in 0.05f64..1.0,
        jitter in prop::collection::vec(0.5f64..1.5, 200),
    ) {
        let p = EnsembleParams::parse(3, 6, l, alpha, 10).unwrap();
        let mut st = ege_initial(&p, eps).unwrap();
        for (x, f) in st.x.iter_mut().zip(jitter.iter().cycle()) {
            *x *= f;
        }
        let (_, chk) = drift(&st.layout, &st.x);
        prop_assert!(chk.violation(3) < 1e-9);
    }

    #[test]
    fn initial_covariance_is_symmetric_and_local(
        l in 2u32..6,
        alpha in prop::sample::select(vec!["1", "1.1", "6/5"]),
        eps in 0.0f64..=1.0,
    ) {
        let p = EnsembleParams::parse(3, 6, l, alpha, 10).unwrap();
        let c = ce_initial(&p, eps).unwrap();
        prop_assert!(c.max_asymmetry() == 0.0);
        let l = l as i32;
        for u in -l..=l + 2 {
            prop_assert!(c.get(7, u, 7, u) >= 0.0);
            for x in u + 3..=l + 2 {
                for j in 1..=6 {
                    for z in 1..=6 {
                        prop_assert_eq!(c.get(j, u, z, x), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn initial_state_has_dv_edges_per_variable(
        l in 1u32..8,
        alpha in prop::sample::select(vec!["1", "1.1", "3/2"]),
        eps in 0.0f64..=1.0,
    ) {
        let p = EnsembleParams::parse(3, 6, l, alpha, 10).unwrap();
        let st = ege_initial(&p, eps).unwrap();
        prop_assert!((st.total_r() - 3.0 * st.total_v()).abs() < 1e-9 * (1.0 + st.total_r()));
    }
}
