use proptest::prelude::*;
use sfc_ldpc::decoder::{bp_decode, is_stopping_set, peel, sample_erasures, ErasurePattern, Outcome};
use sfc_ldpc::evolution::{ege_initial, empirical_moments, EmpiricalConfig, R1Range};
use sfc_ldpc::sampler::{sample_graph, TannerGraph};
use sfc_ldpc::EnsembleParams;

/// Three variables at position 0 of a (2,4) chain. `v0` and `v1` both
/// attach to checks `c0` and `c1`; `v2` attaches to `c2` and `c1`.
fn six_node_graph() -> TannerGraph {
    let params = EnsembleParams::parse(2, 4, 1, "1", 3).unwrap();
    TannerGraph::from_parts(
        params,
        vec![0, 0, 0],
        vec![0, 1, 0],
        vec![4, 4, 4],
        vec![0, 1, 0, 1, 2, 1],
        false,
    )
    .unwrap()
}

/// Union of every stopping set inside `erased`, by enumeration.
fn maximal_stopping_set(g: &TannerGraph, erased: &[u32]) -> Vec<u32> {
    let n = erased.len();
    let mut union = vec![false; n];
    for mask in 1u32..(1 << n) {
        let set: Vec<u32> = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| erased[k]).collect();
        if is_stopping_set(g, &set) {
            for k in 0..n {
                union[k] |= mask >> k & 1 == 1;
            }
        }
    }
    (0..n).filter(|&k| union[k]).map(|k| erased[k]).collect()
}

#[test]
fn two_variable_stopping_set_stalls() {
    let g = six_node_graph();
    assert!(is_stopping_set(&g, &[0, 1]));
    for mask in 0u32..8 {
        let erased: Vec<u32> = (0..3).filter(|&v| mask >> v & 1 == 1).collect();
        let pat = ErasurePattern::from_ids(erased.clone(), 0.5, 0);
        let tr = peel(&g, &pat, 7).unwrap();
        let bp = bp_decode(&g, &pat, None).unwrap();
        let expect = maximal_stopping_set(&g, &erased);
        assert_eq!(tr.residual, expect, "pattern {erased:?}");
        assert_eq!(bp.residual, expect.len());
        assert_eq!(tr.outcome, bp.outcome);
        assert_eq!(tr.outcome == Outcome::Stall, mask & 3 == 3);
    }
}

#[test]
fn no_erasures_need_no_work() {
    let g = six_node_graph();
    let pat = sample_erasures(&g, 0.0, 1).unwrap();
    assert_eq!(peel(&g, &pat, 1).unwrap().steps, 0);
    let bp = bp_decode(&g, &pat, None).unwrap();
    assert_eq!((bp.outcome, bp.iterations), (Outcome::Success, 0));
}

#[test]
fn erasure_count_concentrates() {
    let p = EnsembleParams::parse(3, 6, 10, "1", 4762).unwrap();
    let g = sample_graph(&p, 2).unwrap();
    let n = g.num_variables() as f64;
    assert!(n >= 100_000.0);
    let k = sample_erasures(&g, 0.5, 3).unwrap().len() as f64;
    assert!((k - n / 2.0).abs() <= 3.0 * (n * 0.25).sqrt());
}

#[test]
fn initial_degree_one_edges_match_closed_form() {
    let p = EnsembleParams::parse(3, 6, 20, "1.1", 500).unwrap();
    let eps = 0.43;
    let mut cfg = EmpiricalConfig::new(500, 1000, 11, vec![0.0]);
    cfg.full_covariance = false;
    cfg.r1_range = R1Range::All;
    let emp = empirical_moments(&p, eps, &cfg).unwrap();
    let closed = ege_initial(&p, eps).unwrap().r1(R1Range::All);
    let z = (emp.r1_mean(0) - closed).abs() / emp.r1_standard_error(0);
    assert!(z <= 3.0, "r1(0) {} vs {closed}: {z:.2} standard errors", emp.r1_mean(0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn peeling_resolves_the_maximal_stopping_set(
        seed in any::<u64>(),
        m in 2u64..6,
        eps in 0.2f64..0.7,
        alpha in prop::sample::select(vec!["1", "1.1", "3/2"]),
    ) {
        let p = EnsembleParams::parse(3, 6, 1, alpha, m).unwrap();
        let g = sample_graph(&p, seed).unwrap();
        let pat = sample_erasures(&g, eps, seed ^ 1).unwrap();
        prop_assume!(pat.len() <= 14);
        let tr = peel(&g, &pat, seed ^ 2).unwrap();
        tr.check_conservation(3).unwrap();
        let bp = bp_decode(&g, &pat, None).unwrap();
        let expect = maximal_stopping_set(&g, &pat.erased);
        prop_assert_eq!(&tr.residual, &expect);
        prop_assert_eq!(bp.residual, expect.len());
        prop_assert_eq!(tr.outcome, bp.outcome);
        prop_assert_eq!(tr.outcome == Outcome::Success, expect.is_empty());
    }

    #[test]
    fn traces_lose_one_variable_and_dv_edges_per_step(seed in any::<u64>(), eps in 0.1f64..0.6) {
        let p = EnsembleParams::parse(3, 6, 3, "6/5", 30).unwrap();
        let g = sample_graph(&p, seed).unwrap();
        let pat = sample_erasures(&g, eps, seed).unwrap();
        let tr = peel(&g, &pat, seed).unwrap();
        tr.check_conservation(3).unwrap();
        let first = &tr.samples[0];
        prop_assert_eq!(first.total_v(), pat.len() as u64);
        let last = tr.samples.last().unwrap();
        match tr.outcome {
            Outcome::Success => prop_assert_eq!(last.total_v(), 0),
            Outcome::Stall => {
                prop_assert!(last.total_v() > 0);
                prop_assert_eq!(last.r1(6), 0);
                prop_assert!(is_stopping_set(&g, &tr.residual));
            }
        }
    }

    #[test]
    fn erasures_are_reproducible(seed in any::<u64>(), eps in 0.0f64..=1.0) {
        let p = EnsembleParams::parse(3, 6, 2, "1.1", 20).unwrap();
        let g = sample_graph(&p, 5).unwrap();
        prop_assert_eq!(sample_erasures(&g, eps, seed).unwrap(), sample_erasures(&g, eps, seed).unwrap());
    }
}
