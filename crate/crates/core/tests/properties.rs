//! Structural invariants checked on random instances.

use proptest::prelude::*;

use quench_core::duality::{build_div_s1, build_div_s1_dfs, haar_sample};
use quench_core::exact::{exact_height, GibbsSpec};
use quench_core::graph::{build_rect, dirichlet_closure};
use quench_core::mcmc::{chi_square, height_box, run_height_chain, ChainConfig, HeightModel};
use quench_core::percolation::{
    dual_config, good_box_shaped, renorm_window_shaped, sample_bernoulli, BoxShape, DisorderConfig, Kind, PlanarBox,
};
use quench_core::potentials::{bessel_i, EdgePotential};
use quench_core::renorm::{bound_chain, sample_instance, Layout};
use quench_core::Error;

fn small_box() -> (PlanarBox, usize) {
    let shape = BoxShape::micro(2);
    (PlanarBox::new(renorm_window_shaped(2, 0, shape)).unwrap(), 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_of_dual_is_identity(seed in any::<u64>(), p in 0.0f64..1.0) {
        let pb = PlanarBox::new(3).unwrap();
        let omega = sample_bernoulli(&pb.graph, Kind::Edge, p, seed).unwrap();
        let dual = dual_config(&pb.graph, &omega).unwrap();
        prop_assert_eq!(dual.dual().bits, omega.bits.clone());
        prop_assert!(dual.bits.iter().zip(&omega.bits).all(|(a, b)| a != b));
    }

    #[test]
    fn rle_round_trips(seed in any::<u64>(), p in 0.0f64..1.0) {
        let pb = PlanarBox::new(4).unwrap();
        let omega = sample_bernoulli(&pb.graph, Kind::Site, p, seed).unwrap();
        let back = DisorderConfig::from_rle(&omega.to_rle()).unwrap();
        prop_assert_eq!(back.bits, omega.bits);
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed(seed in any::<u64>(), p in 0.0f64..1.0) {
        let pb = PlanarBox::new(3).unwrap();
        let a = sample_bernoulli(&pb.graph, Kind::Edge, p, seed).unwrap();
        let b = sample_bernoulli(&pb.graph, Kind::Edge, p, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn good_box_is_monotone_in_primal_bonds(seed in any::<u64>(), p in 0.3f64..0.9, flips in prop::collection::vec(any::<prop::sample::Index>(), 1..12)) {
        let (pb, l) = small_box();
        let shape = BoxShape::micro(l);
        let omega = sample_bernoulli(&pb.graph, Kind::Edge, p, seed).unwrap();
        let mut raised = omega.clone();
        for f in &flips {
            let i = f.index(raised.bits.len());
            raised.bits[i] = true;
        }
        let before = good_box_shaped(&pb, &dual_config(&pb.graph, &omega).unwrap(), (0, 0), l, shape).unwrap().verdict;
        let after = good_box_shaped(&pb, &dual_config(&pb.graph, &raised).unwrap(), (0, 0), l, shape).unwrap().verdict;
        prop_assert!(!before || after);
    }

    #[test]
    fn haar_samples_are_divergence_free(w in 2usize..4, h in 2usize..4, seed in any::<u64>(), dfs in any::<bool>()) {
        let g = build_rect(w, h).unwrap();
        let space = if dfs { build_div_s1_dfs(&g) } else { build_div_s1(&g) }.unwrap();
        let theta = haar_sample(&space, seed);
        prop_assert!(space.divergence_residual(&theta) < 1e-9);
    }

    #[test]
    fn bessel_recurrence(k in 1i64..6, x in 0.05f64..20.0) {
        let lhs = bessel_i(k - 1, x) - bessel_i(k + 1, x);
        let rhs = 2.0 * k as f64 / x * bessel_i(k, x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn chi_square_p_value_is_a_probability(counts in prop::collection::vec(0u64..200, 2..10)) {
        let n = counts.len() as f64;
        let probs = vec![1.0 / n; counts.len()];
        if counts.iter().sum::<u64>() > 0 {
            let r = chi_square(&counts, &probs).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!(r.statistic >= 0.0);
        }
    }

    #[test]
    fn height_variance_grows_with_coupling(beta in 0.3f64..3.0, bump in 1.05f64..2.0) {
        let g = dirichlet_closure(&build_rect(2, 2).unwrap()).unwrap();
        let lo = GibbsSpec::uniform(g.clone(), EdgePotential::BesselHeight(beta));
        let hi = GibbsSpec::uniform(g, EdgePotential::BesselHeight(beta * bump));
        let a = exact_height(&lo, 0).unwrap().var.value;
        let b = exact_height(&hi, 0).unwrap().var.value;
        prop_assert!(b >= a - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn variance_bound_chain_is_non_increasing(seed in any::<u64>(), p in 0.8f64..1.0, beta in 0.5f64..3.0) {
        let lay = Layout::micro_strip();
        let (pb, omega) = sample_instance(lay, p, seed).unwrap();
        let chain = bound_chain(&pb, &omega, lay, beta);
        // Instances beyond the exact solver's table limit are out of scope.
        prop_assume!(!matches!(chain, Err(Error::Resource(_))));
        let chain = chain.unwrap();
        prop_assert!(chain.non_increasing(), "{:?}", chain.values);
    }

    #[test]
    fn chains_are_reproducible(seed in any::<u64>()) {
        let spec = height_box(HeightModel::Zxy, 1.0, 1).unwrap();
        let cfg = ChainConfig::new(400, 40, seed);
        let a = run_height_chain(&spec, &cfg, spec.graph.origin()).unwrap();
        let b = run_height_chain(&spec, &cfg, spec.graph.origin()).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.stderr, b.stderr);
    }
}
