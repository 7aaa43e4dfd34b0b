use proptest::prelude::*;

use infodisc::corpus::{self, MuShape, MU_SHAPES};
use infodisc::discrepancy::{self, discrepancy_exact, discrepancy_greedy, discrepancy_naive};
use infodisc::info::{self, Axis, Dist, JointDist, PairDist};
use infodisc::protocol::{self, information_cost, leaf_factorization, PublicCoinProtocol};
use infodisc::rng;
use infodisc::sampling::{self, pi1_exact, SamplingInstance};
use infodisc::table::{self, FuncTable};
use infodisc::ExtReal;

fn dist(n: usize) -> impl Strategy<Value = Dist> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("needs mass", |w| Dist::from_weights(&w).ok())
}

fn same_size_dists(k: usize) -> impl Strategy<Value = Vec<Dist>> {
    (1usize..12).prop_flat_map(move |n| prop::collection::vec(dist(n), k))
}

fn shape() -> impl Strategy<Value = MuShape> {
    prop::sample::select(MU_SHAPES.to_vec())
}

fn small_case() -> impl Strategy<Value = (FuncTable, PairDist)> {
    (1usize..=4, 1usize..=4, any::<u64>(), any::<u64>(), shape()).prop_map(|(nx, ny, bits, seed, s)| {
        let f = FuncTable::from_fn(nx, ny, |x, y| bits >> (x * ny + y) & 1 == 1).unwrap();
        let mu = corpus::random_pair_dist(&mut rng::stream(seed, "prop-mu", 0), nx, ny, s);
        (f, mu)
    })
}

fn transpose_fn(f: &FuncTable) -> FuncTable {
    FuncTable::from_fn(f.ny(), f.nx(), |y, x| f.get(x, y) == 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn statistical_distance_is_a_metric(ds in same_size_dists(3)) {
        let d = |a: &Dist, b: &Dist| info::statistical_distance(a, b).unwrap();
        let (a, b, c) = (&ds[0], &ds[1], &ds[2]);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d(a, b)));
        prop_assert!((d(a, b) - d(b, a)).abs() < 1e-15);
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
        prop_assert_eq!(d(a, a), 0.0);
    }

    #[test]
    fn divergence_is_nonnegative_and_zero_only_on_equality(ds in same_size_dists(2)) {
        let (a, b) = (&ds[0], &ds[1]);
        let div = info::kl_divergence(a, b).unwrap();
        prop_assert!(div >= ExtReal::ZERO);
        prop_assert_eq!(info::kl_divergence(a, a).unwrap(), ExtReal::ZERO);
        if info::statistical_distance(a, b).unwrap() > 1e-6 {
            prop_assert!(div > ExtReal::ZERO);
        }
    }

    #[test]
    fn tail_mass_is_below_eps(seed in any::<u64>(), index in 0u64..1000) {
        let (mu, nu) = corpus::random_divergence_pair(seed, index);
        let d = info::kl_divergence(&mu, &nu).unwrap().to_f64();
        for eps in [0.05, 0.1, 0.5] {
            prop_assert!(info::divergence_tail_mass(&mu, &nu, d, eps).unwrap() < eps);
        }
    }

    #[test]
    fn conditional_mi_is_an_expected_divergence(
        sizes in (1usize..4, 1usize..4, 1usize..4),
        weights in prop::collection::vec(0.0f64..1.0, 27),
    ) {
        let (na, nb, nc) = sizes;
        let cells = na * nb * nc;
        let w = &weights[..cells];
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let total: f64 = w.iter().sum();
        let axes = vec![
            Axis { name: "a".into(), size: na },
            Axis { name: "b".into(), size: nb },
            Axis { name: "c".into(), size: nc },
        ];
        let j = JointDist::new(axes, w.iter().map(|v| v / total).collect()).unwrap();
        let (lhs, rhs) = info::mi_as_expected_divergence(&j, "a", "b", "c").unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn information_cost_forms_agree_and_stay_below_communication(seed in any::<u64>(), index in 0u64..1_000_000) {
        let case = corpus::fuzz_case(seed, index);
        let ic = information_cost(&case.protocol, &case.mu).unwrap();
        prop_assert!((ic.via_mi - ic.via_divergence).abs() < 1e-7);
        prop_assert!(ic.value() <= protocol::communication_cost(&case.protocol) as f64 + 1e-9);
    }

    #[test]
    fn leaf_factors_reproduce_the_transcript(seed in any::<u64>()) {
        let mut g = rng::stream(seed, "prop-tree", 0);
        let nx = 1 + (seed % 5) as usize;
        let ny = 1 + (seed / 5 % 5) as usize;
        let t = corpus::random_tree(&mut g, nx, ny, 4);
        let mu = corpus::random_pair_dist(&mut g, nx, ny, MuShape::Dense);
        for (x, y, _) in mu.support() {
            let lf = leaf_factorization(&t, &mu, x, y).unwrap();
            let pi = protocol::transcript_distribution(&t, x, y).unwrap();
            let total: f64 = lf.p_x.iter().zip(&lf.p_y).map(|(a, b)| a * b).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for l in 0..t.leaf_count() {
                prop_assert!((lf.p_x[l] * lf.p_y[l] - pi.mass(l)).abs() < 1e-9);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&lf.q_x[l]));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&lf.q_y[l]));
            }
        }
    }

    #[test]
    fn point_masses_reveal_nothing(seed in any::<u64>()) {
        let mut g = rng::stream(seed, "prop-point", 0);
        let p: PublicCoinProtocol = corpus::random_public_coin(&mut g, 3, 4);
        let mu = corpus::random_pair_dist(&mut g, 3, 4, MuShape::Point);
        prop_assert!(information_cost(&p, &mu).unwrap().value().abs() < 1e-12);
    }

    #[test]
    fn discrepancy_is_transpose_invariant_and_bounded((f, mu) in small_case()) {
        let v = discrepancy_exact(&f, &mu).unwrap().value;
        let vt = discrepancy_exact(&transpose_fn(&f), &mu.transpose()).unwrap().value;
        prop_assert!((v - vt).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        prop_assert!((v - discrepancy_naive(&f, &mu).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn greedy_matches_exact_on_small_tables((f, mu) in small_case(), seed in any::<u64>()) {
        let exact = discrepancy_exact(&f, &mu).unwrap().value;
        let greedy = discrepancy_greedy(&f, &mu, 16, seed).unwrap().value;
        prop_assert!(greedy <= exact + 1e-12);
        prop_assert!((greedy - exact).abs() < 1e-12, "greedy {} exact {}", greedy, exact);
    }

    #[test]
    fn sampler_success_means_agreement(k in 0usize..10, trial in any::<u64>()) {
        let inst = &corpus::scaled_fixed_instances()[k];
        let mut shared = sampling::SharedRandomness::for_trial(7, trial);
        let out = sampling::pi1_simulate(inst, &mut shared).unwrap();
        if out.succeeded() {
            prop_assert_eq!(out.x_a, out.x_b);
        }
    }

    #[test]
    fn output_is_capped_by_mu_over_c(seed in any::<u64>(), index in 0u64..1000, level in 0usize..4) {
        let i = [0.5, 1.0, 2.0, 20.0][level];
        let inst = corpus::random_paper_instance(seed, index, 64, i);
        let r = pi1_exact(&inst).unwrap();
        prop_assert!(sampling::per_element_bound_holds(&inst, &r));
    }

    #[test]
    fn output_law_does_not_depend_on_tape_length(k in 0usize..10, t1 in 1u64..50, t2 in 50u64..5000) {
        let base = &corpus::scaled_fixed_instances()[k];
        let at = |t| {
            let inst = SamplingInstance::scaled(
                base.p_a().to_vec(), base.q_a().to_vec(), base.p_b().to_vec(), base.q_b().to_vec(),
                base.i(), base.c().to_f64(), t,
            ).unwrap();
            pi1_exact(&inst).unwrap().mu1
        };
        prop_assert_eq!(at(t1), at(t2));
    }
}

#[test]
fn extreal_reciprocal_is_exact_far_below_f64() {
    let tiny = ExtReal::exp2(-50.0 * 21.0);
    assert_eq!(tiny * tiny.recip(), ExtReal::ONE);
}

#[test]
fn constant_functions_have_full_discrepancy() {
    for (nx, ny) in [(1, 1), (2, 3), (4, 4)] {
        let mu = PairDist::uniform(nx, ny).unwrap();
        for value in [false, true] {
            let f = table::constant_function(nx, ny, value).unwrap();
            assert_eq!(discrepancy_exact(&f, &mu).unwrap().value, 1.0);
        }
    }
}

#[test]
fn inner_product_discrepancy_matches_enumeration() {
    for n in 1..=3u32 {
        let f = table::ip_function(n).unwrap();
        let mu = PairDist::uniform(1 << n, 1 << n).unwrap();
        let exact = discrepancy_exact(&f, &mu).unwrap().value;
        assert!((exact - discrepancy_naive(&f, &mu).unwrap().value).abs() < 1e-12);
        assert!(exact <= 2f64.powf(-f64::from(n) / 2.0) + 1e-12, "n={n}: {exact}");
    }
}

#[test]
fn greedy_matches_exact_on_gt4() {
    let f = table::gt_function(4).unwrap();
    let mu = discrepancy::gt_distribution(4).unwrap();
    let exact = discrepancy_exact(&f, &mu).unwrap().value;
    let greedy = discrepancy_greedy(&f, &mu, 16, 1).unwrap().value;
    assert!((exact - greedy).abs() < 1e-12, "greedy {greedy} exact {exact}");
}
