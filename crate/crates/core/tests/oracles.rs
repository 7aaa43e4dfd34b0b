//! Independent closed forms and brute-force references.

use infodisc::corpus;
use infodisc::discrepancy::{self, gt_distribution, Rectangle};
use infodisc::info::PairDist;
use infodisc::protocol::{self, information_cost};
use infodisc::sampling::{self, pi1_exact, SamplingInstance, SharedRandomness};
use infodisc::simulation::{self, Compression, SimulationParams};
use infodisc::table::{self, FuncTable};

fn h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Success probability of the two-bit sampler, summed over the position `k`
/// of Alice's first point.
fn two_bit_success(inst: &SamplingInstance, d: u32) -> f64 {
    let u = inst.universe_size() as f64;
    let c = inst.c().to_f64();
    let t = inst.t().to_f64() as u64;
    let q_a = 1.0 / (u * c);
    let q_b = 1.0 / (u * c);
    let q_ab: f64 = (0..inst.universe_size())
        .map(|x| {
            let alpha = inst.p_a()[x].min(c * inst.q_b()[x]) / c;
            let beta = (c * inst.q_a()[x]).min(inst.p_b()[x]) / c;
            alpha * beta / u
        })
        .sum();
    let r = (q_b - q_ab) / (1.0 - q_a);
    let m = 0.5f64.powi(d as i32);
    let rho = q_ab / q_a;
    (1..=t)
        .map(|k| {
            let first = (1.0 - q_a).powi(k as i32 - 1) * q_a;
            let miss = (1.0 - m * r).powi(k as i32 - 1) * (1.0 - rho) * (1.0 - m * q_b).powi((t - k) as i32);
            first * m * (1.0 - miss)
        })
        .sum()
}

#[test]
fn two_bit_sampler_matches_its_closed_form() {
    let instances = [corpus::two_element_instance(2.0, 40), corpus::scaled_fixed_instances()[4].clone()];
    for (k, inst) in instances.iter().enumerate() {
        let pi1 = pi1_exact(inst).unwrap().p_success.to_f64();
        for d in [1u32, 2, 4] {
            let want = two_bit_success(inst, d);
            assert!(want >= pi1 * 0.5f64.powi(d as i32) - 1e-12);
            let stats = sampling::estimate_outcome_stats(inst.universe_size(), 200_000, 11 + k as u64, |s| {
                sampling::pi2_two_bit_simulate(inst, d, s)
            })
            .unwrap();
            assert!(
                stats.success.within_sigmas(want, 4.0),
                "instance {k} d={d}: {} vs {want}",
                stats.success.rate
            );
            assert_eq!(stats.max_bits_sent, 2);
        }
    }
}

fn outcome_law(stats: &sampling::OutcomeStats) -> Vec<f64> {
    let n = stats.trials as f64;
    let mut law: Vec<f64> = stats.output_counts.iter().map(|&c| c as f64 / n).collect();
    law.push((stats.trials - stats.success.successes) as f64 / n);
    law
}

#[test]
fn hashed_sampler_converges_to_the_literal_one() {
    for inst in [corpus::two_element_instance(2.0, 40), corpus::scaled_fixed_instances()[7].clone()] {
        let trials = 200_000;
        let base = sampling::estimate_outcome_stats(inst.universe_size(), trials, 5, |s| sampling::pi1_simulate(&inst, s))
            .unwrap();
        let base_law = outcome_law(&base);
        let mut last = f64::INFINITY;
        for d in [2u32, 4, 8, 16] {
            let s = sampling::estimate_outcome_stats(inst.universe_size(), trials, 5, |sh| {
                sampling::pi2_simulate(&inst, d, sh)
            })
            .unwrap();
            let tv: f64 = 0.5 * outcome_law(&s).iter().zip(&base_law).map(|(a, b)| (a - b).abs()).sum::<f64>();
            assert!(tv <= last, "d={d}: {tv} after {last}");
            last = tv;
        }
        assert!(last < 1e-3);
    }
}

#[test]
fn hashed_disagreement_is_below_the_union_bound_per_trial() {
    let inst = corpus::two_element_instance(2.0, 40);
    for d in [0u32, 4, 8] {
        let bad = (0..50_000u64)
            .filter(|&trial| {
                let mut s = SharedRandomness::for_trial(9, trial);
                sampling::pi2_simulate(&inst, d, &mut s).unwrap().disagrees()
            })
            .count() as f64
            / 50_000.0;
        let bound = sampling::hash_disagreement_bound(&inst, d).to_f64();
        assert!(bad <= bound + 4.0 * (bound.min(1.0) * (1.0 - bound.min(1.0)) / 50_000.0).sqrt() + 1e-3, "d={d}");
    }
}

/// Every rectangle, evaluated cell by cell.
fn brute_force_disc(f: &FuncTable, mu: &PairDist) -> f64 {
    let mut best = 0.0f64;
    for s in 1u32..1 << f.nx() {
        for t in 1u32..1 << f.ny() {
            let mut v = 0.0;
            for x in 0..f.nx() {
                for y in 0..f.ny() {
                    if s >> x & 1 == 1 && t >> y & 1 == 1 {
                        let sign = if f.get(x, y) == 0 { 1.0 } else { -1.0 };
                        v += sign * mu.mass(x, y);
                    }
                }
            }
            best = best.max(f64::abs(v));
        }
    }
    best
}

#[test]
fn exact_discrepancy_matches_brute_force() {
    for k in 0..300u64 {
        let mut g = infodisc::rng::stream(3, "oracle-brute", k);
        let nx = 1 + (k % 5) as usize;
        let ny = 1 + (k / 5 % 5) as usize;
        let f = FuncTable::from_fn(nx, ny, |x, y| (x * 7 + y * 3 + k as usize).is_multiple_of(3)).unwrap();
        let mu = corpus::random_pair_dist(&mut g, nx, ny, corpus::MU_SHAPES[k as usize % 5]);
        let r = discrepancy::discrepancy_exact(&f, &mu).unwrap();
        let want = brute_force_disc(&f, &mu);
        assert!((r.value - want).abs() < 1e-12, "case {k}: {} vs {want}", r.value);
        let again = discrepancy::rectangle_discrepancy(&f, &mu, &r.witness).unwrap();
        assert_eq!(again, r.value);
    }
}

#[test]
fn gt_examples() {
    let r = discrepancy::discrepancy_exact(&table::gt_function(1).unwrap(), &gt_distribution(1).unwrap()).unwrap();
    assert_eq!(r.value, 0.5);
    assert_eq!(r.witness, Rectangle::new(vec![1], vec![0]).unwrap());
}

/// The GT hard distribution built from its sampling description: uniform
/// index `k`, common prefix before it, complementary bits at it, independent
/// suffixes after it.
fn gt_mu_by_sampling(n: u32) -> Vec<f64> {
    let size = 1usize << n;
    let mut mass = vec![0.0; size * size];
    for k in 0..n {
        let prefix_bits = k;
        let suffix_bits = n - k - 1;
        for prefix in 0..1usize << prefix_bits {
            for bit in 0..2usize {
                for sx in 0..1usize << suffix_bits {
                    for sy in 0..1usize << suffix_bits {
                        let x = (prefix << (suffix_bits + 1)) | (bit << suffix_bits) | sx;
                        let y = (prefix << (suffix_bits + 1)) | ((1 - bit) << suffix_bits) | sy;
                        let p = 1.0 / f64::from(n)
                            * 0.5f64.powi(prefix_bits as i32)
                            * 0.5
                            * 0.25f64.powi(suffix_bits as i32);
                        mass[x * size + y] += p;
                    }
                }
            }
        }
    }
    mass
}

#[test]
fn gt_distribution_matches_its_sampling_description() {
    for n in 1..=5 {
        let mu = gt_distribution(n).unwrap();
        let want = gt_mu_by_sampling(n);
        let size = 1usize << n;
        for x in 0..size {
            for y in 0..size {
                assert!((mu.mass(x, y) - want[x * size + y]).abs() < 1e-15, "n={n} x={x} y={y}");
            }
        }
    }
}

#[test]
fn information_cost_closed_forms() {
    let uniform = PairDist::uniform(2, 2).unwrap();
    for flip in [0.0, 0.05, 0.1, 0.3, 0.5] {
        let p = protocol::noisy_send_x(flip, 2).unwrap().into();
        let ic = information_cost(&p, &uniform).unwrap();
        assert!((ic.via_mi - (1.0 - h(flip))).abs() < 1e-12, "flip {flip}");
        assert!((ic.via_divergence - ic.via_mi).abs() < 1e-12);
    }
    // revealing both inputs costs H(X|Y) + H(Y|X)
    let rows = vec![vec![0.4, 0.1], vec![0.1, 0.4]];
    let mu = PairDist::from_table(&rows).unwrap();
    let ic = information_cost(&protocol::send_xy(2, 2).unwrap().into(), &mu).unwrap();
    assert!((ic.value() - 2.0 * h(0.2)).abs() < 1e-12);
}

#[test]
fn advantage_is_the_success_weighted_correctness_excess() {
    for (name, p, mu, f) in infodisc::claims::advantage_protocols().unwrap() {
        let tree = p.single_tree().unwrap();
        let params = SimulationParams::scaled(4.0, None, 1.0, Compression::None);
        let r = simulation::simulate_advantage_exact(tree, &mu, &f, &params).unwrap();
        let mut excess = 0.0;
        for (x, y, m) in mu.support() {
            let inst = simulation::build_instance_from_protocol(tree, &mu, x, y, &params).unwrap();
            let pi = protocol::transcript_distribution(tree, x, y).unwrap();
            for (l, want) in inst.mu().iter().enumerate() {
                assert!((want - pi.mass(l)).abs() < 1e-9, "{name}");
            }
            let e = pi1_exact(&inst).unwrap();
            let correct: f64 = match &e.mu1 {
                Some(mu1) => (0..tree.leaf_count())
                    .filter(|&l| tree.leaf_output(l) == f.get(x, y))
                    .map(|l| mu1.mass(l))
                    .sum(),
                None => 0.5,
            };
            excess += m * e.p_success.to_f64() * (correct - 0.5);
        }
        assert!((r.exact_ew - 0.5 - excess).abs() < 1e-12, "{name}");
        assert!(r.exact_ew >= r.chain_lower_bound - 1e-12, "{name}");
    }
}

#[test]
fn empirical_simulation_is_consistent_with_exact() {
    let mu = gt_distribution(2).unwrap();
    let tree = protocol::bisection_gt(2).unwrap();
    let f = table::gt_function(2).unwrap();
    for compress in [Compression::None, Compression::Hash(16)] {
        let params = SimulationParams::scaled(4.0, None, 40.0, compress);
        let r = simulation::run_pi_prime(&tree, &mu, &f, &params, 100_000, 21).unwrap();
        let emp = r.empirical.unwrap().empirical_ew;
        assert!(emp.within_sigmas(r.exact_ew, 4.0), "{compress:?}: {} vs {}", emp.rate, r.exact_ew);
    }
}

#[test]
fn hashing_changes_outcomes_only_on_collisions() {
    // Runs share their tape, so outputs differ only when Bob's hash match
    // differs from the literal sampler's answer.
    let mu = PairDist::uniform(2, 2).unwrap();
    let tree = protocol::send_x(2, 2).unwrap();
    let f = FuncTable::from_fn(2, 2, |x, _| x == 1).unwrap();
    let plain = SimulationParams::scaled(4.0, None, 20.0, Compression::None);
    let ew = |params: &SimulationParams| {
        simulation::run_pi_prime(&tree, &mu, &f, params, 50_000, 4).unwrap().empirical.unwrap()
    };
    let base = ew(&plain);
    for d in [2u32, 6] {
        let hashed = ew(&SimulationParams::scaled(4.0, None, 20.0, Compression::Hash(d)));
        let gap = (hashed.empirical_ew.rate - base.empirical_ew.rate).abs();
        let changed = (hashed.successes as f64 - base.successes as f64).abs() / 50_000.0
            + hashed.disagreements as f64 / 50_000.0;
        assert!(gap <= changed + 4.0 * (changed / 50_000.0).sqrt() + 1e-9, "d={d}: gap {gap}, changed {changed}");
    }
}
