//! The verification suite: one [`ClaimReport`] per checked claim.

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus;
use crate::discrepancy::{self, gt_distribution, GtMode, GT_CONSTANT};
use crate::error::Result;
use crate::extreal::ExtReal;
use crate::info::{self, Dist, PairDist};
use crate::par;
use crate::protocol::{self, PublicCoinProtocol};
use crate::rng;
use crate::sampling::{self, DEFAULT_Z};
use crate::simulation::{self, Compression, SimulationParams};
use crate::stats;
use crate::table::{self, FuncTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Sizes as stated in the acceptance criteria.
    Full,
    /// Reduced corpora and trial counts for smoke runs.
    Quick,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub scale: Scale,
    /// Leading constant of the GT discrepancy bound.
    pub gt_constant: f64,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> VerifyConfig {
        VerifyConfig {
            seed,
            scale: Scale::Full,
            gt_constant: GT_CONSTANT,
        }
    }

    pub fn quick(seed: u64) -> VerifyConfig {
        VerifyConfig {
            scale: Scale::Quick,
            ..VerifyConfig::new(seed)
        }
    }

    fn pick<T>(&self, full: T, quick: T) -> T {
        match self.scale {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }

    fn seed_for(&self, id: &str) -> u64 {
        rng::derive_seed(self.seed, id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimReport {
    pub id: String,
    pub criterion: u32,
    pub title: String,
    pub measured: Value,
    pub bounds: Value,
    pub pass: bool,
    /// Wall time in seconds; omitted from reports unless requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

type Check = fn(&VerifyConfig) -> Result<(Value, Value, bool)>;

/// `(id, criterion, title, check)` for every claim, in criterion order.
pub const CLAIMS: &[(&str, u32, &str, Check)] = &[
    ("info.cost-identity", 1, "mutual-information and divergence forms of the information cost agree", cost_identity),
    ("info.cost-le-comm", 2, "information cost is at most communication cost", cost_le_comm),
    ("info.divergence-tail", 3, "divergence tail mass stays below eps", divergence_tail),
    ("sampling.paper-bounds", 4, "closed-form success and distance bounds with exact constants", paper_bounds),
    ("sampling.monte-carlo", 5, "simulated sampler matches the closed form", monte_carlo),
    ("sampling.hash-disagreement", 6, "hashed sampler disagreement within the union bound", hash_disagreement),
    ("disc.gt-bound", 7, "GT discrepancy under its hard distribution is below constant/sqrt(n)", gt_bound),
    ("sim.advantage", 8, "simulation keeps a positive advantage", advantage),
    ("sim.event-z", 9, "pairs with both divergences below 20 I carry mass at least 19/20", event_z),
    ("disc.engine-oracle", 10, "column-rule search equals all-rectangle enumeration", engine_oracle),
    ("disc.cc-lower-bound", 11, "communication lower bound from discrepancy", cc_bound),
];

pub fn claim_ids() -> Vec<&'static str> {
    CLAIMS.iter().map(|c| c.0).collect()
}

/// Runs one claim. Errors are recorded in the report as a failure.
pub fn run_claim(id: &str, config: &VerifyConfig) -> Option<ClaimReport> {
    let &(id, criterion, title, check) = CLAIMS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (measured, bounds, pass) = match check(config) {
        Ok(v) => v,
        Err(e) => (json!({ "error": e.to_string() }), Value::Null, false),
    };
    Some(ClaimReport {
        id: id.to_string(),
        criterion,
        title: title.to_string(),
        measured,
        bounds,
        pass,
        runtime_s: Some(start.elapsed().as_secs_f64()),
    })
}

/// Every claim in criterion order.
pub fn verify_all(config: &VerifyConfig) -> Vec<ClaimReport> {
    CLAIMS
        .iter()
        .map(|c| run_claim(c.0, config).expect("listed claim"))
        .collect()
}

fn fuzz_corpus(config: &VerifyConfig) -> Vec<corpus::FuzzCase> {
    let seed = rng::derive_seed(config.seed, "fuzz-corpus");
    par::map_range(config.pick(1000, 100), |i| corpus::fuzz_case(seed, i as u64))
}

fn cost_identity(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let cases = fuzz_corpus(config);
    let gaps = par::map_slice(&cases, |c| -> Result<f64> {
        let ic = protocol::information_cost(&c.protocol, &c.mu)?;
        Ok((ic.via_mi - ic.via_divergence).abs())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let tol = 1e-7;
    Ok((
        json!({ "cases": cases.len(), "max_abs_gap": worst }),
        json!({ "max_abs_gap": tol }),
        worst <= tol,
    ))
}

fn cost_le_comm(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let cases = fuzz_corpus(config);
    let excess = par::map_slice(&cases, |c| -> Result<(f64, f64)> {
        let ic = protocol::information_cost(&c.protocol, &c.mu)?.value();
        let cc = protocol::communication_cost(&c.protocol) as f64;
        Ok((ic - cc, ic))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let worst = excess.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let largest_ic = excess.iter().map(|e| e.1).fold(0.0, f64::max);
    let tol = 1e-9;
    Ok((
        json!({ "cases": cases.len(), "max_ic_minus_cc": worst, "largest_ic": largest_ic }),
        json!({ "max_ic_minus_cc": tol }),
        worst <= tol,
    ))
}

fn divergence_tail(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let seed = config.seed_for("info.divergence-tail");
    let epsilons = [0.05, 0.1, 0.5];
    let n = config.pick(1000, 100);
    let per_pair = par::map_range(n, |i| -> Result<Vec<f64>> {
        let (mu, nu) = corpus::random_divergence_pair(seed, i as u64);
        let d = info::kl_divergence(&mu, &nu)?.to_f64();
        epsilons
            .iter()
            .map(|&eps| Ok(info::divergence_tail_mass(&mu, &nu, d, eps)? / eps))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut worst = [0.0f64; 3];
    for ratios in &per_pair {
        for (w, r) in worst.iter_mut().zip(ratios) {
            *w = w.max(*r);
        }
    }
    let pass = worst.iter().all(|&w| w < 1.0);
    Ok((
        json!({
            "pairs": n,
            "epsilons": epsilons,
            "max_tail_over_eps": worst,
        }),
        json!({ "max_tail_over_eps": "< 1" }),
        pass,
    ))
}

fn paper_bounds(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let seed = config.seed_for("sampling.paper-bounds");
    let levels = [0.5, 1.0, 2.0, 20.0];
    let n = config.pick(100, 20);
    let rows = par::map_range(n, |k| -> Result<(f64, f64, f64, bool, bool, bool, bool)> {
        let i = levels[k % levels.len()];
        let inst = corpus::random_paper_instance(seed, k as u64, 64, i);
        let r = sampling::pi1_exact(&inst)?;
        let check = sampling::check_pi1_bounds(&inst, &r);
        let finite = r.p_success.is_finite() && !r.p_success.is_zero() && r.p_nonempty.is_finite();
        let ratio = (r.p_success / check.upper).to_f64();
        Ok((
            i,
            ratio,
            check.tv_to_mu.unwrap_or(f64::INFINITY),
            check.success_in_range,
            check.tv_ok,
            check.per_element_ok,
            finite,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let min_ratio = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_tv = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let in_range = rows.iter().filter(|r| r.3).count();
    let tv_ok = rows.iter().filter(|r| r.4).count();
    let per_element = rows.iter().filter(|r| r.5).count();
    let finite = rows.iter().filter(|r| r.6).count();
    let smallest_log2 = rows
        .iter()
        .map(|r| -50.0 * (r.0 + 1.0) + r.1.log2())
        .fold(f64::INFINITY, f64::min);
    let pass = [in_range, tv_ok, per_element, finite].iter().all(|&c| c == n);
    Ok((
        json!({
            "instances": n,
            "levels": levels,
            "min_success_over_upper": min_ratio,
            "max_success_over_upper": max_ratio,
            "max_tv_to_mu": max_tv,
            "success_in_range": in_range,
            "tv_within_bound": tv_ok,
            "per_element_bound": per_element,
            "finite_nonzero": finite,
            "smallest_success_log2": smallest_log2,
        }),
        json!({
            "success_over_upper": [0.9, 1.0],
            "tv_to_mu": 2.0 / 9.0,
        }),
        pass,
    ))
}

fn monte_carlo(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let trials = config.pick(1_000_000, 20_000);
    let significance = 0.001;
    let mut rows = Vec::new();
    let mut pass = true;
    for (k, inst) in corpus::scaled_fixed_instances().iter().enumerate() {
        let exact = sampling::pi1_exact(inst)?;
        let seed = rng::stream_seed(config.seed_for("sampling.monte-carlo"), k as u64);
        let stats = sampling::estimate_outcome_stats(inst.universe_size(), trials, seed, |shared| {
            sampling::pi1_simulate(inst, shared)
        })?;
        let p = exact.p_success.to_f64();
        let rate_ok = stats.success.within_sigmas(p, DEFAULT_Z);
        let chi = match &exact.mu1 {
            Some(mu1) if stats.success.successes > 0 => Some(stats::chi_square_test(&stats.output_counts, mu1.masses())?),
            _ => None,
        };
        let chi_ok = chi.as_ref().is_none_or(|c| c.passes(significance));
        pass &= rate_ok && chi_ok;
        rows.push(json!({
            "universe": inst.universe_size(),
            "exact_success": p,
            "empirical_success": stats.success.rate,
            "std_error": stats.success.std_error,
            "chi_square": chi.as_ref().map(|c| c.statistic),
            "dof": chi.as_ref().map(|c| c.dof),
            "p_value": chi.as_ref().map(|c| c.p_value),
            "pass": rate_ok && chi_ok,
        }));
    }
    Ok((
        json!({ "trials_per_instance": trials, "instances": rows }),
        json!({ "sigmas": DEFAULT_Z, "chi_square_significance": significance }),
        pass,
    ))
}

fn hash_disagreement(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let trials = config.pick(1_000_000, 20_000);
    let inst = corpus::two_element_instance(2.0, 40);
    let mut rows = Vec::new();
    let mut pass = true;
    for d in [4u32, 8, 16] {
        let seed = rng::stream_seed(config.seed_for("sampling.hash-disagreement"), u64::from(d));
        let stats = sampling::estimate_outcome_stats(inst.universe_size(), trials, seed, |shared| {
            sampling::pi2_simulate(&inst, d, shared)
        })?;
        let bound = sampling::hash_disagreement_bound(&inst, d).to_f64();
        let capped = bound.min(1.0);
        let sigma = (capped * (1.0 - capped) / trials as f64)
            .sqrt()
            .max(stats.disagreement.std_error);
        let ok = stats.disagreement.rate <= bound + DEFAULT_Z * sigma;
        pass &= ok;
        rows.push(json!({
            "d": d,
            "disagreement_rate": stats.disagreement.rate,
            "success_rate": stats.success.rate,
            "union_bound": bound,
            "sigma": sigma,
            "bits_sent": stats.max_bits_sent,
            "pass": ok,
        }));
    }
    Ok((
        json!({
            "trials_per_d": trials,
            "expected_b_size": sampling::expected_b_size(&inst).to_f64(),
            "runs": rows,
        }),
        json!({ "rule": "rate <= E|B| 2^-d + 4 sigma" }),
        pass,
    ))
}

fn gt_bound(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let seed = config.seed_for("disc.gt-bound");
    let constant = config.gt_constant;
    let mut rows = Vec::new();
    let mut pass = true;
    let mut n1_exact = None;
    for n in 1..=discrepancy::GT_EXACT_MAX_N {
        let r = discrepancy::verify_gt_bounds(n, GtMode::Exact, constant, 0, seed)?;
        if n == 1 {
            n1_exact = Some(r.value);
        }
        pass &= r.pass;
        rows.push(serde_json::to_value(&r)?);
    }
    for n in 1..=discrepancy::GT_SWEEP_MAX_N {
        let r = discrepancy::verify_gt_bounds(n, GtMode::RectangleSweep, constant, 0, seed)?;
        pass &= r.pass;
        rows.push(serde_json::to_value(&r)?);
    }
    let max_greedy_n = config.pick(12, 8);
    for n in 1..=max_greedy_n {
        let restarts = if n <= 8 { 16 } else { 4 };
        let r = discrepancy::verify_gt_bounds(n, GtMode::Greedy, constant, restarts, seed)?;
        pass &= r.pass;
        rows.push(serde_json::to_value(&r)?);
    }
    let n1_ok = n1_exact == Some(0.5);
    pass &= n1_ok;
    Ok((
        json!({ "n1_exact": n1_exact, "checks": rows }),
        json!({ "constant": constant, "n1_exact": 0.5 }),
        pass,
    ))
}

fn identity_function(nx: usize, ny: usize) -> Result<FuncTable> {
    FuncTable::from_fn(nx, ny, |x, _| x == 1)
}

/// The small protocols used for the advantage claim.
pub fn advantage_protocols() -> Result<Vec<(&'static str, PublicCoinProtocol, PairDist, FuncTable)>> {
    let and1 = FuncTable::from_fn(2, 2, |x, y| x == 1 && y == 1)?;
    let ip1 = table::ip_function(1)?;
    Ok(vec![
        (
            "send_x/uniform",
            protocol::send_x(2, 2)?.into(),
            PairDist::uniform(2, 2)?,
            identity_function(2, 2)?,
        ),
        (
            "noisy_send_x(0.05)/uniform",
            protocol::noisy_send_x(0.05, 2)?.into(),
            PairDist::uniform(2, 2)?,
            identity_function(2, 2)?,
        ),
        (
            "bisection_gt(2)/gt-mu",
            protocol::bisection_gt(2)?.into(),
            gt_distribution(2)?,
            table::gt_function(2)?,
        ),
        (
            "full_reveal(and)/uniform",
            protocol::full_reveal(&and1)?.into(),
            PairDist::uniform(2, 2)?,
            and1,
        ),
        (
            "full_reveal(ip1)/skewed",
            protocol::full_reveal(&ip1)?.into(),
            PairDist::new(2, 2, Dist::new(vec![0.4, 0.3, 0.2, 0.1])?)?,
            ip1,
        ),
    ])
}

fn advantage(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let mut pass = true;
    let mut exact_rows = Vec::new();
    let cases = advantage_protocols()?;
    for (name, p, mu, f) in &cases {
        let tree = p.single_tree().expect("deterministic builtin");
        let i_mu = protocol::information_cost(p, mu)?.via_divergence;
        let params = SimulationParams::paper(i_mu, false);
        let r = simulation::simulate_advantage_exact(tree, mu, f, &params)?;
        let ok = r.error_rate <= 0.1 && i_mu > 0.0 && r.bound_holds == Some(true);
        pass &= ok;
        exact_rows.push(json!({
            "protocol": name,
            "i_mu": i_mu,
            "error_rate": r.error_rate,
            "advantage_log2": r.advantage_log2,
            "bound_log2": r.bound_rhs_log2,
            "advantage": r.advantage.magnitude.to_exact_string(),
            "bound": r.bound_rhs.to_exact_string(),
            "pass": ok,
        }));
    }
    let trials = config.pick(1_000_000, 20_000);
    let mut scaled_rows = Vec::new();
    for (k, (name, p, mu, f)) in cases.iter().enumerate() {
        if k != 0 && k != 2 {
            continue;
        }
        let tree = p.single_tree().expect("deterministic builtin");
        let i_mu = protocol::information_cost(p, mu)?.via_divergence;
        let params = SimulationParams::scaled(4.0, None, 20.0 * i_mu, Compression::None);
        let seed = rng::stream_seed(config.seed_for("sim.advantage"), k as u64);
        let r = simulation::run_pi_prime(tree, mu, f, &params, trials, seed)?;
        let emp = r.empirical.as_ref().expect("empirical part").empirical_ew;
        let positive = emp.rate - DEFAULT_Z * emp.std_error > 0.5;
        let consistent = emp.within_sigmas(r.exact_ew, DEFAULT_Z);
        pass &= positive && consistent;
        scaled_rows.push(json!({
            "protocol": name,
            "exact_ew": r.exact_ew,
            "empirical_ew": emp.rate,
            "std_error": emp.std_error,
            "ci": [emp.ci_low, emp.ci_high],
            "positive": positive,
            "consistent": consistent,
        }));
    }
    Ok((
        json!({ "exact_constants": exact_rows, "scaled": { "c": 4.0, "trials": trials, "runs": scaled_rows } }),
        json!({
            "exact_rule": "advantage >= (1/12) 2^(-50 (20 I + 1))",
            "scaled_rule": "empirical advantage > 4 sigma and within 4 sigma of exact",
        }),
        pass,
    ))
}

fn event_z(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let cases = fuzz_corpus(config);
    let masses = par::map_slice(&cases, |c| -> Result<f64> {
        let i = protocol::information_cost(&c.protocol, &c.mu)?.via_divergence;
        simulation::markov_event_z_mass(&c.protocol, &c.mu, i)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let worst = masses.iter().copied().fold(1.0, f64::min);
    Ok((
        json!({ "cases": cases.len(), "min_z_mass": worst }),
        json!({ "min_z_mass": 0.95 }),
        worst >= 0.95 - info::TOLERANCE,
    ))
}

/// Every boolean function on `nx x ny`, or `limit` random ones if there are more.
fn functions(nx: usize, ny: usize, limit: usize, seed: u64) -> Vec<FuncTable> {
    let cells = nx * ny;
    let all = 1u64 << cells;
    let bits: Vec<u64> = if all as usize <= limit {
        (0..all).collect()
    } else {
        let mut g = rng::stream(seed, "oracle-functions", (nx * 8 + ny) as u64);
        (0..limit)
            .map(|_| rand::Rng::gen_range(&mut g, 0..all))
            .collect()
    };
    bits.into_iter()
        .map(|b| FuncTable::from_fn(nx, ny, |x, y| b >> (x * ny + y) & 1 == 1).expect("small table"))
        .collect()
}

fn engine_oracle(config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let seed = config.seed_for("disc.engine-oracle");
    let mus = config.pick(200, 10);
    let limit = config.pick(usize::MAX, 64);
    let mut compared = 0u64;
    let mut worst = 0.0f64;
    for nx in 1..=4 {
        for ny in 1..=4 {
            let fs = functions(nx, ny, limit, seed);
            let results = par::map_range(mus, |m| -> Result<f64> {
                let mut g = rng::stream(seed, "oracle-mu", ((nx * 8 + ny) * 1000 + m) as u64);
                let shape = corpus::MU_SHAPES[m % corpus::MU_SHAPES.len()];
                let mu = corpus::random_pair_dist(&mut g, nx, ny, shape);
                let mut gap = 0.0f64;
                for f in &fs {
                    let a = discrepancy::discrepancy_exact(f, &mu)?.value;
                    let b = discrepancy::discrepancy_naive(f, &mu)?.value;
                    gap = gap.max((a - b).abs());
                }
                Ok(gap)
            });
            for r in results {
                worst = worst.max(r?);
            }
            compared += (fs.len() * mus) as u64;
        }
    }
    let tol = 1e-12;
    Ok((
        json!({ "comparisons": compared, "distributions_per_shape": mus, "max_abs_gap": worst }),
        json!({ "max_abs_gap": tol }),
        worst <= tol,
    ))
}

fn cc_bound(_config: &VerifyConfig) -> Result<(Value, Value, bool)> {
    let formula = discrepancy::cc_lower_bound(0.25, ExtReal::exp2(-10.0).to_f64())?;
    let f = table::ip_function(2)?;
    let mu = PairDist::uniform(4, 4)?;
    let exact = discrepancy::discrepancy_exact(&f, &mu)?;
    let naive = discrepancy::discrepancy_naive(&f, &mu)?;
    let bound = discrepancy::cc_lower_bound(0.25, exact.value)?;
    let pass = formula == 9.0 && (exact.value - naive.value).abs() <= 1e-12 && bound.is_finite();
    Ok((
        json!({
            "formula_eps_quarter_disc_2^-10": formula,
            "ip2_uniform_disc": exact.value,
            "ip2_witness_s": exact.witness.s,
            "ip2_witness_t": exact.witness.t,
            "ip2_lower_bound_eps_quarter": bound,
        }),
        json!({ "formula": 9.0 }),
        pass,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_unique_and_ordered() {
        let ids = claim_ids();
        assert_eq!(ids.len(), 11);
        let mut sorted = ids.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 11);
        assert!(CLAIMS.iter().enumerate().all(|(i, c)| c.1 == i as u32 + 1));
        assert!(run_claim("no.such-claim", &VerifyConfig::quick(0)).is_none());
    }

    #[test]
    fn cheap_claims_pass_quickly() {
        let config = VerifyConfig::quick(5);
        for id in ["info.divergence-tail", "disc.cc-lower-bound", "sampling.paper-bounds"] {
            let r = run_claim(id, &config).unwrap();
            assert!(r.pass, "{id}: {}", r.measured);
        }
    }

    #[test]
    fn quick_reports_are_deterministic() {
        let config = VerifyConfig::quick(9);
        let mut a = run_claim("info.cost-identity", &config).unwrap();
        let mut b = run_claim("info.cost-identity", &config).unwrap();
        a.runtime_s = None;
        b.runtime_s = None;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
