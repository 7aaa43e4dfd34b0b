//! Low-communication simulation of a protocol through correlated sampling.
//!
//! On inputs `(x, y)` both parties view the transcript as a distribution over
//! leaves: the true `pi_xy = p_X p_Y`, A's estimate `pi_x = p_X q_X`, and B's
//! estimate `pi_y = p_Y q_Y`. The simulation samples a leaf with the
//! correlated sampler and outputs its label; on failure it outputs a fair coin.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, ExtSum};
use crate::info::{PairDist, TOLERANCE};
use crate::par;
use crate::protocol::{self, ProtocolTree, PublicCoinProtocol};
use crate::rng;
use crate::sampling::{
    self, pi1_exact, validate_instance, SampleOutcome, SamplingInstance, SharedRandomness, DEFAULT_Z,
};
use crate::stats::Proportion;
use crate::table::FuncTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "d")]
pub enum Compression {
    None,
    Hash(u32),
    TwoBit(u32),
}

impl Compression {
    /// Parses `none`, `hash:D` or `twobit:D`.
    pub fn parse(text: &str) -> Result<Compression> {
        let bad = || Error::Parameter(format!("compression `{text}` is not none, hash:D or twobit:D"));
        if text == "none" {
            return Ok(Compression::None);
        }
        let (kind, d) = text.split_once(':').ok_or_else(bad)?;
        let d: u32 = d.parse().map_err(|_| bad())?;
        match kind {
            "hash" => Ok(Compression::Hash(d)),
            "twobit" => Ok(Compression::TwoBit(d)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    Paper,
    Scaled { c: f64, t: Option<u64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimulationParams {
    pub i_budget: f64,
    pub mode: SimulationMode,
    pub compress: Compression,
}

/// Hash length used with exact constants: `ceil(211 i)`.
pub fn paper_hash_bits(i_budget: f64) -> u32 {
    (211.0 * i_budget).ceil() as u32
}

impl SimulationParams {
    /// Exact constants with `i_budget = 20 i_mu`; hashing uses `ceil(211 i_budget)` bits.
    pub fn paper(i_mu: f64, hashed: bool) -> SimulationParams {
        let i_budget = 20.0 * i_mu;
        SimulationParams {
            i_budget,
            mode: SimulationMode::Paper,
            compress: if hashed {
                Compression::Hash(paper_hash_bits(i_budget).max(1))
            } else {
                Compression::None
            },
        }
    }

    pub fn scaled(c: f64, t: Option<u64>, i_budget: f64, compress: Compression) -> SimulationParams {
        SimulationParams {
            i_budget,
            mode: SimulationMode::Scaled { c, t },
            compress,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_budget >= 0.0 && self.i_budget.is_finite()) {
            return Err(Error::Parameter(format!("i_budget must be >= 0, got {}", self.i_budget)));
        }
        match self.compress {
            Compression::Hash(0) | Compression::TwoBit(0) => {
                Err(Error::Parameter("compression needs d >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Bits exchanged per run over a universe of `leaves` leaves.
    pub fn bits_sent(&self, leaves: usize) -> u32 {
        match self.compress {
            Compression::None => sampling::index_bits(leaves) + 1,
            Compression::Hash(d) => d + 1,
            Compression::TwoBit(_) => 2,
        }
    }
}

/// The sampling instance for inputs `(x, y)`: the universe is the leaves of
/// `t`, with `p_A = p_X`, `q_A = q_X`, `p_B = p_Y`, `q_B = q_Y`.
pub fn build_instance_from_protocol(
    t: &ProtocolTree,
    mu: &PairDist,
    x: usize,
    y: usize,
    params: &SimulationParams,
) -> Result<SamplingInstance> {
    params.validate()?;
    if x >= mu.nx() || y >= mu.ny() {
        return Err(Error::OutOfRange(format!("input ({x}, {y}) outside the distribution")));
    }
    if mu.mass(x, y) <= 0.0 {
        return Err(Error::ZeroMass(format!("mu({x}, {y}) is zero")));
    }
    let lf = protocol::leaf_factorization(t, mu, x, y)?;
    match params.mode {
        SimulationMode::Paper => SamplingInstance::paper(lf.p_x, lf.q_x, lf.p_y, lf.q_y, params.i_budget),
        SimulationMode::Scaled { c, t: points } => {
            let points = points.unwrap_or_else(|| SamplingInstance::default_points(lf.p_x.len(), c));
            SamplingInstance::scaled(lf.p_x, lf.q_x, lf.p_y, lf.q_y, params.i_budget, c, points)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairBreakdown {
    pub x: usize,
    pub y: usize,
    pub mass: f64,
    /// `P(sampler succeeds)` for this pair.
    pub success: ExtReal,
    /// `P(leaf label = f(x, y) | success)`.
    pub correctness: f64,
    /// Error of the original protocol on this pair.
    pub error: f64,
    /// Distance between the sampler's output law and `pi_xy`.
    pub tv_to_transcript: f64,
    pub div_a: ExtReal,
    pub div_b: ExtReal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignedExt {
    pub negative: bool,
    pub magnitude: ExtReal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalReport {
    pub trials: u64,
    pub seed: u64,
    /// Fraction of runs whose output equals `f(x, y)`.
    pub empirical_ew: Proportion,
    pub successes: u64,
    /// Successful runs whose two outputs differ.
    pub disagreements: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdvantageReport {
    /// `P(output = f(x, y))` with the uncompressed sampler.
    pub exact_ew: f64,
    /// `exact_ew - 1/2`, kept exact even far below `f64` range.
    pub advantage: SignedExt,
    pub advantage_log2: f64,
    /// `sum mu(x, y) s(x, y)`.
    pub mean_success: ExtReal,
    /// `1/2 + sum mu s ((1 - err) - tv - 1/2)`: what the coupling argument guarantees.
    pub chain_lower_bound: f64,
    pub error_rate: f64,
    pub i_mu: f64,
    pub z_mass: f64,
    pub bits_sent: u32,
    /// `(1/12) 2^(-50 (i_budget + 1))`.
    pub bound_rhs: ExtReal,
    pub bound_rhs_log2: f64,
    /// Exact constants and protocol error at most 1/10.
    pub bound_applies: bool,
    pub bound_holds: Option<bool>,
    pub pairs: Vec<PairBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalReport>,
}

fn check_function(t: &ProtocolTree, mu: &PairDist, f: &FuncTable) -> Result<()> {
    if f.nx() != t.x_size() || f.ny() != t.y_size() || mu.nx() != t.x_size() || mu.ny() != t.y_size() {
        return Err(Error::Dimension(format!(
            "protocol is {}x{}, distribution {}x{}, function {}x{}",
            t.x_size(),
            t.y_size(),
            mu.nx(),
            mu.ny(),
            f.nx(),
            f.ny()
        )));
    }
    Ok(())
}

/// Exact success-weighted correctness of the uncompressed simulation:
/// `E[W] = 1/2 + sum mu(x, y) s(x, y) (P_mu1[label = f] - 1/2)`.
pub fn simulate_advantage_exact(
    t: &ProtocolTree,
    mu: &PairDist,
    f: &FuncTable,
    params: &SimulationParams,
) -> Result<AdvantageReport> {
    params.validate()?;
    check_function(t, mu, f)?;
    let support: Vec<(usize, usize, f64)> = mu.support().collect();
    let pairs = par::map_slice(&support, |&(x, y, m)| -> Result<PairBreakdown> {
        let inst = build_instance_from_protocol(t, mu, x, y, params)?;
        let report = validate_instance(&inst)?;
        let r = pi1_exact(&inst)?;
        let want = f.get(x, y);
        let pi = report.mu;
        let (correctness, tv) = match &r.mu1 {
            Some(mu1) => {
                let corr = (0..t.leaf_count())
                    .filter(|&l| t.leaf_output(l) == want)
                    .map(|l| mu1.mass(l))
                    .sum();
                let tv = 0.5 * pi.iter().zip(mu1.masses()).map(|(a, b)| (a - b).abs()).sum::<f64>();
                (corr, tv)
            }
            None => (0.5, 0.0),
        };
        let error = (0..t.leaf_count())
            .filter(|&l| t.leaf_output(l) != want)
            .map(|l| pi[l])
            .sum();
        Ok(PairBreakdown {
            x,
            y,
            mass: m,
            success: r.p_success,
            correctness,
            error,
            tv_to_transcript: tv,
            div_a: report.div_a,
            div_b: report.div_b,
        })
    });
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut advantage = ExtSum::default();
    let mut mean_success = ExtReal::ZERO;
    let mut chain = ExtSum::default();
    for p in &pairs {
        let weight = ExtReal::from_f64(p.mass) * p.success;
        let excess = p.correctness - 0.5;
        advantage.add_signed(weight * ExtReal::from_f64(excess.abs()), excess < 0.0);
        let floor = 0.5 - p.error - p.tv_to_transcript;
        chain.add_signed(weight * ExtReal::from_f64(floor.abs()), floor < 0.0);
        mean_success += weight;
    }
    let (negative, magnitude) = advantage.net();
    let signed = if negative { -magnitude.to_f64() } else { magnitude.to_f64() };
    let error_rate: f64 = pairs.iter().map(|p| p.mass * p.error).sum();
    let public: PublicCoinProtocol = t.clone().into();
    let i_mu = protocol::information_cost(&public, mu)?.via_divergence;
    let z_mass = markov_event_z_mass(&public, mu, i_mu)?;
    let bound_rhs = ExtReal::exp2(-50.0 * (params.i_budget + 1.0)) / ExtReal::from_f64(12.0);
    let bound_applies = params.mode == SimulationMode::Paper && error_rate <= 0.1 + TOLERANCE;
    let bound_holds = bound_applies.then(|| advantage.at_least(bound_rhs));
    Ok(AdvantageReport {
        exact_ew: 0.5 + signed,
        advantage: SignedExt { negative, magnitude },
        advantage_log2: magnitude.log2(),
        mean_success,
        chain_lower_bound: 0.5 + chain.to_f64(),
        error_rate,
        i_mu,
        z_mass,
        bits_sent: params.bits_sent(t.leaf_count()),
        bound_rhs,
        bound_rhs_log2: bound_rhs.log2(),
        bound_applies,
        bound_holds,
        pairs,
        empirical: None,
    })
}

/// Precomputed per-pair instances and the input sampler.
struct Runner<'a> {
    t: &'a ProtocolTree,
    f: &'a FuncTable,
    params: SimulationParams,
    support: Vec<(usize, usize)>,
    cumulative: Vec<f64>,
    instances: Vec<SamplingInstance>,
}

impl<'a> Runner<'a> {
    fn new(t: &'a ProtocolTree, mu: &PairDist, f: &'a FuncTable, params: &SimulationParams) -> Result<Runner<'a>> {
        params.validate()?;
        check_function(t, mu, f)?;
        if params.mode == SimulationMode::Paper {
            return Err(Error::PaperModeUnsimulatable);
        }
        let mut support = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (x, y, m) in mu.support() {
            acc += m;
            support.push((x, y));
            cumulative.push(acc);
        }
        let instances = par::map_slice(&support, |&(x, y)| build_instance_from_protocol(t, mu, x, y, params))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Runner {
            t,
            f,
            params: *params,
            support,
            cumulative,
            instances,
        })
    }

    fn draw_pair(&self, seed: u64, trial: u64) -> usize {
        let u: f64 = rng::stream(seed, "inputs", trial).gen::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.support.len() - 1)
    }

    /// One run on pair `pair_index` using the randomness of run `run`.
    fn run(&self, pair_index: usize, seed: u64, run: u64) -> Result<(bool, SampleOutcome)> {
        let inst = &self.instances[pair_index];
        let mut shared = SharedRandomness::for_trial(seed, run);
        let out = match self.params.compress {
            Compression::None => sampling::pi1_simulate(inst, &mut shared)?,
            Compression::Hash(d) => sampling::pi2_simulate(inst, d, &mut shared)?,
            Compression::TwoBit(d) => sampling::pi2_two_bit_simulate(inst, d, &mut shared)?,
        };
        let output = match (out.succeeded(), out.x_b) {
            (true, Some(leaf)) => self.t.leaf_output(leaf),
            _ => rng::stream(seed, "coin", run).gen::<bool>() as u8,
        };
        let (x, y) = self.support[pair_index];
        Ok((output == self.f.get(x, y), out))
    }
}

const TRIAL_CHUNK: u64 = 1 << 13;

/// Exact report plus a Monte Carlo estimate of `E[W]` over `trials` runs.
/// Refuses exact constants, which cannot be simulated.
pub fn run_pi_prime(
    t: &ProtocolTree,
    mu: &PairDist,
    f: &FuncTable,
    params: &SimulationParams,
    trials: u64,
    seed: u64,
) -> Result<AdvantageReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    let runner = Runner::new(t, mu, f, params)?;
    let mut report = simulate_advantage_exact(t, mu, f, params)?;
    let parts = par::map_chunks(trials, TRIAL_CHUNK, |start, end| -> Result<(u64, u64, u64)> {
        let (mut wins, mut ok, mut bad) = (0, 0, 0);
        for trial in start..end {
            let pair = runner.draw_pair(seed, trial);
            let (win, out) = runner.run(pair, seed, trial)?;
            wins += win as u64;
            ok += out.succeeded() as u64;
            bad += out.disagrees() as u64;
        }
        Ok((wins, ok, bad))
    });
    let (mut wins, mut ok, mut bad) = (0, 0, 0);
    for p in parts {
        let (w, o, b) = p?;
        wins += w;
        ok += o;
        bad += b;
    }
    report.empirical = Some(EmpiricalReport {
        trials,
        seed,
        empirical_ew: Proportion::new(wins, trials, DEFAULT_Z),
        successes: ok,
        disagreements: bad,
    });
    Ok(report)
}

/// `mu`-mass of pairs where both `D(pi_xy || pi_x)` and `D(pi_xy || pi_y)` are
/// at most `20 i_mu`.
pub fn markov_event_z_mass(p: &PublicCoinProtocol, mu: &PairDist, i_mu: f64) -> Result<f64> {
    let limit = 20.0 * i_mu + TOLERANCE;
    Ok(protocol::pair_divergences(p, mu)?
        .into_iter()
        .filter(|&(_, _, _, dx, dy)| dx <= limit && dy <= limit)
        .map(|(_, _, m, _, _)| m)
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplifyReport {
    pub k: u32,
    pub trials: u64,
    pub success: Proportion,
    pub total_bits: u64,
}

/// Majority of `k` runs. `runner(trial, run)` reports whether run `run` of
/// trial `trial` was correct; runs are indexed `trial * k + i`.
pub fn amplify_majority<F>(runner: F, k: u32, trials: u64, bits_per_run: u32) -> Result<AmplifyReport>
where
    F: Fn(u64, u64) -> Result<bool> + Sync + Send,
{
    if k.is_multiple_of(2) {
        return Err(Error::Parameter(format!("majority needs an odd k, got {k}")));
    }
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    let k64 = u64::from(k);
    let parts = par::map_chunks(trials, TRIAL_CHUNK, |start, end| -> Result<u64> {
        let mut wins = 0;
        for trial in start..end {
            let mut votes = 0;
            for i in 0..k64 {
                votes += runner(trial, trial * k64 + i)? as u64;
            }
            wins += (2 * votes > k64) as u64;
        }
        Ok(wins)
    });
    let wins = parts.into_iter().sum::<Result<u64>>()?;
    Ok(AmplifyReport {
        k,
        trials,
        success: Proportion::new(wins, trials, DEFAULT_Z),
        total_bits: k64 * u64::from(bits_per_run),
    })
}

/// Majority of `k` simulation runs on the same inputs. With `k = 1` this is
/// exactly [`run_pi_prime`]'s empirical estimate.
pub fn amplify_pi_prime(
    t: &ProtocolTree,
    mu: &PairDist,
    f: &FuncTable,
    params: &SimulationParams,
    k: u32,
    trials: u64,
    seed: u64,
) -> Result<AmplifyReport> {
    let runner = Runner::new(t, mu, f, params)?;
    let bits = params.bits_sent(t.leaf_count());
    amplify_majority(
        |trial, run| {
            let pair = runner.draw_pair(seed, trial);
            Ok(runner.run(pair, seed, run)?.0)
        },
        k,
        trials,
        bits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::gt_distribution;
    use crate::protocol::{bisection_gt, noisy_send_x, send_x, single_leaf};
    use crate::table::{constant_function, gt_function, FuncTable};

    fn identity_bit() -> FuncTable {
        FuncTable::from_fn(2, 2, |x, _| x == 1).unwrap()
    }

    #[test]
    fn instance_examples() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::scaled(4.0, None, 1.0, Compression::None);
        let inst = build_instance_from_protocol(&send_x(2, 2).unwrap(), &mu, 1, 0, &params).unwrap();
        assert_eq!(inst.p_a(), &[0.0, 1.0]);
        assert_eq!(inst.mu(), vec![0.0, 1.0]);

        let diag = PairDist::from_table(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let inst = build_instance_from_protocol(&send_x(2, 2).unwrap(), &diag, 0, 0, &params).unwrap();
        let r = validate_instance(&inst).unwrap();
        assert_eq!(r.div_a, ExtReal::ZERO);
        assert_eq!(r.div_b, ExtReal::ZERO);

        let inst = build_instance_from_protocol(&noisy_send_x(0.1, 2).unwrap(), &mu, 0, 1, &params).unwrap();
        assert_eq!(validate_instance(&inst).unwrap().div_a, ExtReal::ZERO);

        assert!(matches!(
            build_instance_from_protocol(&send_x(2, 2).unwrap(), &diag, 0, 1, &params),
            Err(Error::ZeroMass(_))
        ));
    }

    #[test]
    fn zero_tape_gives_a_coin() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::scaled(4.0, Some(0), 1.0, Compression::None);
        let r = simulate_advantage_exact(&send_x(2, 2).unwrap(), &mu, &identity_bit(), &params).unwrap();
        assert_eq!(r.exact_ew, 0.5);
    }

    #[test]
    fn single_leaf_closed_form() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::scaled(3.0, Some(5), 0.0, Compression::None);
        let t = single_leaf(2, 2, 0).unwrap();
        let zero = constant_function(2, 2, false).unwrap();
        let r = simulate_advantage_exact(&t, &mu, &zero, &params).unwrap();
        let s = (1.0 - (1.0 - 1.0f64 / 3.0).powi(5)) / 3.0;
        assert!((r.exact_ew - (0.5 + s / 2.0)).abs() < 1e-12);
        assert!((r.mean_success.to_f64() - s).abs() < 1e-12);
    }

    #[test]
    fn gt_chain_example() {
        let mu = gt_distribution(2).unwrap();
        let t = bisection_gt(2).unwrap();
        let f = gt_function(2).unwrap();
        let params = SimulationParams::scaled(4.0, None, 1.0, Compression::None);
        let r = simulate_advantage_exact(&t, &mu, &f, &params).unwrap();
        let s = r.mean_success.to_f64();
        assert!(r.exact_ew > 0.5);
        assert!(r.exact_ew >= r.chain_lower_bound - 1e-12);
        assert!(r.exact_ew > 0.5 + s * (7.0 / 9.0 - 0.1 - 0.5));
    }

    #[test]
    fn paper_mode_refuses_simulation() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::paper(1.0, false);
        let t = send_x(2, 2).unwrap();
        assert!(matches!(
            run_pi_prime(&t, &mu, &identity_bit(), &params, 10, 0),
            Err(Error::PaperModeUnsimulatable)
        ));
        let r = simulate_advantage_exact(&t, &mu, &identity_bit(), &params).unwrap();
        assert_eq!(r.bound_holds, Some(true));
    }

    #[test]
    fn reports_are_reproducible() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::scaled(4.0, None, 1.0, Compression::Hash(8));
        let t = send_x(2, 2).unwrap();
        let a = run_pi_prime(&t, &mu, &identity_bit(), &params, 5000, 11).unwrap();
        let b = run_pi_prime(&t, &mu, &identity_bit(), &params, 5000, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits_sent, 9);
    }

    #[test]
    fn z_mass_examples() {
        let mu = PairDist::uniform(2, 2).unwrap();
        let det: PublicCoinProtocol = send_x(2, 2).unwrap().into();
        assert_eq!(markov_event_z_mass(&det, &mu, 1.0).unwrap(), 1.0);
        let noisy: PublicCoinProtocol = noisy_send_x(0.1, 2).unwrap().into();
        let i = protocol::information_cost(&noisy, &mu).unwrap().via_divergence;
        assert_eq!(markov_event_z_mass(&noisy, &mu, i).unwrap(), 1.0);
    }

    #[test]
    fn majority_examples() {
        assert!(amplify_majority(|_, _| Ok(true), 2, 10, 1).is_err());
        let coin = |_: u64, run: u64| Ok(rng::stream(4, "m", run).gen_bool(0.6));
        let one = amplify_majority(coin, 1, 20_000, 3).unwrap();
        assert!((one.success.rate - 0.6).abs() < 0.02);
        let many = amplify_majority(coin, 101, 2000, 3).unwrap();
        assert!(many.success.rate >= 0.95);
        assert_eq!(many.total_bits, 303);

        let mu = PairDist::uniform(2, 2).unwrap();
        let params = SimulationParams::scaled(4.0, None, 1.0, Compression::None);
        let t = send_x(2, 2).unwrap();
        let base = run_pi_prime(&t, &mu, &identity_bit(), &params, 3000, 2).unwrap();
        let k1 = amplify_pi_prime(&t, &mu, &identity_bit(), &params, 1, 3000, 2).unwrap();
        assert_eq!(base.empirical.unwrap().empirical_ew, k1.success);
    }

    #[test]
    fn compression_parsing() {
        assert_eq!(Compression::parse("none").unwrap(), Compression::None);
        assert_eq!(Compression::parse("hash:8").unwrap(), Compression::Hash(8));
        assert_eq!(Compression::parse("twobit:4").unwrap(), Compression::TwoBit(4));
        assert!(Compression::parse("hash").is_err());
        assert!(SimulationParams::scaled(2.0, None, 1.0, Compression::Hash(0)).validate().is_err());
    }
}
