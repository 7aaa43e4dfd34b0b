//! Correlated sampling with shared randomness.
//!
//! Each party holds a factorization of a target `mu = p_A p_B` through its own
//! approximation: `nu_A = p_A q_A` for A and `nu_B = p_B q_B` for B. Both read
//! points `(x_i, alpha_i, beta_i)` uniform in `U x [0, c]^2` from a shared tape:
//!
//! * `A = { i : alpha_i <= p_A(x_i), beta_i <= c q_A(x_i) }`
//! * `B = { i : alpha_i <= c q_B(x_i), beta_i <= p_B(x_i) }`
//!
//! In `Pi1` Alice announces her first index in `A` and the run succeeds when it
//! is also in `B`. `Pi2` replaces the announcement with `d` hash bits of the
//! index, and the two-bit variant compares against shared random hash values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::info::{self, Dist, TOLERANCE};
use crate::par;
use crate::rng;
use crate::stats::Proportion;

/// Largest tape length the streaming simulators accept.
pub const MAX_STREAM_POINTS: u64 = 100_000_000;
/// Default number of standard deviations used for reported intervals.
pub const DEFAULT_Z: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// `c = 2^(50(i+1))` and `t = ceil(|U| 2^(100(i+1)) 60 i)`.
    Paper,
    /// Caller-chosen `c >= 1` and `t`.
    Scaled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingInstance {
    p_a: Vec<f64>,
    q_a: Vec<f64>,
    p_b: Vec<f64>,
    q_b: Vec<f64>,
    i: f64,
    mode: SamplingMode,
    c: ExtReal,
    t: ExtReal,
    /// Set when the paper-mode formula gave `t < 1` and `t` was raised to 1.
    t_floored: bool,
}

fn check_factor(name: &str, v: &[f64]) -> Result<()> {
    if let Some((index, &value)) = v
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Parameter(format!(
            "{name}[{index}] = {value} outside [0, 1]"
        )));
    }
    Ok(())
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

impl SamplingInstance {
    fn base(p_a: Vec<f64>, q_a: Vec<f64>, p_b: Vec<f64>, q_b: Vec<f64>, i: f64) -> Result<SamplingInstance> {
        let u = p_a.len();
        if u == 0 || q_a.len() != u || p_b.len() != u || q_b.len() != u {
            return Err(Error::Dimension(
                "p_a, q_a, p_b, q_b must be nonempty and of equal length".into(),
            ));
        }
        for (name, v) in [("p_a", &p_a), ("q_a", &q_a), ("p_b", &p_b), ("q_b", &q_b)] {
            check_factor(name, v)?;
        }
        if !(i >= 0.0 && i.is_finite()) {
            return Err(Error::Parameter(format!("i must be finite and >= 0, got {i}")));
        }
        for v in [product(&p_a, &p_b), product(&p_a, &q_a), product(&p_b, &q_b)] {
            info::check_masses(&v)?;
        }
        Ok(SamplingInstance {
            p_a,
            q_a,
            p_b,
            q_b,
            i,
            mode: SamplingMode::Scaled,
            c: ExtReal::ONE,
            t: ExtReal::ONE,
            t_floored: false,
        })
    }

    /// Instance with the constants fixed by `i`.
    pub fn paper(p_a: Vec<f64>, q_a: Vec<f64>, p_b: Vec<f64>, q_b: Vec<f64>, i: f64) -> Result<SamplingInstance> {
        let mut inst = SamplingInstance::base(p_a, q_a, p_b, q_b, i)?;
        let (c, t, floored) = paper_constants(inst.universe_size(), i);
        inst.mode = SamplingMode::Paper;
        inst.c = c;
        inst.t = t;
        inst.t_floored = floored;
        Ok(inst)
    }

    /// Instance with explicit `c >= 1` and `t` points on the tape.
    pub fn scaled(
        p_a: Vec<f64>,
        q_a: Vec<f64>,
        p_b: Vec<f64>,
        q_b: Vec<f64>,
        i: f64,
        c: f64,
        t: u64,
    ) -> Result<SamplingInstance> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("c must be finite and >= 1, got {c}")));
        }
        let mut inst = SamplingInstance::base(p_a, q_a, p_b, q_b, i)?;
        inst.c = ExtReal::from_f64(c);
        inst.t = ExtReal::from_u64(t);
        Ok(inst)
    }

    /// `t = 64 |U| c`, enough that `A` is empty with probability about `e^-64`.
    pub fn default_points(universe: usize, c: f64) -> u64 {
        (64.0 * universe as f64 * c).ceil() as u64
    }

    pub fn universe_size(&self) -> usize {
        self.p_a.len()
    }
    pub fn p_a(&self) -> &[f64] {
        &self.p_a
    }
    pub fn q_a(&self) -> &[f64] {
        &self.q_a
    }
    pub fn p_b(&self) -> &[f64] {
        &self.p_b
    }
    pub fn q_b(&self) -> &[f64] {
        &self.q_b
    }
    pub fn i(&self) -> f64 {
        self.i
    }
    pub fn mode(&self) -> SamplingMode {
        self.mode
    }
    pub fn c(&self) -> ExtReal {
        self.c
    }
    pub fn t(&self) -> ExtReal {
        self.t
    }
    pub fn t_floored(&self) -> bool {
        self.t_floored
    }

    pub fn mu(&self) -> Vec<f64> {
        product(&self.p_a, &self.p_b)
    }
    pub fn nu_a(&self) -> Vec<f64> {
        product(&self.p_a, &self.q_a)
    }
    pub fn nu_b(&self) -> Vec<f64> {
        product(&self.p_b, &self.q_b)
    }

    /// `(c, t)` as native numbers for the streaming simulators.
    pub fn stream_constants(&self) -> Result<(f64, u64)> {
        if self.mode == SamplingMode::Paper {
            return Err(Error::PaperModeUnsimulatable);
        }
        let t = self.t.to_f64();
        if t > MAX_STREAM_POINTS as f64 {
            return Err(Error::SizeCap(format!(
                "t = {t} exceeds the streaming limit {MAX_STREAM_POINTS}"
            )));
        }
        Ok((self.c.to_f64(), t as u64))
    }

    pub fn to_json(&self) -> String {
        let scaled = self.mode == SamplingMode::Scaled;
        serde_json::to_string(&InstanceFile {
            u: self.universe_size(),
            p_a: self.p_a.clone(),
            q_a: self.q_a.clone(),
            p_b: self.p_b.clone(),
            q_b: self.q_b.clone(),
            i: self.i,
            mode: self.mode,
            c: scaled.then(|| self.c.to_f64()),
            t: scaled.then(|| self.t.to_f64()),
        })
        .expect("serializable")
    }

    /// Reads `{u, p_a, q_a, p_b, q_b, i, mode, c?, t?}`. Scaled mode needs `c`;
    /// `t` defaults to [`SamplingInstance::default_points`].
    pub fn from_json(text: &str) -> Result<SamplingInstance> {
        let f: InstanceFile = serde_json::from_str(text)?;
        if f.p_a.len() != f.u {
            return Err(Error::Dimension(format!(
                "u = {} but p_a has {} entries",
                f.u,
                f.p_a.len()
            )));
        }
        match f.mode {
            SamplingMode::Paper => {
                if f.c.is_some() || f.t.is_some() {
                    return Err(Error::Parameter(
                        "c and t are derived from i in paper mode; omit them".into(),
                    ));
                }
                SamplingInstance::paper(f.p_a, f.q_a, f.p_b, f.q_b, f.i)
            }
            SamplingMode::Scaled => {
                let c = f
                    .c
                    .ok_or_else(|| Error::Parameter("scaled mode needs c".into()))?;
                let t = match f.t {
                    Some(t) if t >= 0.0 && t.fract() == 0.0 && t <= u64::MAX as f64 => t as u64,
                    Some(t) => return Err(Error::Parameter(format!("t must be a count, got {t}"))),
                    None => SamplingInstance::default_points(f.u, c),
                };
                SamplingInstance::scaled(f.p_a, f.q_a, f.p_b, f.q_b, f.i, c, t)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    u: usize,
    p_a: Vec<f64>,
    q_a: Vec<f64>,
    p_b: Vec<f64>,
    q_b: Vec<f64>,
    i: f64,
    mode: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
}

/// `c = 2^(50(i+1))` and `t = ceil(u 2^(100(i+1)) 60 i)`, with `t` raised to 1
/// (and flagged) when the formula gives less.
pub fn paper_constants(universe: usize, i: f64) -> (ExtReal, ExtReal, bool) {
    let c = ExtReal::exp2(50.0 * (i + 1.0));
    let t = (ExtReal::from_u64(universe as u64)
        * ExtReal::exp2(100.0 * (i + 1.0))
        * ExtReal::from_f64(60.0 * i))
    .ceil();
    if t < ExtReal::ONE {
        (c, ExtReal::ONE, true)
    } else {
        (c, t, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceReport {
    pub mu: Vec<f64>,
    pub nu_a: Vec<f64>,
    pub nu_b: Vec<f64>,
    pub div_a: ExtReal,
    pub div_b: ExtReal,
    /// Both divergences are at most `i`. The protocols still run otherwise;
    /// only the guarantees are lost.
    pub premises_ok: bool,
}

pub fn validate_instance(inst: &SamplingInstance) -> Result<InstanceReport> {
    let mu = inst.mu();
    let nu_a = inst.nu_a();
    let nu_b = inst.nu_b();
    let div_a = info::divergence_of_masses(&mu, &nu_a);
    let div_b = info::divergence_of_masses(&mu, &nu_b);
    let limit = ExtReal::from_f64(inst.i + TOLERANCE);
    Ok(InstanceReport {
        premises_ok: div_a <= limit && div_b <= limit,
        mu,
        nu_a,
        nu_b,
        div_a,
        div_b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactPi1Result {
    /// `P(A nonempty) = 1 - (1 - 1/(|U| c))^t`.
    pub p_nonempty: ExtReal,
    pub p_success: ExtReal,
    /// Law of the output given success (equivalently given `A` nonempty);
    /// absent when no element can be accepted.
    pub mu1: Option<Dist>,
    pub tv_to_mu: Option<f64>,
    /// `P(a in B | a = x)`.
    pub acceptance: Vec<ExtReal>,
    /// `P(output x | A nonempty) = nu_A(x) acceptance(x)`.
    pub output_given_nonempty: Vec<ExtReal>,
    /// `c nu_A(x) >= mu(x)` and `c nu_B(x) >= mu(x)`.
    pub good: Vec<bool>,
}

/// Closed form for `Pi1`, valid at any `c` and `t`.
///
/// Given `a = x`, `alpha` is uniform on `[0, p_A(x)]` and `beta` on
/// `[0, c q_A(x)]`, so `P(a in B | a = x)` is
/// `min(p_B / (c q_A), 1) * min(c q_B / p_A, 1)`. The second factor is 1
/// whenever `c nu_B(x) >= mu(x)`.
pub fn pi1_exact(inst: &SamplingInstance) -> Result<ExactPi1Result> {
    let u = inst.universe_size();
    let c = inst.c;
    let per_point = (ExtReal::from_u64(u as u64) * c).recip();
    let p_nonempty = if inst.t.is_zero() {
        ExtReal::ZERO
    } else {
        ExtReal::one_minus_exp_neg(inst.t * ExtReal::neg_ln_one_minus(per_point))
    };
    let mu = inst.mu();
    let nu_a = inst.nu_a();
    let nu_b = inst.nu_b();
    let mut acceptance = Vec::with_capacity(u);
    let mut output = Vec::with_capacity(u);
    let mut good = Vec::with_capacity(u);
    for x in 0..u {
        let acc = if nu_a[x] == 0.0 {
            ExtReal::ZERO
        } else {
            let beta = (ExtReal::from_f64(inst.p_b[x]) / (c * ExtReal::from_f64(inst.q_a[x]))).min(ExtReal::ONE);
            let alpha = (c * ExtReal::from_f64(inst.q_b[x]) / ExtReal::from_f64(inst.p_a[x])).min(ExtReal::ONE);
            beta * alpha
        };
        let m = ExtReal::from_f64(mu[x]);
        good.push(c * ExtReal::from_f64(nu_a[x]) >= m && c * ExtReal::from_f64(nu_b[x]) >= m);
        output.push(ExtReal::from_f64(nu_a[x]) * acc);
        acceptance.push(acc);
    }
    let total: ExtReal = output.iter().copied().sum();
    let p_success = p_nonempty * total;
    let (mu1, tv_to_mu) = if total.is_zero() {
        (None, None)
    } else {
        let mu1 = Dist::new(output.iter().map(|&o| (o / total).to_f64()).collect())?;
        let tv = info::statistical_distance(&mu1, &Dist::new(mu.clone())?)?;
        (Some(mu1), Some(tv))
    };
    Ok(ExactPi1Result {
        p_nonempty,
        p_success,
        mu1,
        tv_to_mu,
        acceptance,
        output_given_nonempty: output,
        good,
    })
}

/// Checks of the closed form against the stated guarantees.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pi1BoundCheck {
    /// `2^(-50(i+1))`, i.e. `1/c` in paper mode.
    pub upper: ExtReal,
    pub lower: ExtReal,
    pub p_success: ExtReal,
    pub tv_to_mu: Option<f64>,
    pub success_in_range: bool,
    pub tv_ok: bool,
    /// `P(output x | A nonempty) <= mu(x)/c` everywhere, with equality on the good set.
    pub per_element_ok: bool,
}

/// Relative slack on comparisons that involve sums of `mu`, which is only
/// normalized to within the input tolerance.
pub const BOUND_REL_TOLERANCE: f64 = 1e-9;

pub fn check_pi1_bounds(inst: &SamplingInstance, r: &ExactPi1Result) -> Pi1BoundCheck {
    let upper = ExtReal::exp2(-50.0 * (inst.i + 1.0));
    let lower = upper * ExtReal::from_f64(0.9);
    let slack = ExtReal::from_f64(1.0 + BOUND_REL_TOLERANCE);
    let success_in_range = r.p_success <= upper * slack && r.p_success * slack >= lower;
    let tv_ok = r.tv_to_mu.is_some_and(|tv| tv <= 2.0 / 9.0 + TOLERANCE);
    Pi1BoundCheck {
        upper,
        lower,
        p_success: r.p_success,
        tv_to_mu: r.tv_to_mu,
        success_in_range,
        tv_ok,
        per_element_ok: per_element_bound_holds(inst, r),
    }
}

/// `P(output x | A nonempty) <= mu(x)/c`, with equality on the good set.
pub fn per_element_bound_holds(inst: &SamplingInstance, r: &ExactPi1Result) -> bool {
    let mu = inst.mu();
    (0..inst.universe_size()).all(|x| {
        let cap = ExtReal::from_f64(mu[x]) / inst.c;
        let out = r.output_given_nonempty[x];
        let below = out <= cap * ExtReal::from_f64(1.0 + 1e-12);
        below && (!r.good[x] || out.approx_eq(cap, 1e-12))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SampleOutcome {
    pub status: Status,
    pub x_a: Option<usize>,
    pub x_b: Option<usize>,
    pub bits_sent: u32,
}

impl SampleOutcome {
    fn fail(x_a: Option<usize>, bits_sent: u32) -> SampleOutcome {
        SampleOutcome {
            status: Status::Fail,
            x_a,
            x_b: None,
            bits_sent,
        }
    }

    fn success(x_a: usize, x_b: usize, bits_sent: u32) -> SampleOutcome {
        SampleOutcome {
            status: Status::Success,
            x_a: Some(x_a),
            x_b: Some(x_b),
            bits_sent,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status == Status::Success
    }

    pub fn disagrees(&self) -> bool {
        self.succeeded() && self.x_a != self.x_b
    }
}

/// Both parties' view of the public randomness for one run: the point tape
/// and the source of hash keys. Runs with equal streams are coupled across
/// protocols.
#[derive(Clone, Debug)]
pub struct SharedRandomness {
    pub tape: ChaCha8Rng,
    pub hash: ChaCha8Rng,
}

impl SharedRandomness {
    pub fn for_trial(seed: u64, trial: u64) -> SharedRandomness {
        SharedRandomness {
            tape: rng::stream(seed, "tape", trial),
            hash: rng::stream(seed, "hash", trial),
        }
    }
}

struct Point {
    x: usize,
    alpha: f64,
    beta: f64,
}

struct Tape<'a> {
    inst: &'a SamplingInstance,
    c: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Tape<'_> {
    fn next(&mut self) -> Point {
        Point {
            x: self.rng.gen_range(0..self.inst.universe_size()),
            alpha: self.rng.gen::<f64>() * self.c,
            beta: self.rng.gen::<f64>() * self.c,
        }
    }

    fn in_a(&self, p: &Point) -> bool {
        p.alpha <= self.inst.p_a[p.x] && p.beta <= self.c * self.inst.q_a[p.x]
    }

    fn in_b(&self, p: &Point) -> bool {
        p.alpha <= self.c * self.inst.q_b[p.x] && p.beta <= self.inst.p_b[p.x]
    }
}

/// Bits to name one element of `U`.
pub fn index_bits(universe: usize) -> u32 {
    crate::protocol::bits_for(universe)
}

/// Literal `Pi1`: Alice sends her first `A` index's element, Bob replies with
/// one accept bit.
pub fn pi1_simulate(inst: &SamplingInstance, shared: &mut SharedRandomness) -> Result<SampleOutcome> {
    let (c, t) = inst.stream_constants()?;
    let bits = index_bits(inst.universe_size()) + 1;
    let mut tape = Tape {
        inst,
        c,
        rng: &mut shared.tape,
    };
    for _ in 0..t {
        let p = tape.next();
        if tape.in_a(&p) {
            return Ok(if tape.in_b(&p) {
                SampleOutcome::success(p.x, p.x, bits)
            } else {
                SampleOutcome::fail(Some(p.x), bits)
            });
        }
    }
    Ok(SampleOutcome::fail(None, bits))
}

/// `d` pseudorandom bits per tape index, keyed from the shared hash stream.
pub struct HashFamily {
    keys: Vec<u64>,
    d: u32,
}

impl HashFamily {
    pub fn draw(d: u32, rng: &mut ChaCha8Rng) -> HashFamily {
        let words = d.div_ceil(64) as usize;
        HashFamily {
            keys: (0..words).map(|_| rng.gen()).collect(),
            d,
        }
    }

    fn word(&self, w: usize, index: u64) -> u64 {
        let v = rng::splitmix64(self.keys[w] ^ rng::splitmix64(index));
        let used = self.d as usize - 64 * w;
        if used >= 64 {
            v
        } else {
            v & ((1u64 << used) - 1)
        }
    }

    /// Whether `h_j(a) = h_j(b)` for every `j`.
    pub fn agree(&self, a: u64, b: u64) -> bool {
        (0..self.keys.len()).all(|w| self.word(w, a) == self.word(w, b))
    }
}

/// `Pi2`: Alice sends `d` hash bits of her first `A` index; Bob takes the first
/// index of `B` whose hashes agree, and replies with one bit.
pub fn pi2_simulate(inst: &SamplingInstance, d: u32, shared: &mut SharedRandomness) -> Result<SampleOutcome> {
    let (c, t) = inst.stream_constants()?;
    let bits = d + 1;
    let hashes = HashFamily::draw(d, &mut shared.hash);
    let mut tape = Tape {
        inst,
        c,
        rng: &mut shared.tape,
    };
    let mut earlier_b: Vec<(u64, usize)> = Vec::new();
    let mut i = 0;
    let (ia, xa) = loop {
        if i == t {
            return Ok(SampleOutcome::fail(None, bits));
        }
        let p = tape.next();
        if tape.in_a(&p) {
            if let Some(&(_, xb)) = earlier_b.iter().find(|&&(j, _)| hashes.agree(i, j)) {
                return Ok(SampleOutcome::success(p.x, xb, bits));
            }
            if tape.in_b(&p) {
                return Ok(SampleOutcome::success(p.x, p.x, bits));
            }
            break (i, p.x);
        }
        if tape.in_b(&p) {
            earlier_b.push((i, p.x));
        }
        i += 1;
    };
    for j in ia + 1..t {
        let p = tape.next();
        if tape.in_b(&p) && hashes.agree(ia, j) {
            return Ok(SampleOutcome::success(xa, p.x, bits));
        }
    }
    Ok(SampleOutcome::fail(Some(xa), bits))
}

/// Two-bit variant: the shared randomness fixes targets `h_j(b_j)` at fresh
/// random indices `b_j`. Alice sends whether her index matches every target;
/// Bob takes the first index of `B` that does and replies with one bit.
pub fn pi2_two_bit_simulate(
    inst: &SamplingInstance,
    d: u32,
    shared: &mut SharedRandomness,
) -> Result<SampleOutcome> {
    if d == 0 {
        return Err(Error::Parameter("two-bit variant needs d >= 1".into()));
    }
    let (c, t) = inst.stream_constants()?;
    let hashes = HashFamily::draw(d, &mut shared.hash);
    let targets: Vec<u64> = (0..d).map(|_| shared.hash.gen::<u64>() | 1 << 63).collect();
    let matches = |index: u64| {
        targets.iter().enumerate().all(|(j, &b)| {
            let w = j / 64;
            let bit = j % 64;
            (hashes.word(w, index) >> bit & 1) == (hashes.word(w, b) >> bit & 1)
        })
    };
    let mut tape = Tape {
        inst,
        c,
        rng: &mut shared.tape,
    };
    let mut earlier_b: Vec<(u64, usize)> = Vec::new();
    let mut i = 0;
    let xa = loop {
        if i == t {
            return Ok(SampleOutcome::fail(None, 2));
        }
        let p = tape.next();
        if tape.in_a(&p) {
            if !matches(i) {
                return Ok(SampleOutcome::fail(Some(p.x), 2));
            }
            if let Some(&(_, xb)) = earlier_b.iter().find(|&&(j, _)| matches(j)) {
                return Ok(SampleOutcome::success(p.x, xb, 2));
            }
            if tape.in_b(&p) {
                return Ok(SampleOutcome::success(p.x, p.x, 2));
            }
            break p.x;
        }
        if tape.in_b(&p) {
            earlier_b.push((i, p.x));
        }
        i += 1;
    };
    for j in i + 1..t {
        let p = tape.next();
        if tape.in_b(&p) && matches(j) {
            return Ok(SampleOutcome::success(xa, p.x, 2));
        }
    }
    Ok(SampleOutcome::fail(Some(xa), 2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeStats {
    pub trials: u64,
    pub success: Proportion,
    pub disagreement: Proportion,
    /// Successful runs by Bob's output.
    pub output_counts: Vec<u64>,
    pub max_bits_sent: u32,
    pub seed: u64,
}

const TRIAL_CHUNK: u64 = 1 << 14;

/// Runs `runner` on `trials` independent shared-randomness streams derived
/// from `seed` and tallies the outcomes.
pub fn estimate_outcome_stats<F>(universe: usize, trials: u64, seed: u64, runner: F) -> Result<OutcomeStats>
where
    F: Fn(&mut SharedRandomness) -> Result<SampleOutcome> + Sync + Send,
{
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    let parts = par::map_chunks(trials, TRIAL_CHUNK, |start, end| -> Result<(u64, u64, Vec<u64>, u32)> {
        let mut counts = vec![0u64; universe];
        let (mut ok, mut bad, mut bits) = (0, 0, 0);
        for trial in start..end {
            let mut shared = SharedRandomness::for_trial(seed, trial);
            let out = runner(&mut shared)?;
            bits = bits.max(out.bits_sent);
            if out.succeeded() {
                ok += 1;
                if out.disagrees() {
                    bad += 1;
                }
                if let Some(x) = out.x_b {
                    if x >= universe {
                        return Err(Error::OutOfRange(format!("runner output {x} outside universe")));
                    }
                    counts[x] += 1;
                }
            }
        }
        Ok((ok, bad, counts, bits))
    });
    let mut output_counts = vec![0u64; universe];
    let (mut ok, mut bad, mut bits) = (0, 0, 0);
    for part in parts {
        let (o, b, counts, m) = part?;
        ok += o;
        bad += b;
        bits = bits.max(m);
        for (acc, v) in output_counts.iter_mut().zip(counts) {
            *acc += v;
        }
    }
    Ok(OutcomeStats {
        trials,
        success: Proportion::new(ok, trials, DEFAULT_Z),
        disagreement: Proportion::new(bad, trials, DEFAULT_Z),
        output_counts,
        max_bits_sent: bits,
        seed,
    })
}

/// Expected size of `B` on a tape of `t` points: every point lands in `B`
/// with probability `1/(|U| c)`.
pub fn expected_b_size(inst: &SamplingInstance) -> ExtReal {
    inst.t / (ExtReal::from_u64(inst.universe_size() as u64) * inst.c)
}

/// Union bound on `P(success and x_a != x_b)` for `Pi2`: `E|B| 2^-d`.
pub fn hash_disagreement_bound(inst: &SamplingInstance, d: u32) -> ExtReal {
    expected_b_size(inst) * ExtReal::exp2(-f64::from(d))
}
