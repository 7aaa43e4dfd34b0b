//! Seeded generators for fuzz corpora: random protocol trees, input
//! distributions, distribution pairs and sampling instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::info::{self, Dist, PairDist};
use crate::protocol::{NodeSpec, Owner, ProtocolTree, PublicCoinProtocol};
use crate::rng;
use crate::sampling::SamplingInstance;

pub const MAX_SIDE: usize = 8;
pub const MAX_DEPTH: usize = 4;
pub const MAX_BRANCHES: usize = 3;

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen(),
        })
        .collect()
}

fn random_node(rng: &mut ChaCha8Rng, nx: usize, ny: usize, depth: usize, max_depth: usize, path: String) -> NodeSpec {
    let internal = depth < max_depth && (depth == 0 || rng.gen_bool(0.7));
    if !internal {
        return NodeSpec::leaf(rng.gen_range(0..2), path);
    }
    let owner = if rng.gen() { Owner::A } else { Owner::B };
    let p1 = random_probs(rng, if owner == Owner::A { nx } else { ny });
    let zero = random_node(rng, nx, ny, depth + 1, max_depth, format!("{path}0"));
    let one = random_node(rng, nx, ny, depth + 1, max_depth, format!("{path}1"));
    NodeSpec::node(owner, p1, zero, one)
}

pub fn random_tree(rng: &mut ChaCha8Rng, nx: usize, ny: usize, max_depth: usize) -> ProtocolTree {
    ProtocolTree::new(nx, ny, random_node(rng, nx, ny, 0, max_depth, String::new()))
        .expect("generated trees are valid")
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // exponential spacings give a uniform point on the simplex
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

pub fn random_public_coin(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> PublicCoinProtocol {
    let k = rng.gen_range(1..=MAX_BRANCHES);
    let weights = random_weights(rng, k);
    let branches = weights
        .into_iter()
        .map(|w| {
            let depth = rng.gen_range(1..=MAX_DEPTH);
            (w, random_tree(rng, nx, ny, depth))
        })
        .collect();
    PublicCoinProtocol::new(branches).expect("generated protocols are valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuShape {
    Dense,
    Sparse,
    Point,
    Diagonal,
    Product,
}

pub const MU_SHAPES: [MuShape; 5] = [
    MuShape::Dense,
    MuShape::Sparse,
    MuShape::Point,
    MuShape::Diagonal,
    MuShape::Product,
];

pub fn random_pair_dist(rng: &mut ChaCha8Rng, nx: usize, ny: usize, shape: MuShape) -> PairDist {
    let cells = nx * ny;
    let mut w = vec![0.0; cells];
    match shape {
        MuShape::Dense => w = random_weights(rng, cells),
        MuShape::Sparse => {
            let keep = rng.gen_range(1..=cells);
            let mut idx: Vec<usize> = (0..cells).collect();
            idx.shuffle(rng);
            let v = random_weights(rng, keep);
            for (&i, p) in idx.iter().zip(v) {
                w[i] = p;
            }
        }
        MuShape::Point => w[rng.gen_range(0..cells)] = 1.0,
        MuShape::Diagonal => {
            let n = nx.min(ny);
            let mut cols: Vec<usize> = (0..ny).collect();
            cols.shuffle(rng);
            let v = random_weights(rng, n);
            for (x, p) in v.into_iter().enumerate() {
                w[x * ny + cols[x]] = p;
            }
        }
        MuShape::Product => {
            let a = random_weights(rng, nx);
            let b = random_weights(rng, ny);
            for x in 0..nx {
                for y in 0..ny {
                    w[x * ny + y] = a[x] * b[y];
                }
            }
        }
    }
    PairDist::new(nx, ny, Dist::from_weights(&w).expect("positive weights")).expect("shape matches")
}

/// One fuzz case: a public-coin protocol and an input distribution on its spaces.
pub struct FuzzCase {
    pub protocol: PublicCoinProtocol,
    pub mu: PairDist,
}

pub fn fuzz_case(seed: u64, index: u64) -> FuzzCase {
    let mut rng = rng::stream(seed, "fuzz-protocol", index);
    let nx = rng.gen_range(1..=MAX_SIDE);
    let ny = rng.gen_range(1..=MAX_SIDE);
    let protocol = random_public_coin(&mut rng, nx, ny);
    let shape = MU_SHAPES[rng.gen_range(0..MU_SHAPES.len())];
    let mu = random_pair_dist(&mut rng, nx, ny, shape);
    FuzzCase { protocol, mu }
}

/// `(mu, nu)` on a common universe with `supp mu` inside `supp nu`.
pub fn random_divergence_pair(seed: u64, index: u64) -> (Dist, Dist) {
    let mut rng = rng::stream(seed, "fuzz-divergence", index);
    let n = rng.gen_range(1..=16);
    let nu = random_weights(&mut rng, n);
    let mut mu = random_weights(&mut rng, n);
    if rng.gen_bool(0.3) {
        let zeroed = rng.gen_range(0..n);
        for p in mu.iter_mut().take(zeroed) {
            *p = 0.0;
        }
        if mu.iter().all(|&p| p == 0.0) {
            mu[n - 1] = 1.0;
        }
    }
    if rng.gen_bool(0.2) {
        // a skewed pair with a large divergence
        let k = rng.gen_range(0..n);
        mu = vec![0.0; n];
        mu[k] = 1.0;
    }
    (Dist::from_weights(&mu).unwrap(), Dist::new(nu).unwrap())
}

fn mixture(mu: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    mu.iter().zip(w).map(|(m, v)| (1.0 - lambda) * m + lambda * v).collect()
}

/// An approximation `nu` of `mu` with `D(mu || nu) <= i`: a mixture with a
/// random distribution, optionally with one coordinate pushed towards zero
/// so the instance has elements outside the good set.
fn approximation(rng: &mut ChaCha8Rng, mu: &[f64], i: f64) -> Vec<f64> {
    let n = mu.len();
    let w = random_weights(rng, n);
    let div = |lambda: f64| info::divergence_of_masses(mu, &mixture(mu, &w, lambda)).to_f64();
    let mut hi = 1.0;
    if div(hi) > i {
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if div(mid) <= i {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi = lo;
    }
    let mut nu = mixture(mu, &w, rng.gen::<f64>() * hi);
    if n > 1 && rng.gen_bool(0.3) {
        let x = rng.gen_range(0..n);
        let shrunk: Vec<f64> = {
            let mut v = nu.clone();
            v[x] *= (-rng.gen_range(0.0..200.0f64)).exp2();
            let total: f64 = v.iter().sum();
            v.iter().map(|p| p / total).collect()
        };
        if info::divergence_of_masses(mu, &shrunk).to_f64() <= i {
            nu = shrunk;
        }
    }
    nu
}

/// Factors `mu = p_A p_B`, `nu_A = p_A q_A`, `nu_B = p_B q_B` with every factor
/// in `[0, 1]`, which exists iff `nu_A nu_B <= mu` pointwise.
pub fn factorize(rng: &mut ChaCha8Rng, mu: &[f64], nu_a: &[f64], nu_b: &[f64]) -> Option<[Vec<f64>; 4]> {
    let n = mu.len();
    let (mut p_a, mut q_a, mut p_b, mut q_b) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for x in 0..n {
        let (m, a, b) = (mu[x], nu_a[x], nu_b[x]);
        if m == 0.0 {
            if a > 0.0 && b > 0.0 {
                return None;
            }
            // one party's factor must vanish
            if b == 0.0 {
                p_a[x] = 1.0;
                q_a[x] = a;
                p_b[x] = 0.0;
                q_b[x] = 0.0;
            } else {
                p_a[x] = 0.0;
                q_a[x] = 0.0;
                p_b[x] = 1.0;
                q_b[x] = b;
            }
            continue;
        }
        let lo = m.max(a);
        let hi = if b > 0.0 { (m / b).min(1.0) } else { 1.0 };
        if lo > hi * (1.0 + 1e-12) {
            return None;
        }
        let pa = (lo + rng.gen::<f64>() * (hi - lo).max(0.0)).clamp(lo.min(hi), 1.0);
        p_a[x] = pa;
        q_a[x] = (a / pa).min(1.0);
        p_b[x] = (m / pa).min(1.0);
        q_b[x] = (b / p_b[x]).min(1.0);
    }
    Some([p_a, q_a, p_b, q_b])
}

/// Factors of a random instance whose divergences are at most `i`.
pub fn random_premises_factors(seed: u64, index: u64, max_universe: usize, i: f64) -> [Vec<f64>; 4] {
    let mut rng = rng::stream(seed, "fuzz-instance", index);
    loop {
        let u = rng.gen_range(1..=max_universe);
        let mu = random_weights(&mut rng, u);
        let nu_a = approximation(&mut rng, &mu, i);
        let nu_b = approximation(&mut rng, &mu, i);
        if let Some(f) = factorize(&mut rng, &mu, &nu_a, &nu_b) {
            return f;
        }
    }
}

pub fn random_paper_instance(seed: u64, index: u64, max_universe: usize, i: f64) -> SamplingInstance {
    let [p_a, q_a, p_b, q_b] = random_premises_factors(seed, index, max_universe, i);
    SamplingInstance::paper(p_a, q_a, p_b, q_b, i).expect("factorization is normalized")
}

/// `mu = (1/2, 1/2)`, `nu_A = (3/4, 1/4)`, `nu_B = mu`.
pub fn two_element_instance(c: f64, t: u64) -> SamplingInstance {
    SamplingInstance::scaled(
        vec![1.0, 1.0],
        vec![0.75, 0.25],
        vec![0.5, 0.5],
        vec![1.0, 1.0],
        info::divergence_of_masses(&[0.5, 0.5], &[0.75, 0.25]).to_f64(),
        c,
        t,
    )
    .expect("normalized")
}

/// Ten scaled-mode instances covering `|U|` in {1, 2, 3, 4, 8} and `c` in
/// {1, 2, 4}, some with short tapes so `A` is often empty.
pub fn scaled_fixed_instances() -> Vec<SamplingInstance> {
    let shapes: [(usize, f64, Option<u64>); 9] = [
        (1, 1.0, Some(1)),
        (2, 2.0, None),
        (3, 1.0, None),
        (3, 4.0, Some(12)),
        (4, 2.0, None),
        (4, 4.0, Some(8)),
        (8, 1.0, None),
        (8, 2.0, Some(20)),
        (8, 4.0, None),
    ];
    let mut out = vec![two_element_instance(2.0, 40)];
    for (k, &(u, c, t)) in shapes.iter().enumerate() {
        let mut rng = rng::stream(0x5eed, "fixed-instance", k as u64);
        let [p_a, q_a, p_b, q_b] = loop {
            let mu = random_weights(&mut rng, u);
            let nu_a = approximation(&mut rng, &mu, 1.0);
            let nu_b = approximation(&mut rng, &mu, 1.0);
            if let Some(f) = factorize(&mut rng, &mu, &nu_a, &nu_b) {
                break f;
            }
        };
        let t = t.unwrap_or_else(|| SamplingInstance::default_points(u, c));
        out.push(SamplingInstance::scaled(p_a, q_a, p_b, q_b, 1.0, c, t).expect("normalized"));
    }
    out
}
