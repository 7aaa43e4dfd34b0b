//! Discrepancy of boolean functions over combinatorial rectangles.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::PairDist;
use crate::par;
use crate::rng;
use crate::table::{FuncTable, MAX_TABLE_BITS};

/// Largest side enumerated by [`discrepancy_exact`].
pub const EXACT_SIDE_CAP: usize = 25;
/// Largest `|X| + |Y|` accepted by [`discrepancy_naive`].
pub const NAIVE_BITS_CAP: usize = 24;

const GRAY_CHUNK: u64 = 1 << 12;
const GREEDY_MAX_ROUNDS: usize = 256;

/// A distribution over `X x Y` that can be queried cell by cell.
pub trait PairMeasure: Sync {
    fn nx(&self) -> usize;
    fn ny(&self) -> usize;
    fn mass(&self, x: usize, y: usize) -> f64;
}

impl PairMeasure for PairDist {
    fn nx(&self) -> usize {
        PairDist::nx(self)
    }
    fn ny(&self) -> usize {
        PairDist::ny(self)
    }
    fn mass(&self, x: usize, y: usize) -> f64 {
        PairDist::mass(self, x, y)
    }
}

/// The hard distribution for `GT_n`, evaluated without a dense table.
///
/// Sample a uniform index `k`, a uniform common prefix of length `k - 1`, a
/// uniform bit for `x_k` with `y_k` its complement, and independent uniform
/// suffixes. Bits are MSB-first.
#[derive(Clone, Debug, PartialEq)]
pub struct GtMeasure {
    n: u32,
    /// `by_k[k - 1]` is the mass of one pair whose first difference is at `k`.
    by_k: Vec<f64>,
}

impl GtMeasure {
    pub fn new(n: u32) -> Result<GtMeasure> {
        if n == 0 || n > MAX_TABLE_BITS {
            return Err(Error::OutOfRange(format!(
                "gt distribution needs n in 1..={MAX_TABLE_BITS}, got {n}"
            )));
        }
        let by_k = (1..=n)
            .map(|k| {
                let log = -f64::from(k - 1) - 1.0 - 2.0 * f64::from(n - k);
                log.exp2() / f64::from(n)
            })
            .collect();
        Ok(GtMeasure { n, by_k })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// 1-based index of the first differing bit, MSB-first.
    pub fn first_difference(&self, x: usize, y: usize) -> Option<u32> {
        let d = (x ^ y) as u64;
        (d != 0).then(|| d.leading_zeros() - (64 - self.n) + 1)
    }

    pub fn to_pair_dist(&self) -> Result<PairDist> {
        let size = 1usize << self.n;
        let rows: Vec<Vec<f64>> = (0..size)
            .map(|x| (0..size).map(|y| PairMeasure::mass(self, x, y)).collect())
            .collect();
        PairDist::from_table(&rows)
    }
}

impl PairMeasure for GtMeasure {
    fn nx(&self) -> usize {
        1 << self.n
    }
    fn ny(&self) -> usize {
        1 << self.n
    }
    fn mass(&self, x: usize, y: usize) -> f64 {
        self.first_difference(x, y)
            .map_or(0.0, |k| self.by_k[k as usize - 1])
    }
}

/// `mu_n` as a dense table.
pub fn gt_distribution(n: u32) -> Result<PairDist> {
    GtMeasure::new(n)?.to_pair_dist()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rectangle {
    pub s: Vec<usize>,
    pub t: Vec<usize>,
}

impl Rectangle {
    pub fn new(mut s: Vec<usize>, mut t: Vec<usize>) -> Result<Rectangle> {
        if s.is_empty() || t.is_empty() {
            return Err(Error::Parameter("rectangle sides must be nonempty".into()));
        }
        s.sort_unstable();
        s.dedup();
        t.sort_unstable();
        t.dedup();
        Ok(Rectangle { s, t })
    }

    pub fn full(nx: usize, ny: usize) -> Rectangle {
        Rectangle {
            s: (0..nx).collect(),
            t: (0..ny).collect(),
        }
    }

    fn from_masks(s: u64, t: u64) -> Rectangle {
        Rectangle {
            s: mask_members(s),
            t: mask_members(t),
        }
    }
}

fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscMethod {
    Exact,
    Greedy,
    Naive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscResult {
    pub value: f64,
    pub witness: Rectangle,
    pub method: DiscMethod,
}

fn check_shapes<M: PairMeasure + ?Sized>(f: &FuncTable, mu: &M) -> Result<()> {
    if f.nx() != mu.nx() || f.ny() != mu.ny() {
        return Err(Error::Dimension(format!(
            "function is {}x{} but distribution is {}x{}",
            f.nx(),
            f.ny(),
            mu.nx(),
            mu.ny()
        )));
    }
    Ok(())
}

fn signed<M: PairMeasure + ?Sized>(f: &FuncTable, mu: &M, x: usize, y: usize) -> f64 {
    let m = mu.mass(x, y);
    if f.get(x, y) == 0 {
        m
    } else {
        -m
    }
}

/// `|sum over R of mu(x, y) (-1)^f(x, y)|`.
pub fn rectangle_discrepancy<M: PairMeasure + ?Sized>(
    f: &FuncTable,
    mu: &M,
    r: &Rectangle,
) -> Result<f64> {
    check_shapes(f, mu)?;
    if r.s.iter().any(|&x| x >= f.nx()) || r.t.iter().any(|&y| y >= f.ny()) {
        return Err(Error::OutOfRange("rectangle leaves the input space".into()));
    }
    let total: f64 = r
        .s
        .iter()
        .map(|&x| r.t.iter().map(|&y| signed(f, mu, x, y)).sum::<f64>())
        .sum();
    Ok(total.abs())
}

/// Signed weights arranged with the enumerated side as rows.
struct Oriented {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    transposed: bool,
}

impl Oriented {
    fn new<M: PairMeasure + ?Sized>(f: &FuncTable, mu: &M) -> Oriented {
        let transposed = f.nx() > f.ny();
        let (rows, cols) = if transposed {
            (f.ny(), f.nx())
        } else {
            (f.nx(), f.ny())
        };
        let mut w = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let (x, y) = if transposed { (c, r) } else { (r, c) };
                w[r * cols + c] = signed(f, mu, x, y);
            }
        }
        Oriented {
            rows,
            cols,
            w,
            transposed,
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.w[r * self.cols..(r + 1) * self.cols]
    }

    fn rectangle(&self, row_mask: u64, cols: Vec<usize>) -> Rectangle {
        let rows = mask_members(row_mask);
        if self.transposed {
            Rectangle { s: cols, t: rows }
        } else {
            Rectangle { s: rows, t: cols }
        }
    }
}

/// Best other side for given column sums: `(value, positive side?)`.
fn sign_rule(sums: &[f64]) -> (f64, bool) {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &s in sums {
        if s > 0.0 {
            pos += s;
        } else {
            neg -= s;
        }
    }
    if pos >= neg {
        (pos, true)
    } else {
        (neg, false)
    }
}

fn sign_columns(sums: &[f64], positive: bool) -> Vec<usize> {
    sums.iter()
        .enumerate()
        .filter(|&(_, &s)| if positive { s > 0.0 } else { s < 0.0 })
        .map(|(i, _)| i)
        .collect()
}

fn better(a: (f64, u64), b: (f64, u64)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if b.1 == 0 {
        return true;
    }
    match a.1.count_ones().cmp(&b.1.count_ones()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.1 > b.1,
    }
}

/// Global maximum over rectangles.
///
/// Subsets of the smaller side are enumerated in Gray-code order, in chunks
/// whose column sums are rebuilt from scratch; for each subset the best other
/// side is all positive or all negative columns. Ties prefer fewer rows, then
/// the larger mask.
pub fn discrepancy_exact<M: PairMeasure + ?Sized>(f: &FuncTable, mu: &M) -> Result<DiscResult> {
    check_shapes(f, mu)?;
    let o = Oriented::new(f, mu);
    if o.rows > EXACT_SIDE_CAP {
        return Err(Error::SizeCap(format!(
            "exact search enumerates 2^{} subsets (cap 2^{EXACT_SIDE_CAP}); use greedy mode",
            o.rows
        )));
    }
    let total = 1u64 << o.rows;
    let best_of_chunk = |start: u64, end: u64| -> (f64, u64) {
        let mut best = (0.0, 0u64);
        let mut mask = start ^ (start >> 1);
        let mut sums = vec![0.0; o.cols];
        for r in mask_members(mask) {
            for (s, w) in sums.iter_mut().zip(o.row(r)) {
                *s += w;
            }
        }
        for i in start..end {
            if i > start {
                let bit = i.trailing_zeros() as usize;
                mask ^= 1 << bit;
                let add = mask >> bit & 1 == 1;
                for (s, w) in sums.iter_mut().zip(o.row(bit)) {
                    if add {
                        *s += w;
                    } else {
                        *s -= w;
                    }
                }
            }
            if mask == 0 {
                continue;
            }
            let (v, _) = sign_rule(&sums);
            if v > 0.0 && better((v, mask), best) {
                best = (v, mask);
            }
        }
        best
    };
    let chunks = par::map_chunks(total, GRAY_CHUNK, best_of_chunk);
    let (value, mask) = chunks
        .into_iter()
        .fold((0.0, 0u64), |a, b| if b.0 > 0.0 && better(b, a) { b } else { a });
    let witness = if mask == 0 || value == 0.0 {
        Rectangle::full(f.nx(), f.ny())
    } else {
        let mut sums = vec![0.0; o.cols];
        for r in mask_members(mask) {
            for (s, w) in sums.iter_mut().zip(o.row(r)) {
                *s += w;
            }
        }
        let (_, positive) = sign_rule(&sums);
        o.rectangle(mask, sign_columns(&sums, positive))
    };
    Ok(DiscResult {
        value: rectangle_discrepancy(f, mu, &witness)?,
        witness,
        method: DiscMethod::Exact,
    })
}

/// Maximum over every pair of nonempty subsets. Reference implementation.
pub fn discrepancy_naive<M: PairMeasure + ?Sized>(f: &FuncTable, mu: &M) -> Result<DiscResult> {
    check_shapes(f, mu)?;
    let (nx, ny) = (f.nx(), f.ny());
    if nx + ny > NAIVE_BITS_CAP {
        return Err(Error::SizeCap(format!(
            "naive search over 2^{} rectangles exceeds 2^{NAIVE_BITS_CAP}",
            nx + ny
        )));
    }
    let w: Vec<f64> = (0..nx * ny).map(|i| signed(f, mu, i / ny, i % ny)).collect();
    let mut best = (0.0, 1u64, 1u64);
    let mut cols = vec![0.0; ny];
    let mut rect = vec![0.0; 1 << ny];
    for s in 1..1u64 << nx {
        for (y, c) in cols.iter_mut().enumerate() {
            *c = (0..nx).filter(|&x| s >> x & 1 == 1).map(|x| w[x * ny + y]).sum();
        }
        // rect[t] = rect[t without its lowest column] + that column
        for t in 1..1usize << ny {
            let low = t.trailing_zeros() as usize;
            rect[t] = rect[t & (t - 1)] + cols[low];
            if rect[t].abs() > best.0 {
                best = (rect[t].abs(), s, t as u64);
            }
        }
    }
    let witness = if best.0 == 0.0 {
        Rectangle::full(nx, ny)
    } else {
        Rectangle::from_masks(best.1, best.2)
    };
    Ok(DiscResult {
        value: rectangle_discrepancy(f, mu, &witness)?,
        witness,
        method: DiscMethod::Naive,
    })
}

/// Alternating row/column sign improvement from random starting rows, or
/// from every nonempty row set when `restarts >= 2^|X| - 1`.
///
/// A column whose signed sum is exactly zero keeps its previous membership.
/// The result is a lower bound on the exact value and depends only on `seed`.
pub fn discrepancy_greedy<M: PairMeasure + ?Sized>(
    f: &FuncTable,
    mu: &M,
    restarts: usize,
    seed: u64,
) -> Result<DiscResult> {
    check_shapes(f, mu)?;
    let (nx, ny) = (f.nx(), f.ny());
    let weight: Vec<f64> = (0..nx)
        .flat_map(|x| (0..ny).map(move |y| (x, y)))
        .map(|(x, y)| signed(f, mu, x, y))
        .collect();
    // With enough restarts every nonempty row set is a starting point, which
    // makes the result exact.
    let systematic = nx < 64 && (1u64 << nx) - 1 <= restarts as u64;
    let runs = par::map_range(restarts.max(1), |r| {
        let s: Vec<bool> = if systematic && (r as u64) < (1u64 << nx) - 1 {
            (0..nx).map(|x| (r as u64 + 1) >> x & 1 == 1).collect()
        } else {
            let mut g = rng::stream(seed, "greedy", r as u64);
            let mut s: Vec<bool> = (0..nx).map(|_| g.gen()).collect();
            if !s.contains(&true) {
                s[g.gen_range(0..nx)] = true;
            }
            s
        };
        climb(&weight, nx, ny, s)
    });
    let (_, s, t) = runs
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new(), Vec::new()), |a, b| if b.0 > a.0 { b } else { a });
    let witness = if s.is_empty() || t.is_empty() {
        Rectangle::full(nx, ny)
    } else {
        Rectangle { s, t }
    };
    Ok(DiscResult {
        value: rectangle_discrepancy(f, mu, &witness)?,
        witness,
        method: DiscMethod::Greedy,
    })
}

fn pick(sums: &[f64], prev: &[bool]) -> (f64, Vec<bool>) {
    let (v, positive) = sign_rule(sums);
    let chosen = sums
        .iter()
        .zip(prev)
        .map(|(&s, &was)| {
            if s == 0.0 {
                was
            } else {
                (s > 0.0) == positive
            }
        })
        .collect();
    (v, chosen)
}

fn climb(weight: &[f64], nx: usize, ny: usize, mut s: Vec<bool>) -> (f64, Vec<usize>, Vec<usize>) {
    let mut t = vec![false; ny];
    let mut value = 0.0;
    for _ in 0..GREEDY_MAX_ROUNDS {
        let col_sums: Vec<f64> = (0..ny)
            .map(|y| (0..nx).filter(|&x| s[x]).map(|x| weight[x * ny + y]).sum())
            .collect();
        let (_, new_t) = pick(&col_sums, &t);
        let row_sums: Vec<f64> = (0..nx)
            .map(|x| (0..ny).filter(|&y| new_t[y]).map(|y| weight[x * ny + y]).sum())
            .collect();
        let (v, new_s) = pick(&row_sums, &s);
        let settled = new_s == s && new_t == t;
        s = new_s;
        t = new_t;
        value = v;
        if settled {
            break;
        }
    }
    let members = |m: &[bool]| m.iter().enumerate().filter(|p| *p.1).map(|p| p.0).collect();
    (value, members(&s), members(&t))
}

/// `log2(2 eps / disc)`: a lower bound on the communication needed to reach
/// advantage `eps` under the distribution.
pub fn cc_lower_bound(eps: f64, disc: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Parameter(format!("eps must be in (0, 1/2], got {eps}")));
    }
    if !(disc > 0.0 && disc <= 1.0) {
        return Err(Error::Parameter(format!("disc must be in (0, 1], got {disc}")));
    }
    Ok((2.0 * eps).log2() - disc.log2())
}

/// Leading constant of the GT bounds.
pub const GT_CONSTANT: f64 = 20.0;
pub const GT_EXACT_MAX_N: u32 = 4;
pub const GT_SWEEP_MAX_N: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GtMode {
    Exact,
    Greedy,
    RectangleSweep,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GtBoundReport {
    pub n: u32,
    pub mode: GtMode,
    /// Disc value found (exact, greedy, or the sweep's maximum).
    pub value: f64,
    /// `constant / sqrt(n)`.
    pub bound: f64,
    /// Rectangles checked against `constant * sqrt(s t) / sqrt(n)` in sweep mode.
    pub rectangles_checked: u64,
    /// Largest `Disc(R) / (constant * sqrt(s t) / sqrt(n))` seen in sweep mode.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Checks the GT discrepancy bounds under `mu_n`.
///
/// `restarts` is only used in greedy mode.
pub fn verify_gt_bounds(n: u32, mode: GtMode, constant: f64, restarts: usize, seed: u64) -> Result<GtBoundReport> {
    let mu = GtMeasure::new(n)?;
    let f = crate::table::gt_function(n)?;
    let bound = constant / f64::from(n).sqrt();
    let mut report = GtBoundReport {
        n,
        mode,
        value: 0.0,
        bound,
        rectangles_checked: 0,
        worst_ratio: 0.0,
        pass: false,
    };
    match mode {
        GtMode::Exact => {
            if n > GT_EXACT_MAX_N {
                return Err(Error::SizeCap(format!("exact GT check needs n <= {GT_EXACT_MAX_N}")));
            }
            report.value = discrepancy_exact(&f, &mu)?.value;
            report.pass = report.value < bound;
        }
        GtMode::Greedy => {
            report.value = discrepancy_greedy(&f, &mu, restarts, seed)?.value;
            report.pass = report.value < bound;
        }
        GtMode::RectangleSweep => {
            if n > GT_SWEEP_MAX_N {
                return Err(Error::SizeCap(format!("rectangle sweep needs n <= {GT_SWEEP_MAX_N}")));
            }
            let size = 1usize << n;
            let scale = constant / f64::from(n).sqrt();
            let per_s = par::map_range((1usize << size) - 1, |i| {
                let s = (i + 1) as u64;
                let rows = mask_members(s);
                let cols: Vec<f64> = (0..size)
                    .map(|y| rows.iter().map(|&x| signed(&f, &mu, x, y)).sum())
                    .collect();
                let frac_s = rows.len() as f64 / size as f64;
                let mut worst = (0.0f64, 0.0f64, true);
                for t in 1..1u64 << size {
                    let members = mask_members(t);
                    let v = members.iter().map(|&y| cols[y]).sum::<f64>().abs();
                    let frac_t = members.len() as f64 / size as f64;
                    let limit = scale * (frac_s * frac_t).sqrt();
                    worst.0 = worst.0.max(v);
                    worst.1 = worst.1.max(v / limit);
                    worst.2 &= v < limit;
                }
                worst
            });
            report.rectangles_checked = ((1u64 << size) - 1).pow(2);
            let mut all_below = true;
            for (v, ratio, ok) in per_s {
                report.value = report.value.max(v);
                report.worst_ratio = report.worst_ratio.max(ratio);
                all_below &= ok;
            }
            report.pass = all_below && report.value < bound;
        }
    }
    Ok(report)
}
