//! Finite distributions and exact information measures in bits.
//!
//! Conventions applied before any floating evaluation: `0 * log(0/q) = 0` and
//! `p * log(p/0) = +inf`. Distributions are validated once at construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::ExtReal;

/// Absolute tolerance for normalization and exact-identity checks.
pub const TOLERANCE: f64 = 1e-9;

pub(crate) fn check_masses(mass: &[f64]) -> Result<()> {
    if mass.is_empty() {
        return Err(Error::Dimension("universe size must be positive".into()));
    }
    let mut total = 0.0;
    for (index, &value) in mass.iter().enumerate() {
        if !(value.is_finite() && (0.0..=1.0 + TOLERANCE).contains(&value)) {
            return Err(Error::InvalidMass { index, value });
        }
        total += value;
    }
    if (total - 1.0).abs() > TOLERANCE {
        return Err(Error::Normalization {
            total,
            deficit: 1.0 - total,
        });
    }
    Ok(())
}

/// A probability distribution over `0..size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    mass: Vec<f64>,
}

/// Reports carry distributions as dense mass vectors.
impl Serialize for Dist {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.mass.serialize(s)
    }
}

impl Dist {
    /// Validates and wraps `mass`; nothing is renormalized.
    pub fn new(mass: Vec<f64>) -> Result<Dist> {
        check_masses(&mass)?;
        Ok(Dist { mass })
    }

    /// Normalizes nonnegative weights. Used by generators, never by loaders.
    pub fn from_weights(weights: &[f64]) -> Result<Dist> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Parameter(format!(
                "weights must be nonnegative with positive finite sum, got total {total}"
            )));
        }
        Dist::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(size: usize) -> Result<Dist> {
        if size == 0 {
            return Err(Error::Dimension("universe size must be positive".into()));
        }
        Ok(Dist {
            mass: vec![1.0 / size as f64; size],
        })
    }

    pub fn point(size: usize, at: usize) -> Result<Dist> {
        if at >= size {
            return Err(Error::OutOfRange(format!("point {at} outside universe {size}")));
        }
        let mut mass = vec![0.0; size];
        mass[at] = 1.0;
        Ok(Dist { mass })
    }

    pub fn size(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.mass
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DistFile::from_masses(&self.mass, None)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Dist> {
        let file: DistFile = serde_json::from_str(text)?;
        Dist::new(file.dense()?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistFile {
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<[usize; 2]>,
    mass: BTreeMap<String, f64>,
}

impl DistFile {
    fn from_masses(mass: &[f64], shape: Option<[usize; 2]>) -> DistFile {
        DistFile {
            size: mass.len(),
            shape,
            mass: mass
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(i, p)| (i.to_string(), *p))
                .collect(),
        }
    }

    fn dense(&self) -> Result<Vec<f64>> {
        let mut mass = vec![0.0; self.size];
        for (key, &p) in &self.mass {
            let i: usize = key
                .parse()
                .map_err(|_| Error::Parameter(format!("mass key `{key}` is not an index")))?;
            if i >= self.size {
                return Err(Error::OutOfRange(format!(
                    "mass index {i} outside universe {}",
                    self.size
                )));
            }
            mass[i] = p;
        }
        Ok(mass)
    }
}

/// A distribution over `X x Y`, indexed `x * ny + y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDist {
    nx: usize,
    ny: usize,
    dist: Dist,
}

impl PairDist {
    pub fn new(nx: usize, ny: usize, dist: Dist) -> Result<PairDist> {
        if nx * ny != dist.size() {
            return Err(Error::Dimension(format!(
                "{nx}x{ny} pair distribution needs {} masses, got {}",
                nx * ny,
                dist.size()
            )));
        }
        Ok(PairDist { nx, ny, dist })
    }

    pub fn from_table(rows: &[Vec<f64>]) -> Result<PairDist> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ny) {
            return Err(Error::Dimension("ragged mass table".into()));
        }
        PairDist::new(nx, ny, Dist::new(rows.concat())?)
    }

    pub fn uniform(nx: usize, ny: usize) -> Result<PairDist> {
        PairDist::new(nx, ny, Dist::uniform(nx * ny)?)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn mass(&self, x: usize, y: usize) -> f64 {
        self.dist.mass(x * self.ny + y)
    }

    pub fn dist(&self) -> &Dist {
        &self.dist
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|x| (0..self.ny).map(|y| self.mass(x, y)).sum())
            .collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|y| (0..self.nx).map(|x| self.mass(x, y)).sum())
            .collect()
    }

    /// Pairs with positive mass, row-major.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let ny = self.ny;
        self.dist.support().map(move |(i, p)| (i / ny, i % ny, p))
    }

    pub fn transpose(&self) -> PairDist {
        let mut mass = vec![0.0; self.nx * self.ny];
        for x in 0..self.nx {
            for y in 0..self.ny {
                mass[y * self.nx + x] = self.mass(x, y);
            }
        }
        PairDist {
            nx: self.ny,
            ny: self.nx,
            dist: Dist { mass },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DistFile::from_masses(
            self.dist.masses(),
            Some([self.nx, self.ny]),
        ))
        .expect("serializable")
    }

    /// Parses `{"size", "shape": [nx, ny], "mass"}`. Without `shape`, `default_shape` is used.
    pub fn from_json(text: &str, default_shape: Option<(usize, usize)>) -> Result<PairDist> {
        let file: DistFile = serde_json::from_str(text)?;
        let (nx, ny) = match (file.shape, default_shape) {
            (Some([nx, ny]), _) => (nx, ny),
            (None, Some(s)) => s,
            (None, None) => {
                return Err(Error::Dimension(
                    "pair distribution needs a `shape` field".into(),
                ))
            }
        };
        PairDist::new(nx, ny, Dist::new(file.dense()?)?)
    }
}

/// A named coordinate of a [`JointDist`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

/// A dense joint distribution over named axes; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDist {
    axes: Vec<Axis>,
    mass: Vec<f64>,
}

/// Above this many cells a joint table is refused.
pub const JOINT_CELL_CAP: usize = 1 << 26;

impl JointDist {
    pub fn new(axes: Vec<Axis>, mass: Vec<f64>) -> Result<JointDist> {
        let cells = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.size));
        match cells {
            Some(n) if n == mass.len() && n > 0 => {}
            Some(n) => {
                return Err(Error::Dimension(format!(
                    "joint table needs {n} cells, got {}",
                    mass.len()
                )))
            }
            None => return Err(Error::SizeCap("joint table too large".into())),
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Parameter(format!("duplicate axis `{}`", a.name)));
            }
        }
        check_masses(&mass)?;
        Ok(JointDist { axes, mass })
    }

    /// Builds a table of `sizes` by evaluating `f` at every coordinate tuple.
    pub fn from_fn(
        axes: &[(&str, usize)],
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<JointDist> {
        let axes: Vec<Axis> = axes
            .iter()
            .map(|&(n, s)| Axis {
                name: n.to_string(),
                size: s,
            })
            .collect();
        let cells = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.size))
            .filter(|&n| n <= JOINT_CELL_CAP)
            .ok_or_else(|| Error::SizeCap(format!("joint table over {JOINT_CELL_CAP} cells")))?;
        let mut idx = vec![0usize; axes.len()];
        let mut mass = Vec::with_capacity(cells);
        for _ in 0..cells {
            mass.push(f(&idx));
            for k in (0..axes.len()).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].size {
                    break;
                }
                idx[k] = 0;
            }
        }
        JointDist::new(axes, mass)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis(name.to_string()))
    }

    /// Marginal onto `names` (in the given order, duplicates collapsed).
    pub fn marginal(&self, names: &[&str]) -> Result<JointDist> {
        let mut keep: Vec<usize> = Vec::new();
        for n in names {
            let i = self.axis_index(n)?;
            if !keep.contains(&i) {
                keep.push(i);
            }
        }
        let axes: Vec<Axis> = keep.iter().map(|&i| self.axes[i].clone()).collect();
        if axes.is_empty() {
            return Ok(JointDist {
                axes,
                mass: vec![1.0],
            });
        }
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.size).collect();
        let out_sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut out = vec![0.0; out_sizes.iter().product()];
        let mut idx = vec![0usize; sizes.len()];
        for &p in &self.mass {
            if p > 0.0 {
                let mut o = 0;
                for (k, &i) in keep.iter().enumerate() {
                    o = o * out_sizes[k] + idx[i];
                }
                out[o] += p;
            }
            for k in (0..sizes.len()).rev() {
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(JointDist { axes, mass: out })
    }

    /// Marginal onto a single axis as a [`Dist`].
    pub fn marginal_dist(&self, name: &str) -> Result<Dist> {
        Ok(Dist {
            mass: self.marginal(&[name])?.mass,
        })
    }

    /// Joint entropy of the axes in `names`.
    pub fn entropy_of(&self, names: &[&str]) -> Result<f64> {
        Ok(entropy_of_masses(&self.marginal(names)?.mass))
    }

    pub fn to_json(&self) -> String {
        let mut mass = BTreeMap::new();
        let sizes: Vec<usize> = self.axes.iter().map(|a| a.size).collect();
        let mut idx = vec![0usize; sizes.len()];
        for &p in &self.mass {
            if p != 0.0 {
                let key: Vec<String> = idx.iter().map(usize::to_string).collect();
                mass.insert(key.join(","), p);
            }
            for k in (0..sizes.len()).rev() {
                idx[k] += 1;
                if idx[k] < sizes[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        serde_json::to_string(&JointFile {
            axes: self.axes.clone(),
            mass,
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<JointDist> {
        let file: JointFile = serde_json::from_str(text)?;
        let sizes: Vec<usize> = file.axes.iter().map(|a| a.size).collect();
        let cells = sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&n| n <= JOINT_CELL_CAP)
            .ok_or_else(|| Error::SizeCap("joint table too large".into()))?;
        let mut mass = vec![0.0; cells];
        for (key, p) in file.mass {
            let coords: Vec<usize> = key
                .split(',')
                .map(|c| c.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parameter(format!("bad joint key `{key}`")))?;
            if coords.len() != sizes.len() || coords.iter().zip(&sizes).any(|(c, s)| c >= s) {
                return Err(Error::OutOfRange(format!("joint key `{key}`")));
            }
            let flat = coords.iter().zip(&sizes).fold(0, |acc, (c, s)| acc * s + c);
            mass[flat] = p;
        }
        JointDist::new(file.axes, mass)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    axes: Vec<Axis>,
    mass: BTreeMap<String, f64>,
}

fn entropy_of_masses(mass: &[f64]) -> f64 {
    mass.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

fn same_universe(a: &Dist, b: &Dist) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Dimension(format!(
            "universes differ: {} vs {}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// Half the L1 distance.
pub fn statistical_distance(d: &Dist, f: &Dist) -> Result<f64> {
    same_universe(d, f)?;
    Ok(0.5
        * d.mass
            .iter()
            .zip(&f.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

pub fn entropy(d: &Dist) -> f64 {
    entropy_of_masses(&d.mass)
}

/// `H(target | given)`.
pub fn conditional_entropy(j: &JointDist, target: &[&str], given: &[&str]) -> Result<f64> {
    let both: Vec<&str> = target.iter().chain(given).copied().collect();
    let h = j.entropy_of(&both)? - j.entropy_of(given)?;
    Ok(h.max(0.0))
}

/// `I(a; b | given)`.
pub fn mutual_information(j: &JointDist, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
    let bg: Vec<&str> = b.iter().chain(given).copied().collect();
    let i = conditional_entropy(j, a, given)? - conditional_entropy(j, a, &bg)?;
    Ok(i.max(0.0))
}

/// `D(a || b)` in bits; `+inf` when `a` has mass outside the support of `b`.
pub fn kl_divergence(a: &Dist, b: &Dist) -> Result<ExtReal> {
    same_universe(a, b)?;
    Ok(divergence_of_masses(&a.mass, &b.mass))
}

pub(crate) fn divergence_of_masses(a: &[f64], b: &[f64]) -> ExtReal {
    let mut total = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        if p <= 0.0 {
            continue;
        }
        if q <= 0.0 {
            return ExtReal::INFINITY;
        }
        total += p * (p.log2() - q.log2());
    }
    ExtReal::from_f64(total.max(0.0))
}

/// Both sides of `I(A;B|C) = E_{a,c}[ D(B_ac || B_c) ]`.
pub fn mi_as_expected_divergence(j: &JointDist, a: &str, b: &str, c: &str) -> Result<(f64, f64)> {
    let lhs = mutual_information(j, &[a], &[b], &[c])?;
    let abc = j.marginal(&[a, b, c])?;
    let (na, nb, nc) = (abc.axes[0].size, abc.axes[1].size, abc.axes[2].size);
    let m = |ia: usize, ib: usize, ic: usize| abc.mass[(ia * nb + ib) * nc + ic];
    let mut rhs = 0.0;
    for ic in 0..nc {
        let p_c: f64 = (0..na).flat_map(|ia| (0..nb).map(move |ib| (ia, ib))).map(|(ia, ib)| m(ia, ib, ic)).sum();
        if p_c <= 0.0 {
            continue;
        }
        let b_c: Vec<f64> = (0..nb)
            .map(|ib| (0..na).map(|ia| m(ia, ib, ic)).sum::<f64>() / p_c)
            .collect();
        for ia in 0..na {
            let p_ac: f64 = (0..nb).map(|ib| m(ia, ib, ic)).sum();
            if p_ac <= 0.0 {
                continue;
            }
            let b_ac: Vec<f64> = (0..nb).map(|ib| m(ia, ib, ic) / p_ac).collect();
            rhs += p_ac * divergence_of_masses(&b_ac, &b_c).to_f64();
        }
    }
    Ok((lhs, rhs))
}

/// Mass of `{x : 2^((i+1)/eps) * nu(x) < mu(x)}`.
pub fn divergence_tail_mass(mu: &Dist, nu: &Dist, i: f64, eps: f64) -> Result<f64> {
    same_universe(mu, nu)?;
    if i.is_nan() || i < 0.0 || eps.is_nan() || eps <= 0.0 || eps > 1.0 {
        return Err(Error::Parameter(format!(
            "need i >= 0 and eps in (0, 1], got i={i}, eps={eps}"
        )));
    }
    let scale = ExtReal::exp2((i + 1.0) / eps);
    Ok(mu
        .mass
        .iter()
        .zip(&nu.mass)
        .filter(|(&m, &n)| m > 0.0 && scale * ExtReal::from_f64(n) < ExtReal::from_f64(m))
        .map(|(&m, _)| m)
        .sum())
}
