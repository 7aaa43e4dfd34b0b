//! Binomial intervals and chi-square tests for Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum expected count per cell before cells are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    /// `sqrt(p (1 - p) / n)` at the observed rate.
    pub std_error: f64,
    /// Wilson score interval at `z`.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64, z: f64) -> Proportion {
        assert!(successes <= trials, "more successes than trials");
        if trials == 0 {
            return Proportion {
                successes,
                trials,
                rate: 0.0,
                std_error: 0.0,
                ci_low: 0.0,
                ci_high: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let (ci_low, ci_high) = wilson(successes, trials, z);
        Proportion {
            successes,
            trials,
            rate: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            ci_low,
            ci_high,
        }
    }

    /// Whether `value` lies within `k` binomial standard deviations, using the
    /// hypothesised value's own variance so a zero observed variance cannot
    /// make the check vacuous.
    pub fn within_sigmas(&self, value: f64, k: f64) -> bool {
        let n = self.trials as f64;
        let sigma = (value * (1.0 - value) / n).sqrt().max(self.std_error);
        (self.rate - value).abs() <= k * sigma + f64::EPSILON
    }
}

/// Wilson score interval for `successes / trials`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells after pooling small expectations.
    pub cells: usize,
}

impl ChiSquare {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    if statistic.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic)
}

/// Goodness of fit of `observed` counts against `expected` probabilities.
///
/// Cells with expected count below [`MIN_EXPECTED`] are pooled together; if
/// the pool is still small it is merged into the smallest remaining cell. A
/// count in a cell of zero probability gives an infinite statistic.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::Dimension(format!(
            "{} observed cells but {} expected",
            observed.len(),
            expected.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    let total: f64 = expected.iter().sum();
    if n == 0 || total <= 0.0 {
        return Err(Error::Parameter("chi-square test needs counts and mass".into()));
    }
    let nf = n as f64;
    if observed
        .iter()
        .zip(expected)
        .any(|(&o, &e)| o > 0 && e <= 0.0)
    {
        return Ok(ChiSquare {
            statistic: f64::INFINITY,
            dof: expected.iter().filter(|&&e| e > 0.0).count().saturating_sub(1),
            p_value: 0.0,
            cells: expected.len(),
        });
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        let exp_count = e / total * nf;
        if exp_count <= 0.0 {
            continue;
        }
        if exp_count < MIN_EXPECTED {
            pool.0 += o as f64;
            pool.1 += exp_count;
        } else {
            cells.push((o as f64, exp_count));
        }
    }
    if pool.1 > 0.0 {
        if pool.1 >= MIN_EXPECTED || cells.is_empty() {
            cells.push(pool);
        } else {
            let smallest = cells
                .iter_mut()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            smallest.0 += pool.0;
            smallest.1 += pool.1;
        }
    }
    let statistic = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
        cells: cells.len(),
    })
}

/// Homogeneity test: were both count vectors drawn from the same distribution?
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(Error::Dimension("count vectors differ in length".into()));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Parameter("chi-square test needs counts in both samples".into()));
    }
    let n = na + nb;
    let mut statistic = 0.0;
    let mut used: usize = 0;
    let mut pool = (0.0, 0.0);
    let add = |oa: f64, ob: f64, statistic: &mut f64| {
        let col = oa + ob;
        let (ea, eb) = (na * col / n, nb * col / n);
        *statistic += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    };
    for (&oa, &ob) in a.iter().zip(b) {
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        if na.min(nb) * col / n < MIN_EXPECTED {
            pool.0 += oa as f64;
            pool.1 += ob as f64;
        } else {
            add(oa as f64, ob as f64, &mut statistic);
            used += 1;
        }
    }
    if pool.0 + pool.1 > 0.0 {
        add(pool.0, pool.1, &mut statistic);
        used += 1;
    }
    let dof = used.saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
        cells: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_rate() {
        let (lo, hi) = wilson(50, 100, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!((hi - lo - 0.192).abs() < 0.005);
        let p = Proportion::new(10, 10, 4.0);
        assert_eq!(p.rate, 1.0);
        assert_eq!(p.std_error, 0.0);
        assert!(p.within_sigmas(1.0, 4.0));
        assert!(!Proportion::new(0, 10_000, 4.0).within_sigmas(0.5, 4.0));
    }

    #[test]
    fn chi_square_accepts_a_fit_and_rejects_a_misfit() {
        let fit = chi_square_test(&[250, 250, 500], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(fit.statistic, 0.0);
        assert_eq!(fit.dof, 2);
        assert!(fit.passes(0.001));
        let bad = chi_square_test(&[400, 100, 500], &[0.25, 0.25, 0.5]).unwrap();
        assert!(!bad.passes(0.001));
        let impossible = chi_square_test(&[1, 9], &[0.0, 1.0]).unwrap();
        assert_eq!(impossible.p_value, 0.0);
    }

    #[test]
    fn small_cells_are_pooled() {
        let r = chi_square_test(&[1000, 1, 2], &[0.997, 0.001, 0.002]).unwrap();
        assert_eq!(r.cells, 1);
        assert_eq!(r.dof, 0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn two_sample_test() {
        let same = chi_square_two_sample(&[100, 200, 300], &[100, 200, 300]).unwrap();
        assert_eq!(same.statistic, 0.0);
        let diff = chi_square_two_sample(&[300, 200, 100], &[100, 200, 300]).unwrap();
        assert!(!diff.passes(0.001));
    }
}
