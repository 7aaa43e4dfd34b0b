//! Named or file-backed functions, distributions and protocols.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use infodisc::discrepancy::gt_distribution;
use infodisc::protocol::{self, BuiltinParams};
use infodisc::table;
use infodisc::{FuncTable, PairDist, PublicCoinProtocol};

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// `gt`, `ip`, `xor` or `random` on `n` bits, otherwise a table file.
pub fn function(spec: &str, n: Option<u32>, seed: u64) -> Result<FuncTable> {
    let need_n = || n.with_context(|| format!("--function {spec} needs --n"));
    Ok(match spec {
        "gt" => table::gt_function(need_n()?)?,
        "ip" => table::ip_function(need_n()?)?,
        "xor" => table::xor_function(need_n()?)?,
        "random" => table::random_function(need_n()?, seed)?,
        path => FuncTable::from_json(&read(Path::new(path))?)
            .with_context(|| format!("loading function table {path}"))?,
    })
}

/// `uniform` or `gtmu` (needs `n`), otherwise a distribution file of shape `nx x ny`.
pub fn distribution(spec: &str, n: Option<u32>, nx: usize, ny: usize) -> Result<PairDist> {
    Ok(match spec {
        "uniform" => PairDist::uniform(nx, ny)?,
        "gtmu" => {
            let n = n.context("--dist gtmu needs --n")?;
            let mu = gt_distribution(n)?;
            if mu.nx() != nx || mu.ny() != ny {
                bail!("gtmu on {n} bits is {}x{}, inputs are {nx}x{ny}", mu.nx(), mu.ny());
            }
            mu
        }
        path => {
            let mu = PairDist::from_json(&read(Path::new(path))?, Some((nx, ny)))
                .with_context(|| format!("loading distribution {path}"))?;
            if mu.nx() != nx || mu.ny() != ny {
                bail!("distribution {path} is {}x{}, inputs are {nx}x{ny}", mu.nx(), mu.ny());
            }
            mu
        }
    })
}

/// `builtin:NAME` or a protocol file.
pub fn protocol(spec: &str, params: &BuiltinParams) -> Result<PublicCoinProtocol> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok(protocol::builtin(name, params)?);
    }
    PublicCoinProtocol::from_json(&read(Path::new(spec))?).with_context(|| format!("loading protocol {spec}"))
}

pub fn bits_of(side: usize) -> Option<u32> {
    side.is_power_of_two().then(|| side.trailing_zeros())
}
