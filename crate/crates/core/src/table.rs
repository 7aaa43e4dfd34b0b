//! Boolean functions on `X x Y` as explicit tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest bit length for generated `n`-bit tables (`4^n` cells).
pub const MAX_TABLE_BITS: u32 = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncTable {
    nx: usize,
    ny: usize,
    bits: Vec<u8>,
}

impl FuncTable {
    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> bool) -> Result<FuncTable> {
        if nx == 0 || ny == 0 {
            return Err(Error::Dimension("function table needs nonempty sides".into()));
        }
        let bits = (0..nx)
            .flat_map(|x| (0..ny).map(move |y| (x, y)))
            .map(|(x, y)| f(x, y) as u8)
            .collect();
        Ok(FuncTable { nx, ny, bits })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<FuncTable> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if nx == 0 || ny == 0 || rows.iter().any(|r| r.len() != ny) {
            return Err(Error::Dimension("function table must be a full rectangle".into()));
        }
        if let Some(v) = rows.iter().flatten().find(|&&b| b > 1) {
            return Err(Error::Parameter(format!("table entries must be 0/1, got {v}")));
        }
        Ok(FuncTable {
            nx,
            ny,
            bits: rows.concat(),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[x * self.ny + y]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.ny).map(<[u8]>::to_vec).collect()
    }

    pub fn transpose(&self) -> FuncTable {
        FuncTable::from_fn(self.ny, self.nx, |y, x| self.get(x, y) == 1).expect("nonempty")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TableFile {
            x_size: self.nx,
            y_size: self.ny,
            rows: self.rows(),
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<FuncTable> {
        let file: TableFile = serde_json::from_str(text)?;
        let t = FuncTable::from_rows(&file.rows)?;
        if t.nx != file.x_size || t.ny != file.y_size {
            return Err(Error::Dimension(format!(
                "declared {}x{} but rows are {}x{}",
                file.x_size, file.y_size, t.nx, t.ny
            )));
        }
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    x_size: usize,
    y_size: usize,
    rows: Vec<Vec<u8>>,
}

fn check_bits(n: u32) -> Result<usize> {
    if n == 0 || n > MAX_TABLE_BITS {
        return Err(Error::SizeCap(format!(
            "n must be in 1..={MAX_TABLE_BITS} for explicit tables, got {n}"
        )));
    }
    Ok(1usize << n)
}

/// `GT_n(x, y) = 1` iff `x > y`, bits read MSB-first (integer order).
pub fn gt_function(n: u32) -> Result<FuncTable> {
    let size = check_bits(n)?;
    FuncTable::from_fn(size, size, |x, y| x > y)
}

/// Inner product mod 2.
pub fn ip_function(n: u32) -> Result<FuncTable> {
    let size = check_bits(n)?;
    FuncTable::from_fn(size, size, |x, y| (x & y).count_ones() % 2 == 1)
}

/// Parity of `x XOR y`.
pub fn xor_function(n: u32) -> Result<FuncTable> {
    let size = check_bits(n)?;
    FuncTable::from_fn(size, size, |x, y| (x ^ y).count_ones() % 2 == 1)
}

pub fn constant_function(nx: usize, ny: usize, value: bool) -> Result<FuncTable> {
    FuncTable::from_fn(nx, ny, |_, _| value)
}

/// A uniformly random table, reproducible from `seed`.
pub fn random_function(n: u32, seed: u64) -> Result<FuncTable> {
    let size = check_bits(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..size * size).map(|_| rng.gen()).collect();
    FuncTable::from_fn(size, size, |x, y| bits[x * size + y])
}
