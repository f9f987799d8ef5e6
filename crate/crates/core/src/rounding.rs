//! Independent randomized rounding of fractional rows.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rat::Rat;

/// Recorded with every assignment so experiments replay bit-exactly.
pub const GENERATOR: &str = "chacha20-u64-inverse-cdf-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralAssignment {
    /// Machine id per job.
    pub assign: Vec<usize>,
    pub seed: u64,
    pub generator: String,
    pub loads: Vec<Rat>,
    /// `loads[i] / s_i`.
    pub completion: Vec<Rat>,
}

impl IntegralAssignment {
    pub fn makespan(&self) -> Rat {
        self.completion.iter().max().cloned().unwrap_or_else(Rat::zero)
    }
}

/// Precomputed inverse-CDF tables for a fixed set of rows.
///
/// A draw `u` is a uniform 64-bit integer read as the rational `u / 2^64`.
/// Machine `i` is chosen when `cum_{<i} ≤ u/2^64 < cum_{≤i}`; with integer
/// thresholds `⌈cum · 2^64⌉` that comparison is exact.
#[derive(Debug, Clone)]
pub struct RowSampler {
    tables: Vec<Vec<(usize, u128)>>,
}

impl RowSampler {
    pub fn new<R: AsRef<[(usize, Rat)]>>(rows: &[R]) -> Result<Self> {
        let scale = BigInt::from(1u8) << 64usize;
        let mut tables = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            let mut cum = Rat::zero();
            let mut table = Vec::with_capacity(row.len());
            for (i, x) in row {
                if x.is_negative() {
                    return Err(Error::Invariant(format!("row {j}: negative fraction on machine {i}")));
                }
                if x.is_zero() {
                    continue;
                }
                cum += x;
                let scaled = cum.numer() * &scale;
                let (q, r) = num_integer::Integer::div_rem(&scaled, cum.denom());
                let ceil = if r == BigInt::from(0u8) { q } else { q + 1u8 };
                table.push((*i, ceil.to_u128().expect("cumulative fraction at most 1")));
            }
            if cum != Rat::one() {
                return Err(Error::Invariant(format!("row {j} sums to {cum}, not 1")));
            }
            tables.push(table);
        }
        Ok(RowSampler { tables })
    }

    pub fn sample(&self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.tables
            .iter()
            .map(|table| {
                let u = rng.next_u64() as u128;
                table
                    .iter()
                    .find(|(_, t)| u < *t)
                    .map(|(i, _)| *i)
                    .expect("last threshold is 2^64")
            })
            .collect()
    }
}

/// Sample each job's machine from its row with a seeded generator.
///
/// ```
/// use selfish_lb::{rounding::round_independent, Rat};
/// let rows = vec![vec![(0, Rat::one())], vec![(0, Rat::new(4, 5)), (1, Rat::new(1, 5))]];
/// let a = round_independent(&rows, &[Rat::from_int(16), Rat::from_int(4)], &[Rat::from_int(17), Rat::from_int(7)], 7).unwrap();
/// assert_eq!(a.assign[0], 0);
/// assert_eq!(a, round_independent(&rows, &[Rat::from_int(16), Rat::from_int(4)], &[Rat::from_int(17), Rat::from_int(7)], 7).unwrap());
/// ```
pub fn round_independent<R: AsRef<[(usize, Rat)]>>(
    rows: &[R],
    sizes: &[Rat],
    speeds: &[Rat],
    seed: u64,
) -> Result<IntegralAssignment> {
    let sampler = RowSampler::new(rows)?;
    Ok(assignment_from(sampler.sample(seed), sizes, speeds, seed))
}

pub fn assignment_from(assign: Vec<usize>, sizes: &[Rat], speeds: &[Rat], seed: u64) -> IntegralAssignment {
    let mut loads = vec![Rat::zero(); speeds.len()];
    for (p, &i) in sizes.iter().zip(&assign) {
        loads[i] += p;
    }
    let completion = loads.iter().zip(speeds).map(|(l, s)| l / s).collect();
    IntegralAssignment {
        assign,
        seed,
        generator: GENERATOR.to_string(),
        loads,
        completion,
    }
}

/// `L_i = Σ_j X[j][i]·p_j`.
pub fn expected_loads<R: AsRef<[(usize, Rat)]>>(rows: &[R], sizes: &[Rat], m: usize) -> Vec<Rat> {
    let mut loads = vec![Rat::zero(); m];
    for (row, p) in rows.iter().zip(sizes) {
        for (i, x) in row.as_ref() {
            loads[*i] += x * p;
        }
    }
    loads
}
