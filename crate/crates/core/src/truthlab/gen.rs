//! Seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::mechanism::Mechanism;
use crate::model::{level_count, Instance};
use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SizeDist {
    /// `(1 + r/256)·2^e` with `e ∈ [-8, 7]`; with probability `boundary` a later
    /// job instead lands within `2^-t` (relative) of a level boundary `p₁·2^a`.
    Dyadic { boundary: f64 },
    /// `a/b` with `a ≤ 4096` and `b ≤ 97`, rarely a power of two.
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedDist {
    /// `a/b` with `a ≤ 64`, `b ≤ 8`.
    Rational,
    /// `2^e` with `e ∈ [-3, 6]`.
    Dyadic,
    /// `1..=64`.
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub trials: usize,
    /// Inclusive.
    pub m_range: (usize, usize),
    /// Inclusive.
    pub n_range: (usize, usize),
    pub sizes: SizeDist,
    pub speeds: SpeedDist,
    pub seed: u64,
    pub mechanism: Mechanism,
    /// Minimize every violating instance.
    pub shrink: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            trials: 100,
            m_range: (1, 16),
            n_range: (1, 50),
            sizes: SizeDist::Dyadic { boundary: 0.25 },
            speeds: SpeedDist::Rational,
            seed: 0,
            mechanism: Mechanism::Makespan,
            shrink: false,
        }
    }
}

impl FuzzConfig {
    pub fn instance(&self, trial: usize) -> Instance {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        random_instance(&mut rng, self)
    }
}

fn pick(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo.max(1)..=hi.max(lo.max(1)))
}

fn dyadic_size(rng: &mut impl Rng) -> Rat {
    let mant = Rat::new(256 + rng.gen_range(0..256), 256);
    mant.mul_pow2(rng.gen_range(-8..=7))
}

pub fn random_instance(rng: &mut impl Rng, cfg: &FuzzConfig) -> Instance {
    let m = pick(rng, cfg.m_range);
    let n = pick(rng, cfg.n_range);
    let speeds: Vec<Rat> = (0..m)
        .map(|_| match cfg.speeds {
            SpeedDist::Rational => Rat::new(rng.gen_range(1..=64), rng.gen_range(1..=8)),
            SpeedDist::Dyadic => Rat::pow2(rng.gen_range(-3..=6)),
            SpeedDist::Integer => Rat::from_int(rng.gen_range(1..=64)),
        })
        .collect();
    let k = level_count(m) as i64;
    let mut jobs: Vec<Rat> = Vec::with_capacity(n);
    for j in 0..n {
        let p = match cfg.sizes {
            SizeDist::Rational => Rat::new(rng.gen_range(1..=4096), rng.gen_range(1..=97)),
            SizeDist::Dyadic { boundary } if j > 0 && rng.gen_bool(boundary) => {
                let edge = jobs[0].mul_pow2(rng.gen_range(-(k + 1)..=1));
                let nudge = Rat::pow2(-rng.gen_range(2..=20));
                match rng.gen_range(0..3) {
                    0 => &edge - &edge * &nudge,
                    1 => edge,
                    _ => &edge + &edge * &nudge,
                }
            }
            SizeDist::Dyadic { .. } => dyadic_size(rng),
        };
        jobs.push(p);
    }
    Instance::new(speeds, jobs).expect("generated values are positive")
}
