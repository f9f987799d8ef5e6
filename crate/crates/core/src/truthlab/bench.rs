use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqnorm::{lq_norm, QParam};
use crate::mechanism::Mechanism;
use crate::model::{level_count, Instance};
use crate::oracles::{lb_lq, lb_makespan, opt_lq_bruteforce, opt_makespan_bruteforce};
use crate::rat::Rat;
use crate::rounding::RowSampler;

use super::audit::audit_outcome;
use super::gen::FuzzConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    Bruteforce,
    Lb,
    None,
}

impl std::str::FromStr for OracleChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bruteforce" => Ok(OracleChoice::Bruteforce),
            "lb" => Ok(OracleChoice::Lb),
            "none" => Ok(OracleChoice::None),
            _ => Err(Error::InvalidInput(format!(
                "unknown oracle {s:?}; expected bruteforce, lb or none"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub fuzz: FuzzConfig,
    pub oracle: OracleChoice,
    /// Independent roundings per instance.
    pub rounds: usize,
}

/// One benchmark instance. Exact values are strings, empty when unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub q: String,
    pub obj_fractional: f64,
    pub obj_rounded_mean: f64,
    pub obj_rounded_max: f64,
    pub oracle: String,
    pub ratio: f64,
    pub trial: usize,
    pub obj_fractional_exact: String,
    pub oracle_value: f64,
    pub oracle_exact: String,
    pub rounded_ratio_mean: f64,
    /// 99th percentile of rounded over fractional objective.
    pub rounded_over_fractional_p99: f64,
    /// `16K + 8` for the makespan objective.
    pub envelope: Option<f64>,
    pub feasibility_violations: usize,
}

fn objective(completions: &[Rat], q: &QParam) -> (f64, Option<Rat>) {
    match q {
        QParam::Inf => {
            let c = completions.iter().max().cloned().unwrap_or_else(Rat::zero);
            (c.to_f64(), Some(c))
        }
        QParam::One => {
            let c: Rat = completions.iter().sum();
            (c.to_f64(), Some(c))
        }
        QParam::Finite { .. } => (lq_norm(completions, q), None),
    }
}

fn oracle(inst: &Instance, q: &QParam, choice: OracleChoice) -> Result<(f64, Option<Rat>)> {
    Ok(match (choice, q) {
        (OracleChoice::None, _) => (f64::NAN, None),
        (OracleChoice::Bruteforce, QParam::Inf) => {
            let r = opt_makespan_bruteforce(inst)?;
            (r.value.to_f64(), r.value.exact().cloned())
        }
        (OracleChoice::Bruteforce, _) => {
            let r = opt_lq_bruteforce(inst, q)?;
            (r.value.to_f64(), r.value.exact().cloned())
        }
        (OracleChoice::Lb, QParam::Inf) => {
            let v = lb_makespan(inst);
            (v.to_f64(), Some(v))
        }
        (OracleChoice::Lb, _) => (lb_lq(inst, q), None),
    })
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * p).ceil() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Fractional and rounded objectives against an oracle on seeded instances.
///
/// Rounding seeds are `(fuzz.seed, trial, round)` packed into one `u64`, so a
/// row can be reproduced from the instance alone.
pub fn bench_ratio(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let q = match &cfg.fuzz.mechanism {
        Mechanism::Makespan => QParam::Inf,
        Mechanism::Lq(q) => *q,
        m => return Err(Error::InvalidInput(format!("bench supports makespan and lq, not {m}"))),
    };
    (0..cfg.fuzz.trials)
        .into_par_iter()
        .map(|trial| {
            let inst = cfg.fuzz.instance(trial);
            let out = cfg.fuzz.mechanism.run(&inst)?;
            let feas = audit_outcome(&out)?.len();
            let (frac, frac_exact) = objective(&out.completion_times(), &q);
            let sampler = RowSampler::new(&out.rows)?;
            let mut rounded: Vec<f64> = (0..cfg.rounds)
                .map(|r| {
                    let seed = cfg.fuzz.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((trial as u64) << 24) ^ r as u64;
                    let assign = sampler.sample(seed);
                    let mut loads = vec![Rat::zero(); inst.m()];
                    for (p, &i) in inst.jobs.iter().zip(&assign) {
                        loads[i] += p;
                    }
                    let c: Vec<Rat> = loads.iter().zip(&inst.speeds).map(|(l, s)| l / s).collect();
                    objective(&c, &q).0
                })
                .collect();
            let mean = rounded.iter().sum::<f64>() / rounded.len().max(1) as f64;
            let max = rounded.iter().copied().fold(f64::NAN, f64::max);
            let mut rel: Vec<f64> = rounded.iter().map(|r| r / frac).collect();
            rel.sort_by(f64::total_cmp);
            rounded.clear();
            let (ov, ov_exact) = oracle(&inst, &q, cfg.oracle)?;
            let ratio = match (&frac_exact, &ov_exact) {
                (Some(a), Some(b)) if b.is_positive() => (a / b).to_f64(),
                _ => frac / ov,
            };
            Ok(BenchRow {
                m: inst.m(),
                n: inst.n(),
                q: q.to_string(),
                obj_fractional: frac,
                obj_rounded_mean: mean,
                obj_rounded_max: max,
                oracle: match cfg.oracle {
                    OracleChoice::Bruteforce => "bruteforce",
                    OracleChoice::Lb => "lb",
                    OracleChoice::None => "none",
                }
                .into(),
                ratio,
                trial,
                obj_fractional_exact: frac_exact.map(|r| r.to_string()).unwrap_or_default(),
                oracle_value: ov,
                oracle_exact: ov_exact.map(|r| r.to_string()).unwrap_or_default(),
                rounded_ratio_mean: mean / ov,
                rounded_over_fractional_p99: quantile(&rel, 0.99),
                envelope: (q == QParam::Inf).then(|| 16.0 * level_count(inst.m()) as f64 + 8.0),
                feasibility_violations: feas,
            })
        })
        .collect()
}
