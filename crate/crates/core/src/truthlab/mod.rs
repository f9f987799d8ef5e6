//! Property checks and fuzzing for monotonicity, Λ-stability, incentives and
//! speed-size feasibility, plus competitive-ratio benchmarks.
//!
//! Every check takes one instance and returns [`ViolationReport`]s; the
//! `test_*` suites fan the checks out over seeded random instances.

mod audit;
mod bench;
mod checks;
mod gen;
mod shrink;

pub use audit::{audit_outcome, feasibility_violations, FeasibilityViolation};
pub use bench::{bench_ratio, BenchConfig, BenchRow, OracleChoice};
pub use checks::{
    check_incentives, check_job_monotone, check_lambda_stability, check_machine_monotone, check_property, job_grid,
    Checked, PROBE_DELTA_EXP,
};
pub use gen::{random_instance, FuzzConfig, SizeDist, SpeedDist};
pub use shrink::{replay, shrink};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mechanism::Mechanism;
use crate::model::Instance;
use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    MachineMonotone,
    LambdaStability,
    JobMonotone,
    JobIncentive,
    MachineIncentive,
    VoluntaryParticipation,
    Feasibility,
}

impl Property {
    pub fn name(&self) -> &'static str {
        match self {
            Property::MachineMonotone => "machine-monotone",
            Property::LambdaStability => "lambda-stability",
            Property::JobMonotone => "job-monotone",
            Property::JobIncentive => "job-incentive",
            Property::MachineIncentive => "machine-incentive",
            Property::VoluntaryParticipation => "voluntary-participation",
            Property::Feasibility => "feasibility",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum Agent {
    Machine(usize),
    Job(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// Machine reported `perturbed_speed` instead of its true speed.
    Fractions {
        perturbed_speed: Rat,
        job: Option<usize>,
        before: Option<Rat>,
        after: Option<Rat>,
        load_before: Rat,
        load_after: Rat,
    },
    Lambdas {
        perturbed_speed: Rat,
        index: usize,
        before: Vec<Rat>,
        after: Vec<Rat>,
    },
    UnitTime {
        p_low: Rat,
        u_low: Rat,
        p_high: Rat,
        u_high: Rat,
    },
    Utility {
        truthful_report: Rat,
        truthful: Rat,
        misreport: Option<Rat>,
        deviation: Option<Rat>,
    },
    Feasibility {
        machine: usize,
        fraction: Rat,
        size: Rat,
        rounded_speed: Rat,
        top_speed: Rat,
        final_lambda: Rat,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub property: Property,
    pub mechanism: Mechanism,
    pub instance: Instance,
    pub agent: Agent,
    pub witness: Witness,
    pub trial: Option<usize>,
    pub minimized: Option<Minimized>,
}

/// Smaller instance on which the same property still fails for `agent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Minimized {
    pub instance: Instance,
    pub agent: Agent,
}

impl ViolationReport {
    pub fn summary(&self) -> String {
        let who = match self.agent {
            Agent::Machine(i) => format!("machine {}", i + 1),
            Agent::Job(j) => format!("job {}", j + 1),
        };
        let what = match &self.witness {
            Witness::Fractions {
                load_before,
                load_after,
                job,
                before,
                after,
                ..
            } => match (job, before, after) {
                (Some(j), Some(b), Some(a)) => {
                    format!("load {load_before} -> {load_after}, job {} fraction {b} -> {a}", j + 1)
                }
                _ => format!("load {load_before} -> {load_after}"),
            },
            Witness::Lambdas {
                index, before, after, ..
            } => {
                format!("lambda {} vs {} at step {}", before[*index], after[*index], index + 1)
            }
            Witness::UnitTime {
                p_low,
                u_low,
                p_high,
                u_high,
            } => {
                format!("unit time {u_low} at {p_low} rises to {u_high} at {p_high}")
            }
            Witness::Utility {
                truthful_report,
                truthful,
                misreport: Some(r),
                deviation: Some(d),
            } => {
                format!("utility {truthful} at {truthful_report} below {d} at {r}")
            }
            Witness::Utility { truthful, .. } => format!("truthful utility {truthful} < 0"),
            Witness::Feasibility {
                machine,
                size,
                rounded_speed,
                final_lambda,
                ..
            } => {
                format!(
                    "machine {} (rounded {rounded_speed}) holds size {size} above Λ={final_lambda}",
                    machine + 1
                )
            }
        };
        format!("VIOLATION: {} [{}] {who}: {what}", self.property.name(), self.mechanism)
    }
}

/// Outcome of a suite over many trials.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub trials: usize,
    /// Level-allocator traces checked for speed-size feasibility.
    pub audited: usize,
    pub violations: Vec<ViolationReport>,
}

impl SuiteReport {
    pub fn count(&self, p: Property) -> usize {
        self.violations.iter().filter(|v| v.property == p).count()
    }
}

fn fuzz<F>(cfg: &FuzzConfig, check: F) -> Result<SuiteReport>
where
    F: Fn(&Instance) -> Result<Checked> + Sync,
{
    let per_trial: Vec<Checked> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let inst = cfg.instance(t);
            let mut c = check(&inst)?;
            for v in &mut c.reports {
                v.trial = Some(t);
                if cfg.shrink {
                    v.minimized = Some(shrink(v)?);
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut out = SuiteReport {
        trials: cfg.trials,
        ..SuiteReport::default()
    };
    for c in per_trial {
        out.audited += c.audited;
        out.violations.extend(c.reports);
    }
    Ok(out)
}

/// Double every machine's speed in turn; fractions and loads must not drop.
pub fn test_machine_monotone(cfg: &FuzzConfig) -> Result<SuiteReport> {
    fuzz(cfg, |inst| check_machine_monotone(&cfg.mechanism, inst, None))
}

/// Double every machine's speed in turn; `Λ ≥ Λ' ≥ Λ/2` step by step.
pub fn test_lambda_stability(cfg: &FuzzConfig) -> Result<SuiteReport> {
    fuzz(cfg, |inst| check_lambda_stability(&cfg.mechanism, inst, None))
}

/// Scan every job's size over the breakpoint grid; unit time must not rise.
pub fn test_job_monotone(cfg: &FuzzConfig) -> Result<SuiteReport> {
    fuzz(cfg, |inst| check_job_monotone(&cfg.mechanism, inst, None))
}

/// Misreport grids for both sides with payments, plus voluntary participation.
pub fn test_incentives(cfg: &FuzzConfig) -> Result<SuiteReport> {
    fuzz(cfg, |inst| check_incentives(&cfg.mechanism, inst, None))
}
