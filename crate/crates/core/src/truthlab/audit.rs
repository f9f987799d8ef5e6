use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::makespan::AllocationTrace;
use crate::mechanism::Outcome;
use crate::model::build_levels;
use crate::rat::Rat;

/// A positive fraction on a machine too slow for the job or for the instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityViolation {
    pub job: usize,
    pub machine: usize,
    pub fraction: Rat,
    pub size: Rat,
    pub rounded_speed: Rat,
    pub top_speed: Rat,
    pub final_lambda: Rat,
}

/// `x_ij > 0 ⇒ p_j ≤ s̄_i·Λ_final` and `s̄_i ≥ s̄₁/m`.
pub fn audit_outcome(o: &Outcome) -> Result<Vec<FeasibilityViolation>> {
    let Some(lambda) = &o.final_lambda else {
        return Ok(vec![]);
    };
    let lv = build_levels(&o.speeds)?;
    let top = lv.top_speed();
    let m = Rat::from_int(o.speeds.len() as i64);
    let mut out = vec![];
    for (j, (row, p)) in o.rows.iter().zip(&o.sizes).enumerate() {
        for (i, x) in row {
            let s = lv.rounded(*i);
            if x.is_positive() && (*p > s * lambda || s * &m < *top) {
                out.push(FeasibilityViolation {
                    job: j,
                    machine: *i,
                    fraction: x.clone(),
                    size: p.clone(),
                    rounded_speed: s.clone(),
                    top_speed: top.clone(),
                    final_lambda: lambda.clone(),
                });
            }
        }
    }
    Ok(out)
}

pub fn feasibility_violations(trace: &AllocationTrace) -> Vec<FeasibilityViolation> {
    audit_outcome(&Outcome::from(trace)).expect("trace speeds are valid")
}
