use crate::error::Result;
use crate::model::Instance;

use super::checks::check_property;
use super::{Agent, Minimized, ViolationReport};

/// Rerun the check on the report's instance and agent; `true` if it fires again.
pub fn replay(report: &ViolationReport) -> Result<bool> {
    let again = check_property(report.property, &report.mechanism, &report.instance, Some(report.agent))?;
    Ok(!again.is_empty())
}

fn fires(report: &ViolationReport, inst: &Instance, agent: Agent) -> bool {
    // Errors on a candidate only mean the candidate is not a reproduction.
    check_property(report.property, &report.mechanism, inst, Some(agent)).is_ok_and(|v| !v.is_empty())
}

/// Greedily drop jobs, then machines, while the violation persists.
pub fn shrink(report: &ViolationReport) -> Result<Minimized> {
    let mut inst = report.instance.clone();
    let mut agent = report.agent;
    let mut j = 0;
    while j < inst.n() && inst.n() > 1 {
        let keep = matches!(agent, Agent::Job(a) if a == j);
        if !keep {
            let mut jobs = inst.jobs.clone();
            jobs.remove(j);
            let cand = Instance::new(inst.speeds.clone(), jobs)?;
            let moved = match agent {
                Agent::Job(a) if a > j => Agent::Job(a - 1),
                a => a,
            };
            if fires(report, &cand, moved) {
                inst = cand;
                agent = moved;
                continue;
            }
        }
        j += 1;
    }
    let mut i = 0;
    while i < inst.m() && inst.m() > 1 {
        let keep = matches!(agent, Agent::Machine(a) if a == i);
        if !keep {
            let mut speeds = inst.speeds.clone();
            speeds.remove(i);
            let cand = Instance::new(speeds, inst.jobs.clone())?;
            let moved = match agent {
                Agent::Machine(a) if a > i => Agent::Machine(a - 1),
                a => a,
            };
            if fires(report, &cand, moved) {
                inst = cand;
                agent = moved;
                continue;
            }
        }
        i += 1;
    }
    Ok(Minimized { instance: inst, agent })
}
