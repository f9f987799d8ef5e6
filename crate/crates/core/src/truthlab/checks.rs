use crate::error::{Error, Result};
use crate::makespan::{unit_time, Order};
use crate::mechanism::{Mechanism, Outcome};
use crate::model::{build_levels, Instance, LevelStructure};
use crate::payments::{job_contexts, machine_load_curve};
use crate::rat::Rat;

use super::audit::audit_outcome;
use super::{Agent, Property, ViolationReport, Witness};

/// Probes sit `2^PROBE_DELTA_EXP` either side of every breakpoint.
pub const PROBE_DELTA_EXP: i64 = -20;

const FLOAT_TOL: f64 = 1e-9;

/// Reports from one instance and the number of traces audited for feasibility.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Checked {
    pub reports: Vec<ViolationReport>,
    pub audited: usize,
}

fn report(property: Property, mech: &Mechanism, inst: &Instance, agent: Agent, witness: Witness) -> ViolationReport {
    ViolationReport {
        property,
        mechanism: mech.clone(),
        instance: inst.clone(),
        agent,
        witness,
        trial: None,
        minimized: None,
    }
}

/// `a ≤ b`, exactly or up to a relative float tolerance.
fn le(a: &Rat, b: &Rat, exact: bool) -> bool {
    if exact || a <= b {
        return a <= b;
    }
    let (x, y) = (a.to_f64(), b.to_f64());
    x <= y + FLOAT_TOL * x.abs().max(1.0)
}

fn run_audited(mech: &Mechanism, inst: &Instance, out: &mut Checked) -> Result<Outcome> {
    let o = mech.run(inst)?;
    if mech.config().is_some() {
        out.audited += 1;
        for v in audit_outcome(&o)? {
            let w = Witness::Feasibility {
                machine: v.machine,
                fraction: v.fraction,
                size: v.size,
                rounded_speed: v.rounded_speed,
                top_speed: v.top_speed,
                final_lambda: v.final_lambda,
            };
            out.reports
                .push(report(Property::Feasibility, mech, inst, Agent::Job(v.job), w));
        }
    }
    Ok(o)
}

fn machines(inst: &Instance, target: Option<usize>) -> Result<Vec<usize>> {
    match target {
        Some(i) if i >= inst.m() => Err(Error::InvalidInput(format!("machine {} out of range", i + 1))),
        Some(i) => Ok(vec![i]),
        None => Ok((0..inst.m()).collect()),
    }
}

fn jobs(inst: &Instance, target: Option<usize>) -> Result<Vec<usize>> {
    match target {
        Some(j) if j >= inst.n() => Err(Error::InvalidInput(format!("job {} out of range", j + 1))),
        Some(j) => Ok(vec![j]),
        None => Ok((0..inst.n()).collect()),
    }
}

/// Each machine in turn reports twice its speed; its fraction of every job and
/// its load must not drop.
pub fn check_machine_monotone(mech: &Mechanism, inst: &Instance, target: Option<usize>) -> Result<Checked> {
    let mut out = Checked::default();
    let base = run_audited(mech, inst, &mut out)?;
    let loads = base.loads();
    let exact = mech.exact();
    for i in machines(inst, target)? {
        let fast = inst.speeds[i].mul_pow2(1);
        let o = run_audited(mech, &inst.with_speed(i, fast.clone()), &mut out)?;
        let mut worst: Option<(usize, Rat, Rat, Rat)> = None;
        for j in 0..inst.n() {
            let (x, y) = (base.fraction(j, i), o.fraction(j, i));
            if !le(&x, &y, exact) {
                let drop = &x - &y;
                if worst.as_ref().is_none_or(|w| drop > w.3) {
                    worst = Some((j, x, y, drop));
                }
            }
        }
        let after = o.loads()[i].clone();
        if worst.is_some() || !le(&loads[i], &after, exact) {
            let (job, before, after_x) = match worst {
                Some((j, x, y, _)) => (Some(j), Some(x), Some(y)),
                None => (None, None, None),
            };
            let w = Witness::Fractions {
                perturbed_speed: fast,
                job,
                before,
                after: after_x,
                load_before: loads[i].clone(),
                load_after: after,
            };
            out.reports
                .push(report(Property::MachineMonotone, mech, inst, Agent::Machine(i), w));
        }
    }
    Ok(out)
}

/// Each machine in turn reports twice its speed; `Λ_j ≥ Λ'_j ≥ Λ_j/2` at every
/// arrival after the first and at the end.
pub fn check_lambda_stability(mech: &Mechanism, inst: &Instance, target: Option<usize>) -> Result<Checked> {
    if !mech.has_lambda() {
        return Err(Error::InvalidInput(format!("{mech} keeps no Λ")));
    }
    let mut out = Checked::default();
    let before = run_audited(mech, inst, &mut out)?.lambda_sequence();
    for i in machines(inst, target)? {
        let fast = inst.speeds[i].mul_pow2(1);
        let after = run_audited(mech, &inst.with_speed(i, fast.clone()), &mut out)?.lambda_sequence();
        let bad = before
            .iter()
            .zip(&after)
            .position(|(l, l2)| l2 > l || l2.mul_pow2(1) < *l);
        if let Some(index) = bad {
            let w = Witness::Lambdas {
                perturbed_speed: fast,
                index,
                before: before.clone(),
                after,
            };
            out.reports
                .push(report(Property::LambdaStability, mech, inst, Agent::Machine(i), w));
        }
    }
    Ok(out)
}

/// Sizes at which the level of a job arriving under `lambda` can change,
/// the true size `p`, and each of those `± 2^PROBE_DELTA_EXP`.
pub fn job_grid(lambda: Option<&Rat>, levels: &LevelStructure, p: &Rat) -> Vec<Rat> {
    let delta = Rat::pow2(PROBE_DELTA_EXP);
    let mut centers = vec![p.clone()];
    if let Some(l) = lambda {
        centers.extend((1..=levels.k_max()).map(|k| levels.r(k) * l));
    }
    let mut grid: Vec<Rat> = centers
        .iter()
        .flat_map(|c| [c - &delta, c.clone(), c + &delta])
        .filter(|x| x.is_positive())
        .collect();
    grid.sort();
    grid.dedup();
    grid
}

/// For each job, with the history before it fixed, its unit processing time
/// `Σ_i x_i(p)/s_i` must not rise as its reported size grows.
pub fn check_job_monotone(mech: &Mechanism, inst: &Instance, target: Option<usize>) -> Result<Checked> {
    let mut out = Checked::default();
    run_audited(mech, inst, &mut out)?;
    let levels = build_levels(&inst.speeds)?;
    let wanted = jobs(inst, target)?;
    let exact = mech.exact();
    let mut session = mech.session(&inst.speeds)?;
    for (j, p) in inst.jobs.iter().enumerate() {
        if wanted.contains(&j) {
            let lambda = session.lambda();
            let grid = job_grid(lambda.as_ref(), &levels, p);
            let ut = grid
                .iter()
                .map(|x| Ok(unit_time(&session.probe(x)?, &inst.speeds)))
                .collect::<Result<Vec<Rat>>>()?;
            let rises: Vec<usize> = (1..grid.len()).filter(|&t| !le(&ut[t], &ut[t - 1], exact)).collect();
            let pick = rises.iter().find(|&&t| grid[t - 1] == *p).or(rises.first());
            if let Some(&t) = pick {
                let w = Witness::UnitTime {
                    p_low: grid[t - 1].clone(),
                    u_low: ut[t - 1].clone(),
                    p_high: grid[t].clone(),
                    u_high: ut[t].clone(),
                };
                out.reports
                    .push(report(Property::JobMonotone, mech, inst, Agent::Job(j), w));
            }
        }
        session.arrive(p)?;
    }
    Ok(out)
}

/// With payments, no job gains by reporting another size on the breakpoint
/// grid, no machine gains by reporting another octave, and truthful machines
/// have nonnegative utility. Comparisons are exact.
///
/// Single-machine instances only get the participation check: with no
/// competitor the load never leaves the machine and the payment is capped.
pub fn check_incentives(mech: &Mechanism, inst: &Instance, target: Option<Agent>) -> Result<Checked> {
    let cfg = match mech.config() {
        Some(c) if c.order == Order::AllocateThenDouble => c,
        _ => return Err(Error::InvalidInput(format!("payments are not defined for {mech}"))),
    };
    let mut out = Checked::default();
    run_audited(mech, inst, &mut out)?;
    let delta = Rat::pow2(PROBE_DELTA_EXP);

    let job_targets = match target {
        Some(Agent::Job(j)) => jobs(inst, Some(j))?,
        Some(Agent::Machine(_)) => vec![],
        None => (0..inst.n()).collect(),
    };
    if !job_targets.is_empty() {
        let ctxs = job_contexts(inst, cfg, None)?;
        for j in job_targets {
            let (ctx, t) = (&ctxs[j], &inst.jobs[j]);
            let truthful = ctx.cost(t, t)?;
            let mut centers = ctx.curve.breakpoints();
            centers.push(t.clone());
            let top = centers.iter().max().unwrap().mul_pow2(1);
            let mut grid: Vec<Rat> = centers
                .iter()
                .flat_map(|c| [c - &delta, c.clone(), c + &delta])
                .collect();
            grid.push(delta.clone());
            grid.push(top);
            let mut best: Option<(Rat, Rat)> = None;
            for r in grid.into_iter().filter(|r| r.is_positive()) {
                let c = ctx.cost(t, &r)?;
                if c < truthful && best.as_ref().is_none_or(|b| c < b.1) {
                    best = Some((r, c));
                }
            }
            if let Some((r, c)) = best {
                let w = Witness::Utility {
                    truthful_report: t.clone(),
                    truthful: -truthful,
                    misreport: Some(r),
                    deviation: Some(-c),
                };
                out.reports
                    .push(report(Property::JobIncentive, mech, inst, Agent::Job(j), w));
            }
        }
    }

    let machine_targets = match target {
        Some(Agent::Machine(i)) => machines(inst, Some(i))?,
        Some(Agent::Job(_)) => vec![],
        None => (0..inst.m()).collect(),
    };
    for i in machine_targets {
        let curve = machine_load_curve(inst, cfg, i)?;
        let s = &inst.speeds[i];
        let truthful = curve.utility(s, s);
        if truthful.is_negative() {
            let w = Witness::Utility {
                truthful_report: s.clone(),
                truthful: truthful.clone(),
                misreport: None,
                deviation: None,
            };
            out.reports.push(report(
                Property::VoluntaryParticipation,
                mech,
                inst,
                Agent::Machine(i),
                w,
            ));
        }
        if curve.single {
            continue;
        }
        let mut best: Option<(Rat, Rat)> = None;
        for t in curve.t_lo - 1..=curve.t_hi + 1 {
            let r = Rat::pow2(t);
            let u = curve.utility(&r, s);
            if u > truthful && best.as_ref().is_none_or(|b| u > b.1) {
                best = Some((r, u));
            }
        }
        if let Some((r, u)) = best {
            let w = Witness::Utility {
                truthful_report: s.clone(),
                truthful,
                misreport: Some(r),
                deviation: Some(u),
            };
            out.reports
                .push(report(Property::MachineIncentive, mech, inst, Agent::Machine(i), w));
        }
    }
    Ok(out)
}

/// Run the check behind `property`, restricted to `agent` when given, and keep
/// only reports of that property.
pub fn check_property(
    property: Property,
    mech: &Mechanism,
    inst: &Instance,
    agent: Option<Agent>,
) -> Result<Vec<ViolationReport>> {
    let machine = match agent {
        Some(Agent::Machine(i)) => Some(i),
        _ => None,
    };
    let job = match agent {
        Some(Agent::Job(j)) => Some(j),
        _ => None,
    };
    let checked = match property {
        Property::MachineMonotone => check_machine_monotone(mech, inst, machine)?,
        Property::LambdaStability => check_lambda_stability(mech, inst, machine)?,
        Property::JobMonotone => check_job_monotone(mech, inst, job)?,
        Property::JobIncentive | Property::MachineIncentive | Property::VoluntaryParticipation => {
            check_incentives(mech, inst, agent)?
        }
        Property::Feasibility => {
            let mut out = Checked::default();
            run_audited(mech, inst, &mut out)?;
            out
        }
    };
    Ok(checked
        .reports
        .into_iter()
        .filter(|r| r.property == property && agent.is_none_or(|a| a == r.agent))
        .collect())
}
