//! Job charges and machine payments.
//!
//! Both sides use the standard monotone-allocation payment identities. A job
//! reporting `p` pays
//!
//! `Q(p) = -Σ_i [ C_i (x_i(p) - x_i(0)) + (p·x_i(p) - ∫₀^p x_i) / s_i ]`
//!
//! with `Q(0) = 0`, where `C_i` is machine `i`'s completion time when the job
//! arrives. A machine bidding `b = 1/s` is paid `P(b) = b·L(b) + ∫_b^∞ L`,
//! where `L` is its expected load as a function of the bid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqnorm::QParam;
use crate::makespan::{run_with, unit_time, AllocatorConfig, LevelAllocator, Order, Row};
use crate::model::{speed_exp, Instance};
use crate::rat::Rat;
use crate::rounding::IntegralAssignment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePiece {
    /// Closed upper end; `None` for the unbounded last piece.
    pub upper: Option<Rat>,
    pub level: usize,
    pub super_large: bool,
    pub row: Row,
}

/// `p ↦ x_{·j}(p)` for a fixed history: piece `t` covers `(upper_{t-1}, upper_t]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCurve {
    pub lambda: Option<Rat>,
    pub pieces: Vec<CurvePiece>,
}

impl JobCurve {
    pub fn piece_at(&self, p: &Rat) -> &CurvePiece {
        self.pieces
            .iter()
            .find(|pc| pc.upper.as_ref().is_none_or(|u| p <= u))
            .expect("last piece is unbounded")
    }

    pub fn row_at(&self, p: &Rat) -> &Row {
        &self.piece_at(p).row
    }

    /// Row as `p → 0⁺`.
    pub fn row_at_zero(&self) -> &Row {
        &self.pieces[0].row
    }

    /// Finite breakpoints, ascending.
    pub fn breakpoints(&self) -> Vec<Rat> {
        self.pieces.iter().filter_map(|pc| pc.upper.clone()).collect()
    }

    /// `∫₀^p Σ_i x_i(t)/s_i dt`.
    pub fn unit_time_integral(&self, p: &Rat, speeds: &[Rat]) -> Rat {
        let mut acc = Rat::zero();
        let mut lo = Rat::zero();
        for pc in &self.pieces {
            let hi = match &pc.upper {
                Some(u) if u < p => u.clone(),
                _ => p.clone(),
            };
            if hi > lo {
                acc += unit_time(&pc.row, speeds) * (&hi - &lo);
            }
            if hi == *p {
                break;
            }
            lo = hi;
        }
        acc
    }
}

/// The size-to-row map of the job arriving next in `alloc`.
///
/// Only meaningful for allocate-then-double configurations, where Λ is frozen
/// for the arriving job.
pub fn job_allocation_curve(alloc: &LevelAllocator) -> JobCurve {
    assert_eq!(alloc.config().order, Order::AllocateThenDouble);
    let lv = alloc.levels();
    let Some(lambda) = alloc.lambda().cloned() else {
        return JobCurve {
            lambda: None,
            pieces: vec![CurvePiece {
                upper: None,
                level: 1,
                super_large: false,
                row: alloc.level_row(1).clone(),
            }],
        };
    };
    let mut pieces: Vec<CurvePiece> = (1..=lv.k_max())
        .rev()
        .map(|k| CurvePiece {
            upper: Some(lv.r(k) * &lambda),
            level: k,
            super_large: false,
            row: alloc.level_row(k).clone(),
        })
        .collect();
    pieces.push(CurvePiece {
        upper: None,
        level: 1,
        super_large: true,
        row: alloc.level_row(1).clone(),
    });
    JobCurve {
        lambda: Some(lambda),
        pieces,
    }
}

/// Where a job stands when it arrives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobContext {
    pub curve: JobCurve,
    /// Completion time of every machine when the job arrives.
    pub completion: Vec<Rat>,
    /// True speeds.
    pub speeds: Vec<Rat>,
}

impl JobContext {
    fn weighted_completion(&self, row: &[(usize, Rat)]) -> Rat {
        row.iter().map(|(i, x)| x * &self.completion[*i]).sum()
    }

    /// `Q(p)`.
    pub fn charge(&self, p: &Rat) -> Result<Rat> {
        if p.is_negative() {
            return Err(Error::InvalidInput(format!(
                "reported size must be nonnegative, got {p}"
            )));
        }
        if p.is_zero() {
            return Ok(Rat::zero());
        }
        let row = self.curve.row_at(p);
        let a = self.weighted_completion(row) - self.weighted_completion(self.curve.row_at_zero());
        let u = unit_time(row, &self.speeds);
        Ok(-(a + p * u - self.curve.unit_time_integral(p, &self.speeds)))
    }

    /// Expected completion time plus charge for a job of true size `t` reporting `p`.
    pub fn cost(&self, t: &Rat, p: &Rat) -> Result<Rat> {
        let row = self.curve.row_at(p);
        let finish = self.weighted_completion(row) + t * unit_time(row, &self.speeds);
        Ok(finish + self.charge(p)?)
    }

    /// Expected completion time alone.
    pub fn finish(&self, p: &Rat) -> Rat {
        let row = self.curve.row_at(p);
        self.weighted_completion(row) + p * unit_time(row, &self.speeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionMode {
    /// `C_i` from the fractional loads of earlier jobs.
    Fractional,
    /// `C_i` from the realized assignment of earlier jobs.
    Realized,
}

/// Context of every job of a truthful run.
pub fn job_contexts(
    instance: &Instance,
    config: AllocatorConfig,
    realized: Option<&IntegralAssignment>,
) -> Result<Vec<JobContext>> {
    let mut alloc = LevelAllocator::new(&instance.speeds, config)?;
    let mut loads = vec![Rat::zero(); instance.m()];
    let mut out = Vec::with_capacity(instance.n());
    for (j, p) in instance.jobs.iter().enumerate() {
        let completion = loads.iter().zip(&instance.speeds).map(|(l, s)| l / s).collect();
        out.push(JobContext {
            curve: job_allocation_curve(&alloc),
            completion,
            speeds: instance.speeds.clone(),
        });
        let rec = alloc.arrive(p);
        match realized {
            Some(a) => loads[a.assign[j]] += p,
            None => {
                for (i, x) in rec.row.iter() {
                    loads[*i] += x * p;
                }
            }
        }
    }
    Ok(out)
}

pub fn job_charge(ctx: &JobContext, p: &Rat) -> Result<Rat> {
    ctx.charge(p)
}

/// Machine `i`'s expected load as a function of its rounded speed `2^t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineCurve {
    pub machine: usize,
    /// At or below this octave the load is 0.
    pub t_lo: i64,
    /// At or above this octave the load is the total size.
    pub t_hi: i64,
    pub total: Rat,
    /// No other machine: the load is the total at every report.
    pub single: bool,
    /// `(t, L_t)` for `t ∈ [t_lo, t_hi]`.
    pub loads: Vec<(i64, Rat)>,
}

impl MachineCurve {
    pub fn load_at_exp(&self, t: i64) -> Rat {
        if self.single {
            self.total.clone()
        } else if t <= self.t_lo {
            Rat::zero()
        } else if t >= self.t_hi {
            self.total.clone()
        } else {
            self.loads[(t - self.t_lo) as usize].1.clone()
        }
    }

    pub fn load_at(&self, speed: &Rat) -> Rat {
        self.load_at_exp(speed_exp(speed).expect("positive speed"))
    }

    /// `P(b)` for a report `s = 1/b`.
    pub fn payment(&self, reported: &Rat) -> Rat {
        if self.single {
            return &self.total / reported;
        }
        let u = speed_exp(reported).expect("positive speed");
        if u <= self.t_lo {
            return Rat::zero();
        }
        // b·L_u + L_u·(2^{-u} - b) collapses to L_u·2^{-u}.
        let mut acc = self.load_at_exp(u).mul_pow2(-u);
        for t in self.t_lo..u {
            acc += self.load_at_exp(t).mul_pow2(-t - 1);
        }
        acc
    }

    /// `P - L/s_true` when reporting `reported`.
    pub fn utility(&self, reported: &Rat, true_speed: &Rat) -> Rat {
        self.payment(reported) - self.load_at(reported) / true_speed
    }
}

/// Octave range outside which machine `i`'s load is provably on a plateau.
fn octave_range(instance: &Instance, i: usize) -> Result<Option<(i64, i64)>> {
    let m = instance.m();
    let mut top: Option<i64> = None;
    for (k, s) in instance.speeds.iter().enumerate() {
        if k != i {
            let z = speed_exp(s)?;
            top = Some(top.map_or(z, |t: i64| t.max(z)));
        }
    }
    // 2^{K+1} ≥ 4m/2, and machines more than K-1 octaves apart never share a level.
    let span = crate::model::level_count(m) as i64 + 1;
    Ok(top.map(|z| (z - span, z + span)))
}

pub fn machine_load_curve(instance: &Instance, config: AllocatorConfig, i: usize) -> Result<MachineCurve> {
    if config.objective == QParam::One {
        return Err(Error::InvalidInput(
            "machine payments need octave-invariant allocation; q = 1 is not".into(),
        ));
    }
    let total = instance.total_size();
    let Some((t_lo, t_hi)) = octave_range(instance, i)? else {
        return Ok(MachineCurve {
            machine: i,
            t_lo: 0,
            t_hi: 0,
            total,
            single: true,
            loads: vec![],
        });
    };
    let loads: Vec<(i64, Rat)> = (t_lo..=t_hi)
        .into_par_iter()
        .map(|t| {
            let trace = run_with(&instance.with_speed(i, Rat::pow2(t)), config)?;
            Ok((t, trace.loads()[i].clone()))
        })
        .collect::<Result<_>>()?;
    let curve = MachineCurve {
        machine: i,
        t_lo,
        t_hi,
        total: total.clone(),
        single: false,
        loads,
    };
    if !curve.loads[0].1.is_zero() {
        return Err(Error::Invariant(format!(
            "machine {i}: load {} at slow plateau octave {t_lo}",
            curve.loads[0].1
        )));
    }
    if curve.loads.last().unwrap().1 != total {
        return Err(Error::Invariant(format!(
            "machine {i}: load below total at fast plateau octave {t_hi}"
        )));
    }
    Ok(curve)
}

/// Expected payment to machine `i` at its reported speed.
///
/// With a single machine the load never drops to 0, so the integral is taken
/// as 0 and the payment is `Σp / s`.
pub fn machine_payment(instance: &Instance, config: AllocatorConfig, i: usize) -> Result<Rat> {
    Ok(machine_load_curve(instance, config, i)?.payment(&instance.speeds[i]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentLedger {
    pub mode: CompletionMode,
    pub job_charges: Vec<Rat>,
    pub machine_payments: Vec<Rat>,
    pub job_curves: Vec<JobCurve>,
    pub machine_curves: Vec<MachineCurve>,
    /// Expected completion time of each job at assignment.
    pub job_finish: Vec<Rat>,
    pub machine_loads: Vec<Rat>,
}

pub fn compute_ledger(
    instance: &Instance,
    config: AllocatorConfig,
    realized: Option<&IntegralAssignment>,
) -> Result<PaymentLedger> {
    let ctxs = job_contexts(instance, config, realized)?;
    let job_charges = ctxs
        .iter()
        .zip(&instance.jobs)
        .map(|(c, p)| c.charge(p))
        .collect::<Result<Vec<_>>>()?;
    let job_finish = ctxs.iter().zip(&instance.jobs).map(|(c, p)| c.finish(p)).collect();
    let machine_curves = (0..instance.m())
        .map(|i| machine_load_curve(instance, config, i))
        .collect::<Result<Vec<_>>>()?;
    let machine_payments = machine_curves
        .iter()
        .zip(&instance.speeds)
        .map(|(c, s)| c.payment(s))
        .collect();
    let machine_loads = run_with(instance, config)?.loads();
    Ok(PaymentLedger {
        mode: if realized.is_some() {
            CompletionMode::Realized
        } else {
            CompletionMode::Fractional
        },
        job_charges,
        machine_payments,
        job_curves: ctxs.into_iter().map(|c| c.curve).collect(),
        machine_curves,
        job_finish,
        machine_loads,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utilities {
    pub machines: Vec<Rat>,
    pub jobs: Vec<Rat>,
}

/// Machine utility `P_i - L_i/s_i`; job utility `-(F_j + Q_j)`.
pub fn utilities(instance: &Instance, ledger: &PaymentLedger) -> Utilities {
    let machines = ledger
        .machine_payments
        .iter()
        .zip(&ledger.machine_loads)
        .zip(&instance.speeds)
        .map(|((p, l), s)| p - l / s)
        .collect();
    let jobs = ledger
        .job_finish
        .iter()
        .zip(&ledger.job_charges)
        .map(|(f, q)| -(f + q))
        .collect();
    Utilities { machines, jobs }
}

/// Exact loads for each octave, keyed by exponent; used by the incentive scans.
pub fn octave_loads(curve: &MachineCurve) -> BTreeMap<i64, Rat> {
    curve.loads.iter().cloned().collect()
}
