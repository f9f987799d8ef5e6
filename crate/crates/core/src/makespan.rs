//! Level-based proportional allocation.
//!
//! One engine, [`LevelAllocator`], runs the makespan allocator, the ℓq
//! allocator (see [`crate::lqnorm`]) and the two broken doubling variants used
//! as counterexamples. The differences are all in [`AllocatorConfig`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lqnorm::{lq_norm, QParam};
use crate::model::{Instance, LevelStructure};
use crate::rat::Rat;

/// Sparse fraction row: `(machine id, x_ij)`, ids ascending by level then id.
pub type Row = Arc<Vec<(usize, Rat)>>;

/// Relative slack below which a float ℓq norm is not considered to exceed Λ.
pub const LQ_TRIGGER_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// Allocate under the current Λ, then test the triggers.
    AllocateThenDouble,
    /// Test the triggers against the tentative allocation, double first, then allocate.
    DoubleThenAllocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// Accumulators are cleared exactly when Λ grows.
    OnIncrease,
    /// Literal pseudocode reading: clear after every job whose level is below `K`.
    EveryNonLastLevelJob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub objective: QParam,
    pub order: Order,
    /// Let level `K` trigger saturated-level doubling.
    pub last_level_doubles: bool,
    pub reset: ResetPolicy,
}

impl AllocatorConfig {
    pub const fn makespan() -> Self {
        AllocatorConfig {
            objective: QParam::Inf,
            order: Order::AllocateThenDouble,
            last_level_doubles: false,
            reset: ResetPolicy::OnIncrease,
        }
    }

    pub const fn lq(q: QParam) -> Self {
        AllocatorConfig {
            objective: q,
            ..Self::makespan()
        }
    }

    /// Doubles before allocating.
    pub const fn variant_double_before_allocate() -> Self {
        AllocatorConfig {
            order: Order::DoubleThenAllocate,
            ..Self::makespan()
        }
    }

    /// Lets the last level trigger doubling.
    pub const fn variant_double_with_last() -> Self {
        AllocatorConfig {
            last_level_doubles: true,
            ..Self::makespan()
        }
    }
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self::makespan()
    }
}

/// `k(j)` and the super-large flag for size `p` under `lambda`.
///
/// ```
/// use selfish_lb::{makespan::job_level, model::build_levels, Rat};
/// let lv = build_levels(&[17, 7, 2, 1, 1, 1, 1, 1].map(Rat::from_int)).unwrap();
/// assert_eq!(job_level(&Rat::from_int(4), &Rat::one(), &lv), (3, false));
/// assert_eq!(job_level(&Rat::from_int(100), &Rat::one(), &lv), (1, true));
/// ```
pub fn job_level(p: &Rat, lambda: &Rat, levels: &LevelStructure) -> (usize, bool) {
    // r_k·Λ halves with each level, so scan from the slowest.
    let top = levels.top_speed() * lambda;
    if *p > top {
        return (1, true);
    }
    let mut cap = top;
    let mut k = 1;
    while k < levels.k_max() {
        let next = cap.mul_pow2(-1);
        if *p > next {
            break;
        }
        cap = next;
        k += 1;
    }
    (k, false)
}

/// Row of fractions `s̄_i / Σ_{M≤k} s̄` and the common increment `p / Σ_{M≤k} s̄`.
pub fn allocate_job(p: &Rat, k: usize, levels: &LevelStructure) -> (Vec<(usize, Rat)>, Rat) {
    let total = levels.prefix_sum(k);
    let row = levels
        .prefix(k)
        .into_iter()
        .map(|i| (i, levels.rounded(i) / total))
        .collect();
    (row, p / total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    pub p1: Option<Rat>,
    /// `Λ = p₁·2^lambda_exp`.
    pub lambda_exp: i64,
    pub lambda: Option<Rat>,
    /// `C[k-1]` aligned with the level-`k` row; a single entry when all entries are equal.
    pub c: Vec<Vec<Rat>>,
    pub phase_index: usize,
    /// `Λ^{(t)}` for each phase `t`.
    pub lambda_history: Vec<Rat>,
    pub super_large_flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    /// 1-based.
    pub job: usize,
    pub size: Rat,
    /// Λ before this job; `None` for job 1.
    pub lambda_at_arrival: Option<Rat>,
    /// Λ the job was allocated under (differs only when doubling precedes allocation).
    pub lambda_used: Rat,
    pub level: usize,
    pub super_large: bool,
    pub row: Row,
    pub doubled_before: u32,
    pub doubled_after: u32,
    pub lambda_after: Rat,
}

impl JobRecord {
    pub fn doubled(&self) -> bool {
        self.doubled_before + self.doubled_after > 0
    }
}

/// What the allocator would do with a job of a given size right now.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub level: usize,
    pub super_large: bool,
    pub row: Row,
    pub lambda_used: Rat,
    pub doubled_before: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationTrace {
    pub config: AllocatorConfig,
    pub speeds: Vec<Rat>,
    pub levels: LevelStructure,
    pub records: Vec<JobRecord>,
    pub final_state: PhaseState,
}

impl AllocationTrace {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn m(&self) -> usize {
        self.speeds.len()
    }

    pub fn fraction(&self, j: usize, i: usize) -> Rat {
        self.records[j]
            .row
            .iter()
            .find(|(id, _)| *id == i)
            .map(|(_, x)| x.clone())
            .unwrap_or_else(Rat::zero)
    }

    /// Dense `X[j][i]`, 0-based job index.
    pub fn matrix(&self) -> Vec<Vec<Rat>> {
        self.records
            .iter()
            .map(|r| {
                let mut dense = vec![Rat::zero(); self.m()];
                for (i, x) in r.row.iter() {
                    dense[*i] = x.clone();
                }
                dense
            })
            .collect()
    }

    /// `L_i = Σ_j X[j][i]·p_j`.
    pub fn loads(&self) -> Vec<Rat> {
        let mut loads = vec![Rat::zero(); self.m()];
        for r in &self.records {
            for (i, x) in r.row.iter() {
                loads[*i] += x * &r.size;
            }
        }
        loads
    }

    /// `L_i / s_i` on reported speeds.
    pub fn completion_times(&self) -> Vec<Rat> {
        self.loads().iter().zip(&self.speeds).map(|(l, s)| l / s).collect()
    }

    /// `L_i / s̄_i` on rounded speeds.
    pub fn rounded_completion_times(&self) -> Vec<Rat> {
        self.loads()
            .iter()
            .zip(&self.levels.machines)
            .map(|(l, mp)| l / &mp.rounded_speed)
            .collect()
    }

    pub fn makespan(&self) -> Rat {
        self.completion_times().into_iter().max().unwrap()
    }

    /// `Σ_i X[j][i] / s_i` on the given speeds.
    pub fn unit_time(&self, j: usize, speeds: &[Rat]) -> Rat {
        unit_time(&self.records[j].row, speeds)
    }

    /// Λ at arrival of jobs `2..=n`, then the final Λ.
    pub fn lambda_sequence(&self) -> Vec<Rat> {
        self.records
            .iter()
            .filter_map(|r| r.lambda_at_arrival.clone())
            .chain(self.final_state.lambda.clone())
            .collect()
    }

    pub fn final_lambda(&self) -> Rat {
        self.final_state.lambda.clone().expect("nonempty trace")
    }
}

pub fn unit_time(row: &[(usize, Rat)], speeds: &[Rat]) -> Rat {
    row.iter().map(|(i, x)| x / &speeds[*i]).sum()
}

/// Online session over one set of reported speeds.
#[derive(Debug, Clone)]
pub struct LevelAllocator {
    levels: Arc<LevelStructure>,
    config: AllocatorConfig,
    rows: Vec<Row>,
    /// `ΔC_i = p · coef[k-1][pos]`.
    coef: Vec<Vec<Rat>>,
    /// Exact trigger on `C[k][0]` (every entry equal) instead of a float norm.
    exact_trigger: bool,
    state: PhaseState,
    records: Vec<JobRecord>,
    speeds: Vec<Rat>,
}

impl LevelAllocator {
    pub fn new(speeds: &[Rat], config: AllocatorConfig) -> Result<Self> {
        let levels = crate::model::build_levels(speeds)?;
        let k_max = levels.k_max();
        let mut rows = Vec::with_capacity(k_max);
        let mut coef = Vec::with_capacity(k_max);
        let exact_trigger = matches!(config.objective, QParam::Inf | QParam::One);
        match config.objective {
            QParam::One => {
                let best = fastest_machine(speeds);
                let row: Row = Arc::new(vec![(best, Rat::one())]);
                for _ in 0..k_max {
                    rows.push(row.clone());
                    coef.push(vec![levels.rounded(best).recip()]);
                }
            }
            QParam::Inf => {
                for k in 1..=k_max {
                    let (row, _) = allocate_job(&Rat::one(), k, &levels);
                    rows.push(Arc::new(row));
                    coef.push(vec![levels.prefix_sum(k).recip()]);
                }
            }
            QParam::Finite { .. } => {
                let weights = crate::lqnorm::speed_weights(&levels, &config.objective);
                for k in 1..=k_max {
                    let ids = levels.prefix(k);
                    let total: Rat = ids.iter().map(|&i| &weights[i]).sum();
                    let row: Vec<(usize, Rat)> = ids.iter().map(|&i| (i, &weights[i] / &total)).collect();
                    coef.push(row.iter().map(|(i, x)| x / levels.rounded(*i)).collect());
                    rows.push(Arc::new(row));
                }
            }
        }
        let c = coef.iter().map(|v| vec![Rat::zero(); v.len()]).collect();
        Ok(LevelAllocator {
            levels: Arc::new(levels),
            config,
            rows,
            coef,
            exact_trigger,
            state: PhaseState {
                p1: None,
                lambda_exp: 0,
                lambda: None,
                c,
                phase_index: 0,
                lambda_history: Vec::new(),
                super_large_flags: Vec::new(),
            },
            records: Vec::new(),
            speeds: speeds.to_vec(),
        })
    }

    pub fn levels(&self) -> &LevelStructure {
        &self.levels
    }

    pub fn config(&self) -> &AllocatorConfig {
        &self.config
    }

    pub fn state(&self) -> &PhaseState {
        &self.state
    }

    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn lambda(&self) -> Option<&Rat> {
        self.state.lambda.as_ref()
    }

    /// Level-`k` row (1-based `k`).
    pub fn level_row(&self, k: usize) -> &Row {
        &self.rows[k - 1]
    }

    fn lambda_of(&self, exp: i64) -> Rat {
        self.state.p1.as_ref().expect("after job 1").mul_pow2(exp)
    }

    fn gate(&self, k: usize) -> bool {
        k < self.levels.k_max() || self.config.last_level_doubles
    }

    /// Smallest `d ≥ 0` with `Λ·2^d ≥ p / r₁`.
    fn super_large_steps(&self, p: &Rat, lambda: &Rat) -> u32 {
        let t = p / (self.levels.top_speed() * lambda);
        if t <= Rat::one() {
            return 0;
        }
        let z = t.floor_log2().unwrap();
        let d = if Rat::pow2(z) == t { z } else { z + 1 };
        d as u32
    }

    fn saturated(&self, acc: &[Rat], lambda: &Rat) -> bool {
        if self.exact_trigger {
            acc[0] > *lambda
        } else {
            lq_norm(acc, &self.config.objective) > lambda.to_f64() * (1.0 + LQ_TRIGGER_GUARD)
        }
    }

    fn bumped(&self, k: usize, p: &Rat) -> Vec<Rat> {
        self.state.c[k - 1]
            .iter()
            .zip(&self.coef[k - 1])
            .map(|(c, w)| c + p * w)
            .collect()
    }

    /// The decision for a job of size `p` arriving now, without committing it.
    pub fn peek(&self, p: &Rat) -> Plan {
        let Some(lambda) = self.state.lambda.clone() else {
            return Plan {
                level: 1,
                super_large: false,
                row: self.rows[0].clone(),
                lambda_used: p / self.levels.top_speed(),
                doubled_before: 0,
            };
        };
        let (mut k, mut sl) = job_level(p, &lambda, &self.levels);
        let mut used = lambda.clone();
        let mut before = 0;
        if self.config.order == Order::DoubleThenAllocate {
            if sl {
                before = self.super_large_steps(p, &lambda);
            } else if self.gate(k) && self.saturated(&self.bumped(k, p), &lambda) {
                before = 1;
            }
            if before > 0 {
                used = lambda.mul_pow2(before as i64);
                (k, sl) = job_level(p, &used, &self.levels);
            }
        }
        Plan {
            level: k,
            super_large: sl,
            row: self.rows[k - 1].clone(),
            lambda_used: used,
            doubled_before: before,
        }
    }

    fn reset(&mut self) {
        for v in &mut self.state.c {
            for c in v.iter_mut() {
                *c = Rat::zero();
            }
        }
    }

    fn raise(&mut self, steps: u32) {
        if steps == 0 {
            return;
        }
        self.state.lambda_exp += steps as i64;
        let lam = self.lambda_of(self.state.lambda_exp);
        self.state.lambda = Some(lam.clone());
        self.state.phase_index += 1;
        self.state.lambda_history.push(lam);
        self.reset();
    }

    /// Allocate the next job and apply the doubling rules.
    pub fn arrive(&mut self, p: &Rat) -> &JobRecord {
        assert!(p.is_positive(), "job sizes must be positive");
        let job = self.records.len() + 1;
        if self.state.lambda.is_none() {
            let lam = p / self.levels.top_speed();
            self.state.p1 = Some(p.clone());
            self.state.lambda_exp = -self.levels.top_exp;
            self.state.lambda = Some(lam.clone());
            self.state.lambda_history.push(lam.clone());
            self.state.super_large_flags.push(false);
            self.records.push(JobRecord {
                job,
                size: p.clone(),
                lambda_at_arrival: None,
                lambda_used: lam.clone(),
                level: 1,
                super_large: false,
                row: self.rows[0].clone(),
                doubled_before: 0,
                doubled_after: 0,
                lambda_after: lam,
            });
            return self.records.last().unwrap();
        }

        let arrival = self.state.lambda.clone().unwrap();
        let plan = self.peek(p);
        self.raise(plan.doubled_before);
        let k = plan.level;

        let bumped = self.bumped(k, p);
        self.state.c[k - 1] = bumped;

        let mut after = 0;
        if self.config.order == Order::AllocateThenDouble {
            let lam = self.state.lambda.clone().unwrap();
            if plan.super_large {
                after = self.super_large_steps(p, &lam);
            } else if self.gate(k) && self.saturated(&self.state.c[k - 1], &lam) {
                after = 1;
            }
        }
        self.raise(after);
        if self.config.reset == ResetPolicy::EveryNonLastLevelJob && k < self.levels.k_max() {
            self.reset();
        }

        self.state.super_large_flags.push(plan.super_large);
        self.records.push(JobRecord {
            job,
            size: p.clone(),
            lambda_at_arrival: Some(arrival),
            lambda_used: plan.lambda_used,
            level: k,
            super_large: plan.super_large,
            row: plan.row,
            doubled_before: plan.doubled_before,
            doubled_after: after,
            lambda_after: self.state.lambda.clone().unwrap(),
        });
        self.records.last().unwrap()
    }

    pub fn into_trace(self) -> AllocationTrace {
        AllocationTrace {
            config: self.config,
            speeds: self.speeds,
            levels: Arc::try_unwrap(self.levels).unwrap_or_else(|a| (*a).clone()),
            records: self.records,
            final_state: self.state,
        }
    }

    pub fn trace(&self) -> AllocationTrace {
        self.clone().into_trace()
    }
}

/// Highest reported speed, lowest id on ties.
pub fn fastest_machine(speeds: &[Rat]) -> usize {
    let mut best = 0;
    for (i, s) in speeds.iter().enumerate() {
        if *s > speeds[best] {
            best = i;
        }
    }
    best
}

pub fn run_with(instance: &Instance, config: AllocatorConfig) -> Result<AllocationTrace> {
    instance.validate()?;
    let mut alloc = LevelAllocator::new(&instance.speeds, config)?;
    for p in &instance.jobs {
        alloc.arrive(p);
    }
    Ok(alloc.into_trace())
}

/// The makespan allocator.
///
/// ```
/// use selfish_lb::{makespan::run_makespan, model::Instance, Rat};
/// let inst = Instance::from_ints(&[17, 7, 2, 1, 1, 1, 1, 1], &[16, 4]).unwrap();
/// let trace = run_makespan(&inst).unwrap();
/// assert_eq!(trace.records[1].level, 3);
/// assert_eq!(trace.fraction(1, 0), Rat::new(4, 5));
/// assert_eq!(trace.fraction(1, 1), Rat::new(1, 5));
/// ```
pub fn run_makespan(instance: &Instance) -> Result<AllocationTrace> {
    run_with(instance, AllocatorConfig::makespan())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| Rat::from_int(x)).collect()
    }

    #[test]
    fn job_level_examples() {
        let lv = crate::model::build_levels(&ints(&[17, 7, 2, 1, 1, 1, 1, 1])).unwrap();
        let one = Rat::one();
        assert_eq!(job_level(&Rat::from_int(4), &one, &lv), (3, false));
        assert_eq!(job_level(&Rat::from_int(100), &one, &lv), (1, true));
        assert_eq!(job_level(&Rat::from_int(2), &one, &lv), (4, false));
        assert_eq!(job_level(&Rat::from_int(16), &one, &lv), (1, false));
        assert_eq!(job_level(&Rat::new(1, 1000), &one, &lv), (4, false));
    }

    #[test]
    fn allocate_job_examples() {
        let lv = crate::model::build_levels(&ints(&[17, 7, 2, 1, 1, 1, 1, 1])).unwrap();
        let (row, dc) = allocate_job(&Rat::from_int(4), 3, &lv);
        assert_eq!(row, vec![(0, Rat::new(4, 5)), (1, Rat::new(1, 5))]);
        assert_eq!(dc, Rat::new(1, 5));

        let lv = crate::model::build_levels(&ints(&[8, 4, 2, 2, 2, 2, 2, 2])).unwrap();
        let (row, dc) = allocate_job(&Rat::from_int(3), 2, &lv);
        assert_eq!(row, vec![(0, Rat::new(2, 3)), (1, Rat::new(1, 3))]);
        assert_eq!(dc, Rat::new(1, 4));
    }

    #[test]
    fn worked_example_trace() {
        let inst = Instance::from_ints(&[17, 7, 2, 1, 1, 1, 1, 1], &[16, 4]).unwrap();
        let t = run_makespan(&inst).unwrap();
        assert_eq!(t.records[0].row.as_slice(), &[(0, Rat::one())]);
        assert_eq!(t.records[0].lambda_after, Rat::one());
        assert_eq!(t.records[1].lambda_at_arrival, Some(Rat::one()));
        assert_eq!(t.records[1].level, 3);
        assert_eq!(t.final_state.c[2], vec![Rat::new(1, 5)]);
        assert_eq!(t.final_lambda(), Rat::one());
    }

    #[test]
    fn boundary_does_not_double() {
        // C[1][1] reaches Λ exactly.
        let inst = Instance::from_ints(&[1, 1], &[1, 1, 1]).unwrap();
        let t = run_makespan(&inst).unwrap();
        // K = 2, r = (1, 1/2): size 1 is level 1, M≤1 has sum 2, two jobs give C = 1.
        assert_eq!(t.final_state.c[0], vec![Rat::one()]);
        assert_eq!(t.final_lambda(), Rat::one());
        let inst = Instance::from_ints(&[1, 1], &[1, 1, 1, 1]).unwrap();
        assert_eq!(run_makespan(&inst).unwrap().final_lambda(), Rat::from_int(2));
    }

    #[test]
    fn single_machine_doubles_on_super_large_only() {
        let inst = Instance::from_ints(&[3], &[2, 1, 1, 1, 1, 7, 1]).unwrap();
        let t = run_makespan(&inst).unwrap();
        for r in &t.records {
            assert_eq!(r.row.as_slice(), &[(0, Rat::one())]);
        }
        // s̄ = 2, Λ = 1; size 7 > 2 needs Λ ≥ 7/2 → 4.
        assert_eq!(t.final_lambda(), Rat::from_int(4));
        assert_eq!(t.final_state.lambda_history, ints(&[1, 4]));
    }

    #[test]
    fn first_job_split_over_top_group() {
        let inst = Instance::from_ints(&[5, 4, 6, 1], &[3, 1]).unwrap();
        let t = run_makespan(&inst).unwrap();
        let third = Rat::new(1, 3);
        assert_eq!(
            t.records[0].row.as_slice(),
            &[(0, third.clone()), (1, third.clone()), (2, third)]
        );
        assert_eq!(t.records[0].lambda_after, Rat::new(3, 4));
    }

    #[test]
    fn super_large_allocated_before_doubling() {
        let inst = Instance::from_ints(&[4, 2, 1], &[4, 100]).unwrap();
        let t = run_makespan(&inst).unwrap();
        let r = &t.records[1];
        assert!(r.super_large);
        assert_eq!(r.level, 1);
        assert_eq!(r.row.as_slice(), &[(0, Rat::one())]);
        // Λ = 1 → smallest 2^z ≥ 25.
        assert_eq!(r.lambda_after, Rat::from_int(32));
        assert_eq!(r.doubled_after, 5);
    }

    #[test]
    fn double_with_last_lambdas() {
        let mut speeds = vec![16, 4];
        speeds.extend([2; 16]);
        let mut jobs = vec![16, 8, 8, 8];
        jobs.extend([2; 28]);
        jobs.extend([1; 49]);
        let inst = Instance::from_ints(&speeds, &jobs).unwrap();
        let t = run_makespan(&inst).unwrap();
        assert_eq!(t.final_lambda(), Rat::from_int(2));
        let v = run_with(&inst, AllocatorConfig::variant_double_with_last()).unwrap();
        assert_eq!(v.final_lambda(), Rat::from_int(4));
        let fast = inst.with_speed(1, Rat::from_int(8));
        assert_eq!(
            run_with(&fast, AllocatorConfig::variant_double_with_last())
                .unwrap()
                .final_lambda(),
            Rat::one()
        );
    }

    #[test]
    fn double_before_allocate_unit_times() {
        let speeds = ints(&[8, 4, 2, 2, 2, 2, 2, 2]);
        for (config, at_eps) in [
            (AllocatorConfig::makespan(), Rat::new(1, 6)),
            (AllocatorConfig::variant_double_before_allocate(), Rat::new(1, 3)),
        ] {
            let mut a = LevelAllocator::new(&speeds, config).unwrap();
            for p in [8, 3, 3, 3] {
                a.arrive(&Rat::from_int(p));
            }
            let exact = a.peek(&Rat::from_int(3));
            assert_eq!(unit_time(&exact.row, &speeds), Rat::new(1, 6));
            let bumped = a.peek(&(Rat::from_int(3) + Rat::pow2(-20)));
            assert_eq!(unit_time(&bumped.row, &speeds), at_eps);
        }
    }

    #[test]
    fn literal_reset_policy_differs() {
        let inst = Instance::from_ints(&[1, 1], &[1, 1, 1, 1]).unwrap();
        let cfg = AllocatorConfig {
            reset: ResetPolicy::EveryNonLastLevelJob,
            ..AllocatorConfig::makespan()
        };
        // Every level-1 job clears C, so Λ never grows.
        assert_eq!(run_with(&inst, cfg).unwrap().final_lambda(), Rat::one());
    }
}
