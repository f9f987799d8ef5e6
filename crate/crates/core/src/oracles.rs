//! Offline optima by exhaustive search, and cheap lower bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqnorm::{gamma_of, lq_norm_f64, QParam};
use crate::makespan::fastest_machine;
use crate::model::Instance;
use crate::rat::Rat;

/// Largest `m^n` the brute-force oracles accept.
pub const BRUTEFORCE_GUARD: f64 = 1e8;

/// Relative tolerance for float objective comparisons in the ℓq search.
pub const LQ_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bruteforce,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptValue {
    Exact(Rat),
    Approx(f64),
}

impl OptValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            OptValue::Exact(r) => r.to_f64(),
            OptValue::Approx(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rat> {
        match self {
            OptValue::Exact(r) => Some(r),
            OptValue::Approx(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub value: OptValue,
    pub method: Method,
    /// Machine per job, lexicographically smallest among optimal assignments.
    pub witness: Option<Vec<usize>>,
}

fn guard(instance: &Instance) -> Result<()> {
    let size = (instance.m() as f64).powi(instance.n() as i32);
    if size > BRUTEFORCE_GUARD {
        return Err(Error::TooLarge(format!(
            "brute force needs m^n = {}^{} > {BRUTEFORCE_GUARD:e} assignments",
            instance.m(),
            instance.n()
        )));
    }
    Ok(())
}

/// Machines equivalent to an earlier one with the same speed and completion are skipped.
fn symmetric(speeds: &[Rat], done: &[Rat], i: usize) -> bool {
    (0..i).any(|k| speeds[k] == speeds[i] && done[k] == done[i])
}

struct MakespanSearch<'a> {
    times: Vec<Vec<Rat>>,
    speeds: &'a [Rat],
    best: Rat,
    best_assign: Vec<usize>,
    current: Vec<usize>,
}

impl MakespanSearch<'_> {
    fn dfs(&mut self, j: usize, done: &mut Vec<Rat>, worst: &Rat) {
        if j == self.times.len() {
            if *worst < self.best {
                self.best = worst.clone();
                self.best_assign = self.current.clone();
            }
            return;
        }
        for i in 0..done.len() {
            if symmetric(self.speeds, done, i) {
                continue;
            }
            let next = &done[i] + &self.times[j][i];
            if next >= self.best {
                continue;
            }
            let w = if next > *worst { next.clone() } else { worst.clone() };
            let prev = std::mem::replace(&mut done[i], next);
            self.current.push(i);
            self.dfs(j + 1, done, &w);
            self.current.pop();
            done[i] = prev;
        }
    }
}

/// Exact minimum makespan over all `m^n` assignments.
///
/// ```
/// use selfish_lb::{model::Instance, oracles::opt_makespan_bruteforce, Rat};
/// let r = opt_makespan_bruteforce(&Instance::from_ints(&[2, 1], &[2, 2]).unwrap()).unwrap();
/// assert_eq!(r.value.exact(), Some(&Rat::from_int(2)));
/// ```
pub fn opt_makespan_bruteforce(instance: &Instance) -> Result<OptResult> {
    guard(instance)?;
    let m = instance.m();
    let times: Vec<Vec<Rat>> = instance
        .jobs
        .iter()
        .map(|p| instance.speeds.iter().map(|s| p / s).collect())
        .collect();
    // Greedy upper bound seeds the pruning; `+1` keeps it strict so the witness search still runs.
    let seed_bound = instance.total_size() / &instance.speeds[fastest_machine(&instance.speeds)] + Rat::one();
    let zero = vec![Rat::zero(); m];
    let first: Vec<usize> = (0..m).filter(|&i| !symmetric(&instance.speeds, &zero, i)).collect();
    let results: Vec<(Rat, Vec<usize>)> = first
        .par_iter()
        .map(|&i0| {
            let mut done = zero.clone();
            done[i0] = times[0][i0].clone();
            let mut s = MakespanSearch {
                times: times.clone(),
                speeds: &instance.speeds,
                best: seed_bound.clone(),
                best_assign: Vec::new(),
                current: vec![i0],
            };
            let w = done[i0].clone();
            s.dfs(1, &mut done, &w);
            (s.best, s.best_assign)
        })
        .filter(|(_, a)| !a.is_empty())
        .collect();
    let (value, witness) = results
        .into_iter()
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .expect("some assignment beats the seed bound");
    Ok(OptResult {
        value: OptValue::Exact(value),
        method: Method::Bruteforce,
        witness: Some(witness),
    })
}

/// `max(Σp / Σs, max p / s_max)` on reported speeds.
pub fn lb_makespan(instance: &Instance) -> Rat {
    let total_speed: Rat = instance.speeds.iter().sum();
    let s_max = &instance.speeds[fastest_machine(&instance.speeds)];
    let p_max = instance.jobs.iter().max().unwrap();
    (instance.total_size() / total_speed).max(p_max / s_max)
}

pub fn assignment_makespan(instance: &Instance, assign: &[usize]) -> Rat {
    completions(instance, assign).into_iter().max().unwrap()
}

pub fn completions(instance: &Instance, assign: &[usize]) -> Vec<Rat> {
    let mut loads = vec![Rat::zero(); instance.m()];
    for (p, &i) in instance.jobs.iter().zip(assign) {
        loads[i] += p;
    }
    loads.iter().zip(&instance.speeds).map(|(l, s)| l / s).collect()
}

pub fn assignment_lq(instance: &Instance, assign: &[usize], q: &QParam) -> f64 {
    let c: Vec<f64> = completions(instance, assign).iter().map(Rat::to_f64).collect();
    lq_norm_f64(&c, q)
}

struct LqSearch<'a> {
    times: Vec<Vec<f64>>,
    speeds: &'a [Rat],
    q: f64,
    best: f64,
    best_assign: Vec<usize>,
    current: Vec<usize>,
}

impl LqSearch<'_> {
    /// `acc` is `Σ C_i^q`, monotone in the partial assignment.
    fn dfs(&mut self, j: usize, done: &mut Vec<f64>, acc: f64) {
        if j == self.times.len() {
            if acc < self.best * (1.0 - LQ_TIE_TOLERANCE) {
                self.best = acc;
                self.best_assign = self.current.clone();
            }
            return;
        }
        for i in 0..done.len() {
            if (0..i).any(|k| self.speeds[k] == self.speeds[i] && done[k] == done[i]) {
                continue;
            }
            let next = done[i] + self.times[j][i];
            let next_acc = acc - done[i].powf(self.q) + next.powf(self.q);
            if next_acc >= self.best * (1.0 - LQ_TIE_TOLERANCE) {
                continue;
            }
            let prev = std::mem::replace(&mut done[i], next);
            self.current.push(i);
            self.dfs(j + 1, done, next_acc);
            self.current.pop();
            done[i] = prev;
        }
    }
}

/// Minimum ℓq norm of completion times over all assignments.
///
/// Exact for `q = 1` and `q = ∞`; otherwise a float search with relative tie
/// tolerance [`LQ_TIE_TOLERANCE`].
pub fn opt_lq_bruteforce(instance: &Instance, q: &QParam) -> Result<OptResult> {
    guard(instance)?;
    match q {
        QParam::Inf => return opt_makespan_bruteforce(instance),
        QParam::One => {
            let best = fastest_machine(&instance.speeds);
            let value = instance.total_size() / &instance.speeds[best];
            return Ok(OptResult {
                value: OptValue::Exact(value),
                method: Method::Bruteforce,
                witness: Some(vec![best; instance.n()]),
            });
        }
        QParam::Finite { .. } => {}
    }
    let qf = q.to_f64();
    let m = instance.m();
    let times: Vec<Vec<f64>> = instance
        .jobs
        .iter()
        .map(|p| instance.speeds.iter().map(|s| (p / s).to_f64()).collect())
        .collect();
    // Scale so the largest single time is 1; keeps C^q representable.
    let scale = times.iter().flatten().copied().fold(0.0_f64, f64::max);
    let times: Vec<Vec<f64>> = times.iter().map(|r| r.iter().map(|t| t / scale).collect()).collect();
    let zero_f = vec![0.0; m];
    let zero_r = vec![Rat::zero(); m];
    let first: Vec<usize> = (0..m).filter(|&i| !symmetric(&instance.speeds, &zero_r, i)).collect();
    let results: Vec<(f64, Vec<usize>)> = first
        .par_iter()
        .map(|&i0| {
            let mut done = zero_f.clone();
            done[i0] = times[0][i0];
            let mut s = LqSearch {
                times: times.clone(),
                speeds: &instance.speeds,
                q: qf,
                best: f64::INFINITY,
                best_assign: Vec::new(),
                current: vec![i0],
            };
            let acc = done[i0].powf(qf);
            s.dfs(1, &mut done, acc);
            (s.best, s.best_assign)
        })
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (v, a) in results {
        best = match best {
            None => Some((v, a)),
            Some((bv, ba)) => {
                if v < bv * (1.0 - LQ_TIE_TOLERANCE) || (v <= bv * (1.0 + LQ_TIE_TOLERANCE) && a < ba) {
                    Some((v, a))
                } else {
                    Some((bv, ba))
                }
            }
        };
    }
    let (_, witness) = best.expect("at least one branch");
    let value = assignment_lq(instance, &witness, q);
    Ok(OptResult {
        value: OptValue::Approx(value),
        method: Method::Bruteforce,
        witness: Some(witness),
    })
}

/// `max(Σp / (Σ s_i^γ)^{1/γ}, max p / s_max)`.
pub fn lb_lq(instance: &Instance, q: &QParam) -> f64 {
    let s_max = instance.speeds[fastest_machine(&instance.speeds)].to_f64();
    let p_max = instance.jobs.iter().max().unwrap().to_f64();
    let total = instance.total_size().to_f64();
    let split = match gamma_of(q) {
        None => total / s_max,
        Some(g) => {
            let g = g.to_f64();
            let sum: f64 = instance.speeds.iter().map(|s| (s.to_f64() / s_max).powf(g)).sum();
            total / (s_max * sum.powf(1.0 / g))
        }
    };
    split.max(p_max / s_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn makespan_examples() {
        let r = opt_makespan_bruteforce(&Instance::from_ints(&[3], &[1, 2, 4]).unwrap()).unwrap();
        assert_eq!(r.value.exact(), Some(&Rat::new(7, 3)));
        let r = opt_makespan_bruteforce(&Instance::from_ints(&[2, 1], &[2, 2]).unwrap()).unwrap();
        assert_eq!(r.value.exact(), Some(&Rat::from_int(2)));
        let r = opt_makespan_bruteforce(&Instance::from_ints(&[1, 1, 1], &[1; 6]).unwrap()).unwrap();
        assert_eq!(r.value.exact(), Some(&Rat::from_int(2)));
        assert_eq!(r.witness, Some(vec![0, 0, 1, 1, 2, 2]));
    }

    #[test]
    fn guard_rejects_large() {
        let inst = Instance::from_ints(&[1; 10], &[1; 9]).unwrap();
        assert!(matches!(opt_makespan_bruteforce(&inst), Err(Error::TooLarge(_))));
    }

    #[test]
    fn lq_examples() {
        let inst = Instance::from_ints(&[2, 1], &[3]).unwrap();
        let r = opt_lq_bruteforce(&inst, &"2".parse().unwrap()).unwrap();
        assert!((r.value.to_f64() - 1.5).abs() < 1e-12);
        let lb = lb_lq(&inst, &"2".parse().unwrap());
        // The splittable term 3/√5 is dominated by the largest job on the fastest machine.
        assert!(3.0 / 5f64.sqrt() < lb && (lb - 1.5).abs() < 1e-12);
        let r = opt_lq_bruteforce(&inst, &QParam::One).unwrap();
        assert_eq!(r.value.exact(), Some(&Rat::new(3, 2)));
        assert!((lb_lq(&inst, &QParam::One) - 1.5).abs() < 1e-12);
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (
            prop::collection::vec(1i64..9, 1..4),
            prop::collection::vec(1i64..17, 1..7),
        )
            .prop_map(|(s, p)| Instance::from_ints(&s, &p).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lower_bounds_hold(inst in arb_instance()) {
            let opt = opt_makespan_bruteforce(&inst).unwrap();
            let v = opt.value.exact().unwrap().clone();
            prop_assert!(lb_makespan(&inst) <= v);
            prop_assert_eq!(assignment_makespan(&inst, opt.witness.as_ref().unwrap()), v);
            for q in ["3/2", "2", "3"] {
                let q: QParam = q.parse().unwrap();
                let r = opt_lq_bruteforce(&inst, &q).unwrap();
                let w = r.witness.unwrap();
                prop_assert!((assignment_lq(&inst, &w, &q) - r.value.to_f64()).abs() <= 1e-12 * r.value.to_f64());
                prop_assert!(lb_lq(&inst, &q) <= r.value.to_f64() * (1.0 + 1e-9));
            }
        }

        #[test]
        fn lq_witness_is_optimal_against_enumeration(inst in arb_instance()) {
            let q: QParam = "2".parse().unwrap();
            let r = opt_lq_bruteforce(&inst, &q).unwrap();
            let (m, n) = (inst.m(), inst.n());
            let mut assign = vec![0; n];
            loop {
                prop_assert!(assignment_lq(&inst, &assign, &q) >= r.value.to_f64() * (1.0 - 1e-9));
                let mut k = 0;
                while k < n && assign[k] == m - 1 { assign[k] = 0; k += 1; }
                if k == n { break; }
                assign[k] += 1;
            }
        }
    }
}
