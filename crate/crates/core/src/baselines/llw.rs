//! Posted-price greedy mechanism with well-behaved prices.
//!
//! Speeds are rounded down to powers of a base `a′`. Before each job the
//! machines are ranked by rounded speed (descending), ties by makespan
//! (descending), then id. Machine at rank `i` posts `ρ_i = Σ_{i′≤i} π_{i′}`
//! with `π_i = (s_i/s_{i−1})(C_{i−1} − C_i)`, and the job takes the cheapest
//! `C_i + p/s_i + ρ_i`, ties to the lower rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::rat::Rat;

/// Largest `base^z ≤ s`.
pub fn round_to_base(s: &Rat, base: &Rat) -> Result<Rat> {
    if !s.is_positive() {
        return Err(Error::InvalidInput(format!("speed must be positive, got {s}")));
    }
    if *base <= Rat::one() {
        return Err(Error::InvalidInput(format!("rounding base must exceed 1, got {base}")));
    }
    let guess = (s.to_f64().ln() / base.to_f64().ln()).floor() as i32;
    let mut z = guess;
    while base.powi(z) > *s {
        z -= 1;
    }
    while base.powi(z + 1) <= *s {
        z += 1;
    }
    Ok(base.powi(z))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlwDecision {
    pub job: usize,
    pub machine: usize,
    /// Machine ids by rank.
    pub ranking: Vec<usize>,
    /// `ρ` by rank.
    pub prices: Vec<Rat>,
    /// Cost by rank.
    pub costs: Vec<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlwState {
    pub base: Rat,
    pub rounded: Vec<Rat>,
    /// Makespan per machine on rounded speeds.
    pub makespan: Vec<Rat>,
    pub loads: Vec<Rat>,
    pub decisions: Vec<LlwDecision>,
}

impl LlwState {
    pub fn new(speeds: &[Rat], base: Rat) -> Result<Self> {
        let rounded = speeds
            .iter()
            .map(|s| round_to_base(s, &base))
            .collect::<Result<Vec<_>>>()?;
        let m = speeds.len();
        Ok(LlwState {
            base,
            rounded,
            makespan: vec![Rat::zero(); m],
            loads: vec![Rat::zero(); m],
            decisions: vec![],
        })
    }

    fn ranking(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.rounded.len()).collect();
        ids.sort_by(|&a, &b| {
            self.rounded[b]
                .cmp(&self.rounded[a])
                .then_with(|| self.makespan[b].cmp(&self.makespan[a]))
                .then_with(|| a.cmp(&b))
        });
        ids
    }

    /// Decision for a job of size `p` without committing it.
    pub fn decide(&self, p: &Rat) -> Result<LlwDecision> {
        let ranking = self.ranking();
        let mut prices = Vec::with_capacity(ranking.len());
        let mut rho = Rat::zero();
        for (r, &i) in ranking.iter().enumerate() {
            if r > 0 {
                let prev = ranking[r - 1];
                rho += &self.rounded[i] / &self.rounded[prev] * (&self.makespan[prev] - &self.makespan[i]);
            }
            prices.push(rho.clone());
        }
        let costs: Vec<Rat> = ranking
            .iter()
            .zip(&prices)
            .map(|(&i, rho)| &self.makespan[i] + p / &self.rounded[i] + rho)
            .collect();
        // Cheaper on rank i than on i−1 iff C_{i−1} ≥ C_i + p/s_i, whenever s_i < s_{i−1}.
        for r in 1..ranking.len() {
            let (a, b) = (ranking[r - 1], ranking[r]);
            if self.rounded[b] < self.rounded[a] {
                let cheaper = costs[r - 1] >= costs[r];
                let gap = self.makespan[a] >= &self.makespan[b] + p / &self.rounded[b];
                if cheaper != gap {
                    return Err(Error::Invariant(format!(
                        "price property fails between ranks {} and {}",
                        r,
                        r + 1
                    )));
                }
            }
        }
        let mut best = 0;
        for r in 1..costs.len() {
            if costs[r] < costs[best] {
                best = r;
            }
        }
        Ok(LlwDecision {
            job: self.decisions.len() + 1,
            machine: ranking[best],
            ranking,
            prices,
            costs,
        })
    }

    pub fn arrive(&mut self, p: &Rat) -> Result<&LlwDecision> {
        let d = self.decide(p)?;
        let i = d.machine;
        self.loads[i] += p;
        self.makespan[i] = &self.loads[i] / &self.rounded[i];
        self.decisions.push(d);
        Ok(self.decisions.last().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlwOutcome {
    pub assign: Vec<usize>,
    pub loads: Vec<Rat>,
    pub state: LlwState,
}

pub fn run_llw(instance: &Instance, base: &Rat) -> Result<LlwOutcome> {
    instance.validate()?;
    let mut st = LlwState::new(&instance.speeds, base.clone())?;
    let mut assign = Vec::with_capacity(instance.n());
    for p in &instance.jobs {
        assign.push(st.arrive(p)?.machine);
    }
    Ok(LlwOutcome {
        assign,
        loads: st.loads.clone(),
        state: st,
    })
}
