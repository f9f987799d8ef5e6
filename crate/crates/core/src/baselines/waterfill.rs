//! Water-filling with a doubling guess of the optimum, simulated by events.
//!
//! Each job is poured into its feasible machines `{i : s_i·Λ ≥ p}`, always
//! raising the lowest makespans at rates proportional to speed. Λ doubles
//! whenever the lowest feasible makespan reaches Λ, which can happen mid-pour
//! and changes the feasible set for the rest of the job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaterfillState {
    pub speeds: Vec<Rat>,
    pub level: Vec<Rat>,
    pub lambda: Option<Rat>,
    pub rows: Vec<Vec<(usize, Rat)>>,
    /// Λ when each job arrived (`None` for job 1).
    pub lambda_at_arrival: Vec<Option<Rat>>,
}

impl WaterfillState {
    pub fn new(speeds: &[Rat]) -> Result<Self> {
        if speeds.is_empty() || speeds.iter().any(|s| !s.is_positive()) {
            return Err(Error::InvalidInput("speeds must be positive and nonempty".into()));
        }
        Ok(WaterfillState {
            speeds: speeds.to_vec(),
            level: vec![Rat::zero(); speeds.len()],
            lambda: None,
            rows: vec![],
            lambda_at_arrival: vec![],
        })
    }

    fn top(&self) -> &Rat {
        self.speeds.iter().max().unwrap()
    }

    fn feasible(&self, p: &Rat, lambda: &Rat) -> Vec<usize> {
        (0..self.speeds.len())
            .filter(|&i| &self.speeds[i] * lambda >= *p)
            .collect()
    }

    fn min_level(&self, ids: &[usize]) -> Rat {
        ids.iter().map(|&i| self.level[i].clone()).min().unwrap()
    }

    pub fn arrive(&mut self, p: &Rat) -> &[(usize, Rat)] {
        assert!(p.is_positive(), "job sizes must be positive");
        let m = self.speeds.len();
        let mut poured = vec![Rat::zero(); m];
        let Some(mut lambda) = self.lambda.clone() else {
            let top = self.top().clone();
            let fastest: Vec<usize> = (0..m).filter(|&i| self.speeds[i] == top).collect();
            let share = Rat::from_int(fastest.len() as i64).recip();
            for &i in &fastest {
                poured[i] = p * &share;
                self.level[i] += &poured[i] / &self.speeds[i];
            }
            self.lambda = Some(p / &top);
            self.lambda_at_arrival.push(None);
            return self.finish(p, poured);
        };
        self.lambda_at_arrival.push(Some(lambda.clone()));

        let top = self.top().clone();
        while &top * &lambda < *p {
            lambda = lambda.mul_pow2(1);
        }
        let mut rest = p.clone();
        while rest.is_positive() {
            let mut feas = self.feasible(p, &lambda);
            while self.min_level(&feas) >= lambda {
                lambda = lambda.mul_pow2(1);
                feas = self.feasible(p, &lambda);
            }
            let low = self.min_level(&feas);
            let active: Vec<usize> = feas.iter().copied().filter(|&i| self.level[i] == low).collect();
            let next = feas
                .iter()
                .map(|&i| &self.level[i])
                .filter(|l| **l > low)
                .min()
                .cloned()
                .map_or(lambda.clone(), |l| l.min(lambda.clone()));
            let rate: Rat = active.iter().map(|&i| &self.speeds[i]).sum();
            let room = (&next - &low) * &rate;
            let (rise, used) = if rest <= room {
                (&rest / &rate, rest.clone())
            } else {
                (&next - &low, room)
            };
            for &i in &active {
                poured[i] += &rise * &self.speeds[i];
                self.level[i] += &rise;
            }
            rest -= used;
            if &low + &rise == lambda {
                lambda = lambda.mul_pow2(1);
            }
        }
        self.lambda = Some(lambda);
        self.finish(p, poured)
    }

    fn finish(&mut self, p: &Rat, poured: Vec<Rat>) -> &[(usize, Rat)] {
        let row: Vec<(usize, Rat)> = poured
            .into_iter()
            .enumerate()
            .filter(|(_, x)| x.is_positive())
            .map(|(i, x)| (i, x / p))
            .collect();
        self.rows.push(row);
        self.rows.last().unwrap()
    }

    pub fn loads(&self) -> Vec<Rat> {
        self.level.iter().zip(&self.speeds).map(|(l, s)| l * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaterfillOutcome {
    pub rows: Vec<Vec<(usize, Rat)>>,
    pub loads: Vec<Rat>,
    pub final_lambda: Rat,
    pub state: WaterfillState,
}

pub fn run_waterfill(instance: &Instance) -> Result<WaterfillOutcome> {
    instance.validate()?;
    let mut st = WaterfillState::new(&instance.speeds)?;
    for p in &instance.jobs {
        st.arrive(p);
    }
    Ok(WaterfillOutcome {
        rows: st.rows.clone(),
        loads: st.loads(),
        final_lambda: st.lambda.clone().unwrap(),
        state: st,
    })
}
