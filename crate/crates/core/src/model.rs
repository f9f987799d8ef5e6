//! Machines, jobs, speed rounding and the level structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rat::Rat;

/// Largest power of two not exceeding `s`.
///
/// ```
/// use selfish_lb::{model::round_speed, Rat};
/// assert_eq!(round_speed(&Rat::from_int(17)).unwrap(), Rat::from_int(16));
/// assert_eq!(round_speed(&Rat::new(3, 5)).unwrap(), Rat::new(1, 2));
/// ```
pub fn round_speed(s: &Rat) -> Result<Rat> {
    let z = speed_exp(s)?;
    Ok(Rat::pow2(z))
}

/// Exponent `z` of the rounded speed `2^z`.
pub fn speed_exp(s: &Rat) -> Result<i64> {
    s.floor_log2()
        .ok_or_else(|| Error::InvalidInput(format!("speed must be positive, got {s}")))
}

/// `⌊log₂ m⌋ + 1`, from the bit length of `m`.
pub fn level_count(m: usize) -> usize {
    assert!(m >= 1);
    (usize::BITS - m.leading_zeros()) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    /// 1-based arrival index.
    pub id: usize,
    pub size: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineProfile {
    /// 0-based.
    pub id: usize,
    pub reported_speed: Rat,
    pub rounded_speed: Rat,
    pub speed_exp: i64,
    pub active: bool,
    /// 1-based level index when active.
    pub group: Option<usize>,
}

/// Groups of active machines by rounded speed, `r_k = s̄₁ / 2^{k-1}`.
///
/// Level indices are 1-based in the public API; vectors are indexed by `k - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStructure {
    pub machines: Vec<MachineProfile>,
    /// Exponent of `s̄₁`.
    pub top_exp: i64,
    /// `K`.
    pub level_count: usize,
    pub group_speeds: Vec<Rat>,
    pub groups: Vec<Vec<usize>>,
    pub prefix_speed_sum: Vec<Rat>,
}

impl LevelStructure {
    pub fn m(&self) -> usize {
        self.machines.len()
    }

    pub fn k_max(&self) -> usize {
        self.level_count
    }

    /// `r_k` for `k ∈ [1, K]`.
    pub fn r(&self, k: usize) -> &Rat {
        &self.group_speeds[k - 1]
    }

    pub fn top_speed(&self) -> &Rat {
        &self.group_speeds[0]
    }

    /// `M_k`.
    pub fn group(&self, k: usize) -> &[usize] {
        &self.groups[k - 1]
    }

    /// `M≤k`, fastest group first, ids ascending inside a group.
    pub fn prefix(&self, k: usize) -> Vec<usize> {
        self.groups[..k].iter().flatten().copied().collect()
    }

    /// `Σ_{M≤k} s̄_i`.
    pub fn prefix_sum(&self, k: usize) -> &Rat {
        &self.prefix_speed_sum[k - 1]
    }

    pub fn rounded(&self, i: usize) -> &Rat {
        &self.machines[i].rounded_speed
    }

    pub fn reported(&self, i: usize) -> &Rat {
        &self.machines[i].reported_speed
    }

    pub fn active_count(&self) -> usize {
        self.machines.iter().filter(|p| p.active).count()
    }
}

/// Round every speed and partition the active machines into `K` groups.
///
/// ```
/// use selfish_lb::{model::build_levels, Rat};
/// let speeds: Vec<Rat> = [17, 7, 2, 1, 1, 1, 1, 1].map(Rat::from_int).to_vec();
/// let lv = build_levels(&speeds).unwrap();
/// assert_eq!(lv.level_count, 4);
/// assert_eq!(lv.groups, vec![vec![0], vec![], vec![1], vec![2]]);
/// assert!(!lv.machines[3].active);
/// ```
pub fn build_levels(speeds: &[Rat]) -> Result<LevelStructure> {
    if speeds.is_empty() {
        return Err(Error::InvalidInput("at least one machine is required".into()));
    }
    let m = speeds.len();
    let exps = speeds.iter().map(speed_exp).collect::<Result<Vec<_>>>()?;
    let top_exp = *exps.iter().max().unwrap();
    let k_max = level_count(m);

    let mut groups = vec![Vec::new(); k_max];
    let machines: Vec<MachineProfile> = speeds
        .iter()
        .zip(&exps)
        .enumerate()
        .map(|(id, (s, &z))| {
            // s̄_i ≥ s̄₁/m  ⇔  2^{z₁ - z_i} ≤ m  ⇔  z₁ - z_i ≤ K - 1
            let gap = (top_exp - z) as u64;
            let active = gap < k_max as u64;
            let group = active.then(|| gap as usize + 1);
            if let Some(k) = group {
                groups[k - 1].push(id);
            }
            MachineProfile {
                id,
                reported_speed: s.clone(),
                rounded_speed: Rat::pow2(z),
                speed_exp: z,
                active,
                group,
            }
        })
        .collect();

    let group_speeds: Vec<Rat> = (0..k_max).map(|k| Rat::pow2(top_exp - k as i64)).collect();
    let mut prefix_speed_sum = Vec::with_capacity(k_max);
    let mut acc = Rat::zero();
    for (k, g) in groups.iter().enumerate() {
        acc += &group_speeds[k] * Rat::from_int(g.len() as i64);
        prefix_speed_sum.push(acc.clone());
    }

    Ok(LevelStructure {
        machines,
        top_exp,
        level_count: k_max,
        group_speeds,
        groups,
        prefix_speed_sum,
    })
}

/// Reported speeds and job sizes in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub speeds: Vec<Rat>,
    pub jobs: Vec<Rat>,
}

impl Instance {
    pub fn new(speeds: Vec<Rat>, jobs: Vec<Rat>) -> Result<Self> {
        let inst = Instance { speeds, jobs };
        inst.validate()?;
        Ok(inst)
    }

    /// Shorthand for integer instances.
    pub fn from_ints(speeds: &[i64], jobs: &[i64]) -> Result<Self> {
        Instance::new(
            speeds.iter().map(|&s| Rat::from_int(s)).collect(),
            jobs.iter().map(|&p| Rat::from_int(p)).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() {
            return Err(Error::InvalidInput("at least one machine is required".into()));
        }
        if self.jobs.is_empty() {
            return Err(Error::InvalidInput("at least one job is required".into()));
        }
        for (i, s) in self.speeds.iter().enumerate() {
            if !s.is_positive() {
                return Err(Error::Parse {
                    field: format!("speeds[{i}]"),
                    reason: format!("must be positive, got {s}"),
                });
            }
        }
        for (j, p) in self.jobs.iter().enumerate() {
            if !p.is_positive() {
                return Err(Error::Parse {
                    field: format!("jobs[{j}]"),
                    reason: format!("must be positive, got {p}"),
                });
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.speeds.len()
    }

    pub fn n(&self) -> usize {
        self.jobs.len()
    }

    pub fn job_list(&self) -> Vec<Job> {
        self.jobs
            .iter()
            .enumerate()
            .map(|(j, p)| Job {
                id: j + 1,
                size: p.clone(),
            })
            .collect()
    }

    pub fn total_size(&self) -> Rat {
        self.jobs.iter().sum()
    }

    /// Same instance with machine `i` reporting `speed`.
    pub fn with_speed(&self, i: usize, speed: Rat) -> Instance {
        let mut out = self.clone();
        out.speeds[i] = speed;
        out
    }

    /// Same instance with job `j` (0-based) reporting `size`.
    pub fn with_job(&self, j: usize, size: Rat) -> Instance {
        let mut out = self.clone();
        out.jobs[j] = size;
        out
    }

    pub fn levels(&self) -> Result<LevelStructure> {
        build_levels(&self.speeds)
    }
}
