//! One interface over every allocation rule in the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{LlwState, WaterfillState};
use crate::error::{Error, Result};
use crate::lqnorm::QParam;
use crate::makespan::{unit_time, AllocationTrace, AllocatorConfig, LevelAllocator};
use crate::model::Instance;
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mechanism {
    Makespan,
    Lq(QParam),
    /// Posted prices over speeds rounded down to powers of `base`.
    Llw {
        base: Rat,
    },
    Waterfill,
    /// Level allocator that doubles before allocating.
    VariantC,
    /// Level allocator whose last level may trigger doubling.
    VariantD,
}

impl Mechanism {
    /// `name` is one of `makespan`, `lq`, `llw`, `waterfill`, `variant-c`, `variant-d`.
    pub fn from_parts(name: &str, q: Option<QParam>) -> Result<Self> {
        let m = match name {
            "makespan" => Mechanism::Makespan,
            "lq" => Mechanism::Lq(q.ok_or_else(|| Error::InvalidInput("mechanism lq needs q".into()))?),
            "llw" => Mechanism::Llw { base: Rat::from_int(2) },
            "waterfill" => Mechanism::Waterfill,
            "variant-c" => Mechanism::VariantC,
            "variant-d" => Mechanism::VariantD,
            _ => return Err(Error::InvalidInput(format!("unknown mechanism {name:?}"))),
        };
        if q.is_some() && !matches!(m, Mechanism::Lq(_)) {
            return Err(Error::InvalidInput(format!(
                "q only applies to mechanism lq, not {name}"
            )));
        }
        Ok(m)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Makespan => "makespan",
            Mechanism::Lq(_) => "lq",
            Mechanism::Llw { .. } => "llw",
            Mechanism::Waterfill => "waterfill",
            Mechanism::VariantC => "variant-c",
            Mechanism::VariantD => "variant-d",
        }
    }

    /// The level-allocator configuration, if this is one.
    pub fn config(&self) -> Option<AllocatorConfig> {
        match self {
            Mechanism::Makespan => Some(AllocatorConfig::makespan()),
            Mechanism::Lq(q) => Some(AllocatorConfig::lq(*q)),
            Mechanism::VariantC => Some(AllocatorConfig::variant_double_before_allocate()),
            Mechanism::VariantD => Some(AllocatorConfig::variant_double_with_last()),
            _ => None,
        }
    }

    /// Fractions are exact rationals decided without float comparisons.
    pub fn exact(&self) -> bool {
        !matches!(self, Mechanism::Lq(QParam::Finite { .. }))
    }

    pub fn has_lambda(&self) -> bool {
        !matches!(self, Mechanism::Llw { .. })
    }

    pub fn session(&self, speeds: &[Rat]) -> Result<Session> {
        Ok(match (self, self.config()) {
            (_, Some(cfg)) => Session::Level(Box::new(LevelAllocator::new(speeds, cfg)?)),
            (Mechanism::Llw { base }, None) => Session::Llw(LlwState::new(speeds, base.clone())?),
            _ => Session::Waterfill(WaterfillState::new(speeds)?),
        })
    }

    pub fn run(&self, instance: &Instance) -> Result<Outcome> {
        instance.validate()?;
        let mut s = self.session(&instance.speeds)?;
        let mut rows = Vec::with_capacity(instance.n());
        let mut lambdas = Vec::with_capacity(instance.n());
        for p in &instance.jobs {
            lambdas.push(s.lambda());
            rows.push(s.arrive(p)?);
        }
        Ok(Outcome {
            speeds: instance.speeds.clone(),
            sizes: instance.jobs.clone(),
            rows,
            lambdas,
            final_lambda: s.lambda(),
        })
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Lq(q) => write!(f, "lq:{q}"),
            Mechanism::Llw { base } if *base != Rat::from_int(2) => write!(f, "llw:{base}"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    /// `makespan`, `lq:<q>`, `llw`, `llw:<base>`, `waterfill`, `variant-c`, `variant-d`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("lq", q)) => Ok(Mechanism::Lq(q.parse()?)),
            Some(("llw", b)) => {
                let base: Rat = b.parse().map_err(|e| Error::Parse {
                    field: "base".into(),
                    reason: format!("{e}"),
                })?;
                if base <= Rat::one() {
                    return Err(Error::InvalidInput(format!("llw base must exceed 1, got {base}")));
                }
                Ok(Mechanism::Llw { base })
            }
            Some(_) => Err(Error::InvalidInput(format!("unknown mechanism {s:?}"))),
            None => Mechanism::from_parts(s, None),
        }
    }
}

impl Serialize for Mechanism {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mechanism {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A mechanism part way through an arrival sequence.
#[derive(Debug, Clone)]
pub enum Session {
    Level(Box<LevelAllocator>),
    Llw(LlwState),
    Waterfill(WaterfillState),
}

impl Session {
    pub fn lambda(&self) -> Option<Rat> {
        match self {
            Session::Level(a) => a.lambda().cloned(),
            Session::Llw(_) => None,
            Session::Waterfill(w) => w.lambda.clone(),
        }
    }

    pub fn arrive(&mut self, p: &Rat) -> Result<Vec<(usize, Rat)>> {
        Ok(match self {
            Session::Level(a) => a.arrive(p).row.to_vec(),
            Session::Llw(s) => vec![(s.arrive(p)?.machine, Rat::one())],
            Session::Waterfill(w) => w.arrive(p).to_vec(),
        })
    }

    /// Row a job of size `p` would get now; the session is unchanged.
    pub fn probe(&self, p: &Rat) -> Result<Vec<(usize, Rat)>> {
        Ok(match self {
            Session::Level(a) => a.peek(p).row.to_vec(),
            Session::Llw(s) => vec![(s.decide(p)?.machine, Rat::one())],
            Session::Waterfill(w) => w.clone().arrive(p).to_vec(),
        })
    }
}

/// Fractional outcome of any mechanism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub speeds: Vec<Rat>,
    pub sizes: Vec<Rat>,
    pub rows: Vec<Vec<(usize, Rat)>>,
    /// Λ when each job arrived.
    pub lambdas: Vec<Option<Rat>>,
    pub final_lambda: Option<Rat>,
}

impl Outcome {
    pub fn fraction(&self, j: usize, i: usize) -> Rat {
        self.rows[j]
            .iter()
            .find(|(k, _)| *k == i)
            .map(|(_, x)| x.clone())
            .unwrap_or_else(Rat::zero)
    }

    pub fn loads(&self) -> Vec<Rat> {
        crate::rounding::expected_loads(&self.rows, &self.sizes, self.speeds.len())
    }

    pub fn completion_times(&self) -> Vec<Rat> {
        self.loads().iter().zip(&self.speeds).map(|(l, s)| l / s).collect()
    }

    pub fn unit_time(&self, j: usize) -> Rat {
        unit_time(&self.rows[j], &self.speeds)
    }

    /// Λ at arrival of jobs `2..=n`, then the final Λ.
    pub fn lambda_sequence(&self) -> Vec<Rat> {
        self.lambdas
            .iter()
            .flatten()
            .cloned()
            .chain(self.final_lambda.clone())
            .collect()
    }
}

impl From<&AllocationTrace> for Outcome {
    fn from(t: &AllocationTrace) -> Self {
        Outcome {
            speeds: t.speeds.clone(),
            sizes: t.records.iter().map(|r| r.size.clone()).collect(),
            rows: t.records.iter().map(|r| r.row.to_vec()).collect(),
            lambdas: t.records.iter().map(|r| r.lambda_at_arrival.clone()).collect(),
            final_lambda: t.final_state.lambda.clone(),
        }
    }
}
