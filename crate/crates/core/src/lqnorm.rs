//! ℓq-norm allocator: weights `s̄^γ` with `γ = q/(q-1)` and a norm-based
//! saturation trigger. `q = ∞` is the makespan allocator; `q = 1` sends every
//! job to one fastest machine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::makespan::{run_with, AllocationTrace, AllocatorConfig};
use crate::model::{Instance, LevelStructure};
use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QParam {
    /// Exactly 1.
    One,
    /// Rational `num/den > 1`, in lowest terms.
    Finite {
        num: u64,
        den: u64,
    },
    Inf,
}

impl QParam {
    pub fn finite(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidInput("q has a zero denominator".into()));
        }
        let g = num_integer::gcd(num, den);
        let (num, den) = (num / g, den / g);
        match num.cmp(&den) {
            std::cmp::Ordering::Less => Err(Error::InvalidInput(format!("q must be >= 1, got {num}/{den}"))),
            std::cmp::Ordering::Equal => Ok(QParam::One),
            std::cmp::Ordering::Greater => Ok(QParam::Finite { num, den }),
        }
    }

    pub fn as_rat(&self) -> Option<Rat> {
        match *self {
            QParam::One => Some(Rat::one()),
            QParam::Finite { num, den } => Some(Rat::new(num as i64, den as i64)),
            QParam::Inf => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match *self {
            QParam::One => 1.0,
            QParam::Finite { num, den } => num as f64 / den as f64,
            QParam::Inf => f64::INFINITY,
        }
    }
}

impl fmt::Display for QParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QParam::One => f.write_str("1"),
            QParam::Finite { num, den: 1 } => write!(f, "{num}"),
            QParam::Finite { num, den } => write!(f, "{num}/{den}"),
            QParam::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for QParam {
    type Err = Error;

    /// `"inf"`, an integer, or `"num/den"`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(QParam::Inf);
        }
        let bad = || Error::Parse {
            field: "q".into(),
            reason: format!("expected inf, an integer or num/den, got {s:?}"),
        };
        let (n, d) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (t, "1"),
        };
        let num: u64 = n.parse().map_err(|_| bad())?;
        let den: u64 = d.parse().map_err(|_| bad())?;
        QParam::finite(num, den)
    }
}

impl Serialize for QParam {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QParam {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `γ = q/(q-1)`; `1` for `q = ∞`; `None` for `q = 1`.
///
/// ```
/// use selfish_lb::{lqnorm::{gamma_of, QParam}, Rat};
/// assert_eq!(gamma_of(&"2".parse().unwrap()), Some(Rat::from_int(2)));
/// assert_eq!(gamma_of(&"3/2".parse().unwrap()), Some(Rat::from_int(3)));
/// assert_eq!(gamma_of(&QParam::Inf), Some(Rat::one()));
/// assert_eq!(gamma_of(&QParam::One), None);
/// ```
pub fn gamma_of(q: &QParam) -> Option<Rat> {
    match *q {
        QParam::One => None,
        QParam::Inf => Some(Rat::one()),
        QParam::Finite { num, den } => Some(Rat::new(num as i64, (num - den) as i64)),
    }
}

/// `(Σ v_i^q)^{1/q}`, scaled by the maximum so large `q` cannot overflow.
///
/// ```
/// use selfish_lb::lqnorm::{lq_norm_f64, QParam};
/// assert!((lq_norm_f64(&[3.0, 4.0], &QParam::Finite { num: 2, den: 1 }) - 5.0).abs() < 1e-12);
/// ```
pub fn lq_norm_f64(v: &[f64], q: &QParam) -> f64 {
    let max = v.iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    match q {
        QParam::Inf => max,
        QParam::One => v.iter().sum(),
        QParam::Finite { .. } => {
            let qf = q.to_f64();
            let s: f64 = v.iter().map(|x| (x / max).powf(qf)).sum();
            max * s.powf(1.0 / qf)
        }
    }
}

pub fn lq_norm(v: &[Rat], q: &QParam) -> f64 {
    let fv: Vec<f64> = v.iter().map(Rat::to_f64).collect();
    lq_norm_f64(&fv, q)
}

/// Per-machine weight proportional to `s̄_i^γ`, normalized so `s̄₁` has weight 1.
///
/// For `q = ∞` the weights are the exact ratios `s̄_i / s̄₁`. For finite `q`
/// the float `2^{(z_i - z₁)γ}` is taken as an exact dyadic rational, so rows
/// built from these weights still sum to exactly 1. Inactive machines get 0.
pub fn speed_weights(levels: &LevelStructure, q: &QParam) -> Vec<Rat> {
    let gamma = gamma_of(q).map(|g| g.to_f64());
    levels
        .machines
        .iter()
        .map(|mp| {
            if !mp.active {
                return Rat::zero();
            }
            let d = mp.speed_exp - levels.top_exp;
            match (q, gamma) {
                (QParam::Inf, _) => Rat::pow2(d),
                (_, Some(g)) => Rat::from_f64_exact((d as f64 * g).exp2()).expect("finite weight"),
                (_, None) => Rat::from_int((d == 0) as i64),
            }
        })
        .collect()
}

/// The ℓq allocator. `q = ∞` is bit-identical to [`crate::makespan::run_makespan`].
///
/// ```
/// use selfish_lb::{lqnorm::run_lq, model::Instance, Rat};
/// let inst = Instance::from_ints(&[2, 1], &[2, 1]).unwrap();
/// let t = run_lq(&inst, &"2".parse().unwrap()).unwrap();
/// assert_eq!(t.fraction(1, 0), Rat::new(4, 5));
/// ```
pub fn run_lq(instance: &Instance, q: &QParam) -> Result<AllocationTrace> {
    run_with(instance, AllocatorConfig::lq(*q))
}

/// `Σ_i C_i^q` objective of completion times, `q = ∞` gives the maximum.
pub fn objective(completions: &[Rat], q: &QParam) -> f64 {
    lq_norm(completions, q)
}
