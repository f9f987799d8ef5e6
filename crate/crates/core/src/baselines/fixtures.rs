//! The five worked instances, with the concrete binary parameters used
//! wherever the construction only asks for "small enough" or "large enough".

use serde::{Deserialize, Serialize};

use crate::model::Instance;
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    Machine { id: usize, speed: Rat },
    Job { index: usize, size: Rat },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub instance: Instance,
    pub perturbation: Option<Perturbation>,
    pub params: Vec<(String, Rat)>,
}

impl Fixture {
    /// The instance with the perturbation applied.
    pub fn perturbed(&self) -> Instance {
        match &self.perturbation {
            None => self.instance.clone(),
            Some(Perturbation::Machine { id, speed }) => self.instance.with_speed(*id, speed.clone()),
            Some(Perturbation::Job { index, size }) => self.instance.with_job(*index, size.clone()),
        }
    }
}

fn ints(v: &[i64]) -> Vec<Rat> {
    v.iter().map(|&x| Rat::from_int(x)).collect()
}

/// Speeds (17, 7, 2, 1×5), jobs (16, 4).
pub fn worked_example() -> Fixture {
    Fixture {
        name: "levels-example".into(),
        instance: Instance::new(ints(&[17, 7, 2, 1, 1, 1, 1, 1]), ints(&[16, 4])).unwrap(),
        perturbation: None,
        params: vec![],
    }
}

/// Three machines `a^{x+1}, a^x, 1` with `a = 2, x = 2`; machine 3 (id 2) speeds up to `a`.
pub fn llw() -> Fixture {
    let k = Rat::pow2(20);
    let eps = Rat::pow2(-20);
    let a = Rat::from_int(2);
    let jobs = vec![
        Rat::from_int(8),
        Rat::from_int(4) - &eps,
        Rat::one(),
        Rat::from_int(8) * &k,
        Rat::from_int(4) * &k + a.recip() + eps.mul_pow2(-1),
        k.mul_pow2(-1),
    ];
    Fixture {
        name: "llw-counterexample".into(),
        instance: Instance::new(ints(&[8, 4, 1]), jobs).unwrap(),
        perturbation: Some(Perturbation::Machine {
            id: 2,
            speed: a.clone(),
        }),
        params: vec![
            ("a".into(), a),
            ("x".into(), Rat::from_int(2)),
            ("k".into(), k),
            ("epsilon".into(), eps),
        ],
    }
}

/// Speeds (64, 32, 16, 4, 2); machine 5 (id 4) speeds up to 4.
pub fn waterfill() -> Fixture {
    let eps = Rat::pow2(-20);
    let delta = Rat::pow2(-60);
    let p45 = Rat::from_int(8) - Rat::new(9, 56) * &eps;
    let jobs = vec![
        Rat::from_int(64),
        eps.clone(),
        Rat::from_int(32) - Rat::new(32, 54) * &eps + &delta,
        p45.clone(),
        p45,
        Rat::new(8, 5) - Rat::new(9, 280) * &eps,
    ];
    Fixture {
        name: "waterfill-counterexample".into(),
        instance: Instance::new(ints(&[64, 32, 16, 4, 2]), jobs).unwrap(),
        perturbation: Some(Perturbation::Machine {
            id: 4,
            speed: Rat::from_int(4),
        }),
        params: vec![("epsilon".into(), eps), ("delta".into(), delta)],
    }
}

/// Speeds (8, 4, 2×6), jobs (8, 3, 3, 3) and a probe of size 3 that misreports `3 + 2^-20`.
pub fn double_before_allocate() -> Fixture {
    let eps = Rat::pow2(-20);
    Fixture {
        name: "double-before-allocate".into(),
        instance: Instance::new(ints(&[8, 4, 2, 2, 2, 2, 2, 2]), ints(&[8, 3, 3, 3, 3])).unwrap(),
        perturbation: Some(Perturbation::Job {
            index: 4,
            size: Rat::from_int(3) + &eps,
        }),
        params: vec![("epsilon".into(), eps)],
    }
}

/// Speeds (16, 4, 2×16), jobs (16, 8×3, 2×28, 1×49); machine 2 (id 1) reports 8.
pub fn double_with_last() -> Fixture {
    let mut speeds = vec![16, 4];
    speeds.extend([2; 16]);
    let mut jobs = vec![16];
    jobs.extend([8; 3]);
    jobs.extend([2; 28]);
    jobs.extend([1; 49]);
    Fixture {
        name: "double-with-last".into(),
        instance: Instance::new(ints(&speeds), ints(&jobs)).unwrap(),
        perturbation: Some(Perturbation::Machine {
            id: 1,
            speed: Rat::from_int(8),
        }),
        params: vec![],
    }
}

pub fn all() -> Vec<Fixture> {
    vec![
        worked_example(),
        llw(),
        waterfill(),
        double_before_allocate(),
        double_with_last(),
    ]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}
