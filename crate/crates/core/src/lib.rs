//! Two-sided truthful online load balancing on related machines.
//!
//! Jobs arrive online and are split fractionally over machines whose speeds
//! are private; the allocators here are monotone on both sides so payments
//! make truthful reporting optimal for jobs and machines alike. Fractional
//! rows can be rounded independently into an integral assignment.
//!
//! ```
//! use selfish_lb::{makespan::run_makespan, model::Instance, Rat};
//!
//! let inst = Instance::from_ints(&[17, 7, 2, 1, 1, 1, 1, 1], &[16, 4]).unwrap();
//! let trace = run_makespan(&inst).unwrap();
//! assert_eq!(trace.final_lambda(), Rat::one());
//! assert_eq!(trace.fraction(1, 0), Rat::new(4, 5));
//! ```

pub mod baselines;
pub mod error;
pub mod io;
pub mod lqnorm;
pub mod makespan;
pub mod mechanism;
pub mod model;
pub mod oracles;
pub mod payments;
pub mod rat;
pub mod rounding;
pub mod truthlab;

pub use error::{Error, Result};
pub use rat::Rat;
