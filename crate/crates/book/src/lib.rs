//! Compiles every guide chapter so its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/levels.md")]
pub mod levels {}
#[doc = include_str!("../../../book/src/makespan.md")]
pub mod makespan {}
#[doc = include_str!("../../../book/src/lq.md")]
pub mod lq {}
#[doc = include_str!("../../../book/src/rounding.md")]
pub mod rounding {}
#[doc = include_str!("../../../book/src/payments.md")]
pub mod payments {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/truthlab.md")]
pub mod truthlab {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
