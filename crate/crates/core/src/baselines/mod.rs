//! Mechanisms that look truthful but are not, with the instances that break them.
//!
//! The two broken doubling variants of the level allocator are configurations
//! of [`crate::makespan::LevelAllocator`]; see [`run_variant_double_before_allocate`]
//! and [`run_variant_double_with_last`].

pub mod fixtures;
pub mod llw;
pub mod waterfill;

pub use llw::{run_llw, LlwOutcome, LlwState};
pub use waterfill::{run_waterfill, WaterfillOutcome, WaterfillState};

use crate::error::Result;
use crate::makespan::{run_with, AllocationTrace, AllocatorConfig};
use crate::model::Instance;

/// Doubles Λ before allocating when the tentative allocation would trigger it.
pub fn run_variant_double_before_allocate(instance: &Instance) -> Result<AllocationTrace> {
    run_with(instance, AllocatorConfig::variant_double_before_allocate())
}

/// Lets the last level trigger doubling.
pub fn run_variant_double_with_last(instance: &Instance) -> Result<AllocationTrace> {
    run_with(instance, AllocatorConfig::variant_double_with_last())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::makespan::run_makespan;
    use crate::model::Instance;
    use crate::Rat;

    #[test]
    fn variants_agree_without_doubling() {
        let inst = Instance::from_ints(&[17, 7, 2, 1, 1, 1, 1, 1], &[16, 4, 1, 2]).unwrap();
        let base = run_makespan(&inst).unwrap();
        for v in [
            run_variant_double_before_allocate(&inst).unwrap(),
            run_variant_double_with_last(&inst).unwrap(),
        ] {
            assert_eq!(v.records, base.records);
        }
    }

    #[test]
    fn variant_d_final_lambdas() {
        let fx = fixtures::double_with_last();
        assert_eq!(
            run_variant_double_with_last(&fx.instance).unwrap().final_lambda(),
            Rat::from_int(4)
        );
        assert_eq!(
            run_variant_double_with_last(&fx.perturbed()).unwrap().final_lambda(),
            Rat::one()
        );
    }
}
