//! Exhaustive search of mover/elevator interleavings for interlock violations.

use macarons::devices::safety::explore_interlock;
use macarons::farm::ModuleSpec;

fn main() {
    for spec in [ModuleSpec::default(), ModuleSpec::with_size(2, 1), ModuleSpec::with_size(2, 2)] {
        let r = explore_interlock(&spec);
        println!(
            "{}x{}: {} states, {} with a loaded platform moving, {} interlock violations, safe: {}",
            spec.n_h,
            spec.n_v,
            r.states,
            r.loaded_motion_states,
            r.interlock_violations,
            r.is_safe()
        );
    }
}
