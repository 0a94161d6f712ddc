//! Unload time of a farm from the closed forms, automated and manual.

use macarons::analytics::{
    closed_form_t_human, closed_form_t_module, closed_form_t_module_exact, hours_1dp, HumanTimings,
};
use macarons::exact::Q;

fn main() {
    let (n_h, n_v, modules) = (10, 10, 10);
    let t_h = 1250.0 / 100.0;
    let t_v = 500.0 / 33.3;
    let module = closed_form_t_module(n_h, n_v, t_h, t_v).expect("valid timings");
    let exact = closed_form_t_module_exact(n_h, n_v, Q::new(25, 2), Q::new(5000, 333));
    println!("one {n_h}x{n_v} module: {module:.4} s ({exact} s exactly), {} h", hours_1dp(module));
    println!("{modules} modules in parallel: {} h", hours_1dp(module));

    let human = HumanTimings { t_h_s: 10.0, t_v_s: 6.0, t_m: 15.0 };
    let manual = closed_form_t_human(n_h, n_v, modules, &human).expect("valid timings");
    println!("{modules} modules by hand: {manual} s, {} h", hours_1dp(manual));
}
