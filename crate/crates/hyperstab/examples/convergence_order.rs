//! Grid-convergence study: the first-order upwind scheme shows observed
//! order ~1 on smooth variable-speed problems and degrades gracefully on
//! discontinuous data.
//!
//! ```bash
//! cargo run --example convergence_order
//! ```

use hyperstab::expr::{Expression, VariableContext};
use hyperstab::presets;
use hyperstab::sim::convergence_study;

fn main() {
    let spec = presets::variable_speed_exchange();

    let smooth = presets::smooth_compatible_initial();
    let report = convergence_study(&spec, &smooth, 1.0, &[50, 100, 200, 400]).unwrap();
    println!("smooth data   : errors {:?}", report.errors);
    println!("                orders {:?}", report.orders);
    println!("                observed order {:?} ({:?})", report.observed_order, report.regime);

    let ctx = VariableContext::initial();
    let jumpy = vec![
        Expression::parse("sign(x-0.5)", &ctx).unwrap(),
        Expression::parse("sign(0.3-x)", &ctx).unwrap(),
    ];
    let report = convergence_study(&spec, &jumpy, 1.0, &[50, 100, 200, 400]).unwrap();
    println!("discontinuous : observed order {:?} ({:?})", report.observed_order, report.regime);
    if let Some(w) = &report.warning {
        println!("                warning: {w}");
    }
}
