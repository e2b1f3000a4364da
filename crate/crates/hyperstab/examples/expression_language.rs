//! The config expression language: parsing against role contexts,
//! evaluation, free variables and error reporting.
//!
//! ```bash
//! cargo run --example expression_language
//! ```

use hyperstab::expr::{Expression, VarMap, VariableContext};

fn main() {
    // source expressions may use position, point values and the nonlocal
    // integral channel I[j] = integral of u_j over the domain
    let ctx = VariableContext::source(2);
    let expr = Expression::parse("0.25*sin(I[2]) + 0.1*u[1]*x", &ctx).unwrap();
    println!("parsed      : {expr}");
    println!("free vars   : {:?}", expr.free_variables().iter().map(|v| v.to_string()).collect::<Vec<_>>());

    let mut bindings = VarMap::new();
    bindings.set("x", 0.5).set_indexed("u", 1, 2.0).set_indexed("I", 2, std::f64::consts::PI / 2.0);
    println!("value       : {}", expr.eval(&bindings).unwrap());

    // contexts reject variables that do not belong to the role
    let coeff = VariableContext::coefficient();
    match Expression::parse("sqrt(L + 1.5 - x)", &coeff) {
        Err(e) => println!("rejected    : {e}"),
        Ok(_) => unreachable!("lengths must be inlined as literals"),
    }

    // unary minus binds looser than '^'
    let neg_pow = Expression::parse("-x^2", &coeff).unwrap();
    let mut at_two = VarMap::new();
    at_two.set("x", 2.0);
    println!("-x^2 at x=2 : {}", neg_pow.eval(&at_two).unwrap());

    // domain errors carry the offending subexpression
    let bad = Expression::parse("1/(x - 2)", &coeff).unwrap();
    println!("domain error: {}", bad.eval(&at_two).unwrap_err());
}
