use std::fmt::Write;

use super::FactorGraph;

fn num(x: f64) -> String {
    // avoid "-0" noise in golden files
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.9e}")
}

/// Stable, line-oriented text rendering used for golden tests and debugging.
pub(crate) fn dump(g: &FactorGraph) -> String {
    let mut s = String::new();
    writeln!(s, "variables {}", g.num_variables()).unwrap();
    for k in g.variables() {
        writeln!(s, "  {k} dim={}", k.dim()).unwrap();
    }
    writeln!(s, "factors {}", g.num_factors()).unwrap();
    for (id, f) in g.factors() {
        let scope: Vec<String> = f.scope().iter().map(ToString::to_string).collect();
        writeln!(s, "  f{id} [{}]", scope.join(", ")).unwrap();
        let zeta: Vec<String> = f.zeta().iter().map(|v| num(*v)).collect();
        writeln!(s, "    zeta {}", zeta.join(" ")).unwrap();
        for r in 0..f.dim() {
            let row: Vec<String> = (0..f.dim()).map(|c| num(f.lambda()[(r, c)])).collect();
            writeln!(s, "    lambda {}", row.join(" ")).unwrap();
        }
    }
    s
}
