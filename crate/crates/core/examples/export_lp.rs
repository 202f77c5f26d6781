//! Writes the breaker-mode model of the 14-bus case as a CPLEX LP file,
//! reads it back and solves both copies.

use gridsplit::case_io::{validate, ValidateOptions};
use gridsplit::cases::bundled;
use gridsplit::topo_model::{build_model, Mode, ModelOptions};
use gridsplit_milp::{export_lp, parse_lp, solve, MilpOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = bundled("case14_mod").expect("bundled");
    let net = validate(&raw, &ValidateOptions::default())?;
    let model = build_model(&net, 2, Mode::Breaker, &ModelOptions::default())?;
    let text = export_lp(&model.problem);
    let path = std::env::temp_dir().join("case14_mod_breaker_s2.lp");
    std::fs::write(&path, &text)?;
    println!(
        "{}: {} variables, {} constraints, {} lines",
        path.display(),
        model.problem.num_vars(),
        model.problem.num_constraints(),
        text.lines().count()
    );

    let back = parse_lp(&text)?;
    let opts = MilpOptions::default();
    let a = solve(&model.problem, &opts)?;
    let b = solve(&back, &opts)?;
    println!("built model: {:?} {:.6}", a.status, a.objective);
    println!("re-read:     {:?} {:.6}", b.status, b.objective);
    Ok(())
}
