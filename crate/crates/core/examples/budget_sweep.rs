//! A small budget sweep on the 118-bus study case comparing line switching
//! with breaker operations, written to a temporary directory and compared
//! the way `gridsplit compare` does.
//!
//! Solves are capped at 1000 nodes to keep the run short; raise
//! `node_limit` for proven optima.

use gridsplit::study::{compare_reports, run, RunConfig};
use gridsplit::topo_model::Mode;
use gridsplit_milp::Branching;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("gridsplit_sweep");
    let config = RunConfig {
        case: "case118_study".into(),
        modes: vec![Mode::NoSwitch, Mode::LineOnly, Mode::Breaker],
        budgets: (0..=2).collect(),
        node_limit: Some(1000),
        time_limit: None,
        branching: Branching::Reliability {
            candidates: 16,
            reliable: 1,
        },
        out: out.clone(),
        ..RunConfig::default()
    };
    let report = run(&config)?;
    print!("{}", report.costs_csv(true));
    print!("{}", report.decisions_csv());
    println!("outputs in {}", out.display());
    let only = |mode| {
        let mut r = report.clone();
        r.cells.retain(|c| c.mode == mode);
        r
    };
    print!(
        "{}",
        compare_reports(&only(Mode::LineOnly), &only(Mode::Breaker))?
    );
    Ok(())
}
