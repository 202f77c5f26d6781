//! Reads a MATPOWER or native JSON case, prints a summary of the validated
//! network and writes the native form next to the input.
//!
//! ```text
//! cargo run --example parse_case -- case14
//! cargo run --example parse_case -- path/to/case.m
//! ```

use gridsplit::case_io::{to_native, validate, ValidateOptions};
use gridsplit::cases::load;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "case14".into());
    let (raw, _) = load(&spec)?;
    let net = validate(&raw, &ValidateOptions::default())?;

    println!("{spec}: base {} MVA", raw.base_mva);
    println!(
        "  {} buses, {} branch rows ({} in service), {} generator rows",
        raw.buses.len(),
        raw.branches.len(),
        net.n_line(),
        raw.generators.len()
    );
    println!(
        "  load {:.1} MW, dispatchable capacity {:.1} MW",
        net.total_load() * net.base_mva,
        net.total_capacity() * net.base_mva
    );
    println!("  reference bus {}", net.buses[net.reference].id);
    for g in &net.gens {
        println!(
            "  gen at bus {:>4}: {:>7.1}..{:>7.1} MW at {:>8.3} $/MWh",
            net.buses[g.bus].id,
            g.pmin * net.base_mva,
            g.pmax * net.base_mva,
            g.cost / net.base_mva
        );
    }

    let out =
        std::env::temp_dir().join(format!("{}.json", spec.rsplit('/').next().unwrap_or(&spec)));
    std::fs::write(&out, to_native(&raw))?;
    println!("native form written to {}", out.display());
    Ok(())
}
