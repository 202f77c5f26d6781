//! Solves the switching problem on the congested 14-bus case in all three
//! modes with one allowed operation.

use gridsplit::case_io::{validate, ValidateOptions};
use gridsplit::cases::bundled;
use gridsplit::topo_model::{solve_topology, Mode, TopologyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = bundled("case14_mod").expect("bundled");
    let net = validate(&raw, &ValidateOptions::default())?;
    let opts = TopologyOptions::default();
    for mode in Mode::ALL {
        let out = solve_topology(&net, 1, mode, &opts)?;
        let r = &out.result;
        print!("{mode:>8}: {:?}", r.status);
        if let Some(cost) = r.objective {
            print!(", cost {cost:.2} $/h, {} nodes", r.nodes);
        }
        println!();
        for d in &r.decisions {
            println!("          {}", d.describe(&net));
        }
    }
    Ok(())
}
