//! AC check of the congested 14-bus case: the unswitched network, then
//! every split of bus 3 that makes the DC dispatch feasible.

use gridsplit::acpf::{report, verify_decisions, AcNetwork, FeasibilityReport, NrOptions};
use gridsplit::case_io::{validate, ValidateOptions};
use gridsplit::cases::bundled;
use gridsplit::dcopf::solve_dcopf;
use gridsplit::network::{apply_decisions, TopologyDecision, TransferScenario};

fn show(title: &str, r: &FeasibilityReport) {
    println!("{title}: {:?} after {} iterations", r.status, r.iterations);
    for v in &r.violations {
        println!(
            "    {:?} at {}: {:.3} (limit {:.3})",
            v.kind, v.element, v.value, v.limit
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = bundled("case14_mod").expect("bundled");
    let net = validate(&raw, &ValidateOptions::default())?;
    let opts = NrOptions::default();

    let base = AcNetwork::from_case(&raw, &net);
    show("case set-points, no switching", &report(&base, &opts));
    println!("DC-OPF without switching: {:?}", solve_dcopf(&net)?.status);

    let bus = net.bus_index(3).expect("bus 3");
    for line in net.lines_at(bus) {
        for scenario in TransferScenario::ALL {
            let split = TopologyDecision::BusSplit {
                bus,
                line,
                scenario,
            };
            let Ok(post) = apply_decisions(&net, &[split]) else {
                continue;
            };
            let opf = solve_dcopf(&post)?;
            let Some(cost) = opf.objective else { continue };
            // Generator records keep their order, so the dispatch applies
            // to the AC data unchanged.
            let mut ac = base.clone();
            ac.set_dispatch(&opf.dispatch);
            let title = format!("{} (DC cost {cost:.2} $/h)", split.describe(&net));
            show(&title, &verify_decisions(&ac, &net, &[split], &opts)?);
        }
    }
    Ok(())
}
