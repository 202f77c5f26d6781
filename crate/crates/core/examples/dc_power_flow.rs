//! DC power flow at the case's own dispatch, then the least-cost DC-OPF on
//! the fixed topology.

use gridsplit::case_io::{validate, ValidateOptions};
use gridsplit::cases::bundled;
use gridsplit::dcopf::{solve_dcopf, solve_dcpf};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = bundled("case14").expect("bundled");
    let net = validate(&raw, &ValidateOptions::default())?;

    // Case set-points, with the reference generator taking up the imbalance.
    let mut dispatch: Vec<f64> = net
        .gens
        .iter()
        .map(|g| g.units.iter().map(|&u| raw.generators[u].pg).sum::<f64>() / net.base_mva)
        .collect();
    let total: f64 = dispatch.iter().sum();
    let r = net
        .gen_at(net.reference)
        .expect("reference has a generator");
    dispatch[r] += net.total_load() - total;
    let pf = solve_dcpf(&net, &net.injections(&dispatch))?;
    println!("DC power flow, largest flows:");
    let mut order: Vec<usize> = (0..net.n_line()).collect();
    order.sort_by(|&a, &b| pf.flows[b].abs().total_cmp(&pf.flows[a].abs()));
    for &l in order.iter().take(5) {
        let line = &net.lines[l];
        println!(
            "  line {:>2} ({:>2}-{:>2}) {:>8.2} MW",
            l + 1,
            net.buses[line.from].id,
            net.buses[line.to].id,
            pf.flows[l] * net.base_mva
        );
    }

    let opf = solve_dcopf(&net)?;
    println!(
        "DC-OPF: {:?}, cost {:.2} $/h",
        opf.status,
        opf.objective.unwrap_or(f64::NAN)
    );
    for (g, p) in net.gens.iter().zip(&opf.dispatch) {
        println!(
            "  gen at bus {:>2}: {:>7.2} MW",
            net.buses[g.bus].id,
            p * net.base_mva
        );
    }
    Ok(())
}
