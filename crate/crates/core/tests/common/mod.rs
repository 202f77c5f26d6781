//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use gridsplit::case_io::{validate, Bus, Generator, Line, Network, RawCase, ValidateOptions};
use gridsplit::cases::bundled;
use gridsplit::dcopf::{dcopf_problem, solve_dcpf};
use gridsplit::network::{
    apply_decisions, check_decisions, islands, TopologyDecision, TransferScenario,
};
use gridsplit::topo_model::{End, Mode, TopologyModel};
use gridsplit_milp::{lp_solve, LpStatus, Relation};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn case(name: &str) -> (RawCase, Network) {
    let raw = bundled(name).expect("bundled case");
    let net = validate(&raw, &ValidateOptions::default()).expect("valid case");
    (raw, net)
}

/// Index of the line joining the buses with external ids `a` and `b`.
pub fn line_between(net: &Network, a: u32, b: u32) -> usize {
    net.lines
        .iter()
        .position(|l| {
            let (f, t) = (net.buses[l.from].id, net.buses[l.to].id);
            (f, t) == (a, b) || (f, t) == (b, a)
        })
        .unwrap_or_else(|| panic!("no line {a}-{b}"))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Every single operation the breaker model can express: each line
/// switch, and each split whose scenario moves something.
pub fn operations(net: &Network, mode: Mode) -> Vec<TopologyDecision> {
    let mut out: Vec<TopologyDecision> = (0..net.n_line())
        .map(|line| TopologyDecision::LineSwitch { line })
        .collect();
    if mode != Mode::Breaker {
        return out;
    }
    for (line, l) in net.lines.iter().enumerate() {
        for bus in [l.from, l.to] {
            let has_gen = net.gen_at(bus).is_some_and(|g| net.gens[g].dispatchable());
            let has_load = net.buses[bus].load != 0.0;
            for scenario in TransferScenario::ALL {
                if (scenario.moves_gen() && !has_gen) || (scenario.moves_load() && !has_load) {
                    continue;
                }
                out.push(TopologyDecision::BusSplit {
                    bus,
                    line,
                    scenario,
                });
            }
        }
    }
    out
}

/// Least cost of a fixed plan: the DC-OPF of the physically modified
/// network, plus the angle-spread limit the switching model keeps across
/// every opened line. `None` when infeasible or the plan is invalid.
pub fn plan_cost(net: &Network, plan: &[TopologyDecision], dtheta_max: f64) -> Option<f64> {
    check_decisions(net, plan).ok()?;
    let post = apply_decisions(net, plan).ok()?;
    let mut p = dcopf_problem(&post);
    for d in plan {
        let l = &net.lines[d.line()];
        // Bus indices of the original network are unchanged in `post`.
        p.add_constraint(
            format!("spread_{}", d.line()),
            vec![(l.from, 1.0), (l.to, -1.0)],
            Relation::Le,
            dtheta_max,
        );
        p.add_constraint(
            format!("spread_lo_{}", d.line()),
            vec![(l.from, 1.0), (l.to, -1.0)],
            Relation::Ge,
            -dtheta_max,
        );
    }
    let lp = lp_solve(&p, None).expect("oracle LP solves");
    (lp.status == LpStatus::Optimal).then_some(lp.objective)
}

/// Exhaustive search over all plans of at most `s` operations. Returns the
/// minimum cost and every plan attaining it within `1e-7`.
pub fn brute_force(
    net: &Network,
    s: usize,
    mode: Mode,
    dtheta_max: f64,
) -> (Option<f64>, Vec<Vec<TopologyDecision>>) {
    let ops = operations(net, mode);
    let mut best: Option<f64> = None;
    let mut argmin = Vec::new();
    let mut plan = Vec::new();
    fn visit(
        net: &Network,
        ops: &[TopologyDecision],
        from: usize,
        left: usize,
        plan: &mut Vec<TopologyDecision>,
        dtheta_max: f64,
        best: &mut Option<f64>,
        argmin: &mut Vec<Vec<TopologyDecision>>,
    ) {
        if let Some(c) = plan_cost(net, plan, dtheta_max) {
            match *best {
                Some(b) if c > b + 1e-7 * b.abs().max(1.0) => {}
                Some(b) if c >= b - 1e-7 * b.abs().max(1.0) => argmin.push(plan.clone()),
                _ => {
                    *best = Some(c);
                    argmin.clear();
                    argmin.push(plan.clone());
                }
            }
        }
        if left == 0 {
            return;
        }
        for k in from..ops.len() {
            plan.push(ops[k]);
            if check_decisions(net, plan).is_ok() {
                visit(net, ops, k + 1, left - 1, plan, dtheta_max, best, argmin);
            }
            plan.pop();
        }
    }
    visit(
        net,
        &ops,
        0,
        s,
        &mut plan,
        dtheta_max,
        &mut best,
        &mut argmin,
    );
    (best, argmin)
}

/// Largest `|y - w g|` over every product variable of an incumbent.
pub fn mccormick_error(model: &TopologyModel, net: &Network, x: &[f64]) -> f64 {
    let v = &model.vars;
    let mut worst: f64 = 0.0;
    for (l, line) in net.lines.iter().enumerate() {
        for end in End::BOTH {
            let g = x[v.gen[end.bus(line)]];
            for k in 0..3 {
                let e = end as usize;
                worst = worst.max((x[v.y[l][e][k]] - x[v.w[l][e][k]] * g).abs());
            }
        }
    }
    worst
}

/// Largest breach of the switched Ohm's law: `|f - b dtheta|` on closed
/// lines, `|f|` and the Big-M slack deficit on open ones.
pub fn big_m_error(model: &TopologyModel, net: &Network, x: &[f64], dtheta_max: f64) -> f64 {
    let v = &model.vars;
    let mut worst: f64 = 0.0;
    for (l, line) in net.lines.iter().enumerate() {
        let ohm = line.b * (x[v.theta[line.from]] - x[v.theta[line.to]]);
        let f = x[v.flow[l]];
        if x[v.status[l]] > 0.5 {
            worst = worst.max((f - ohm).abs());
        } else {
            let m = line.b * dtheta_max;
            worst = worst.max(f.abs()).max((ohm - f).abs() - m);
        }
    }
    worst
}

/// A small connected network: a random spanning tree plus a few extra
/// lines, loads on most buses and two or three generators with distinct
/// costs and enough total capacity.
pub fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=5);
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        pairs.push((a, b));
    }
    let lines = pairs
        .iter()
        .enumerate()
        .map(|(k, &(from, to))| Line {
            from,
            to,
            b: rng.gen_range(2.0..20.0),
            fmax: rng.gen_range(0.2..1.2),
            branch: k,
        })
        .collect();
    let buses: Vec<Bus> = (0..n)
        .map(|k| Bus {
            id: k as u32 + 1,
            load: if rng.gen_bool(0.7) {
                rng.gen_range(0.1..0.8)
            } else {
                0.0
            },
            theta_min: -std::f64::consts::PI,
            theta_max: std::f64::consts::PI,
            split_from: None,
        })
        .collect();
    let total: f64 = buses.iter().map(|b| b.load).sum();
    let mut at: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        at.swap(k, rng.gen_range(0..=k));
    }
    let count = rng.gen_range(2..=3.min(n));
    let gens: Vec<Generator> = at[..count]
        .iter()
        .enumerate()
        .map(|(k, &bus)| Generator {
            bus,
            pmin: 0.0,
            pmax: (total + 0.2) * rng.gen_range(0.4..1.2),
            cost: 10.0 * (k + 1) as f64 + rng.gen_range(0.0..5.0),
            units: vec![k],
        })
        .collect();
    Network {
        base_mva: 100.0,
        reference: gens[0].bus,
        buses,
        lines,
        gens,
    }
}

/// A balanced injection vector: generators at random points of their
/// range, the reference generator absorbing the rest.
pub fn balanced_injections(net: &Network, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut dispatch: Vec<f64> = net
        .gens
        .iter()
        .map(|g| rng.gen_range(g.pmin..=g.pmax))
        .collect();
    let short = net.total_load() - dispatch.iter().sum::<f64>();
    let r = net.gen_at(net.reference).expect("reference generator");
    dispatch[r] += short;
    net.injections(&dispatch)
}

/// Largest disagreement between the physically split network and the
/// equivalent model with line `line` open and the moved injection placed at
/// the far end. `None` when either power flow is not well posed.
pub fn split_vs_equivalent(
    net: &Network,
    p: &[f64],
    bus: usize,
    line: usize,
    scenario: TransferScenario,
) -> Option<f64> {
    let split = TopologyDecision::BusSplit {
        bus,
        line,
        scenario,
    };
    let actual_net = apply_decisions(net, &[split]).ok()?;
    let equivalent_net = apply_decisions(net, &[TopologyDecision::LineSwitch { line }]).ok()?;
    if islands(&actual_net).len() != 1 || islands(&equivalent_net).len() != 1 {
        return None;
    }
    // Injections of the actual network: the moved part sits on the new bus.
    let load = net.buses[bus].load;
    let gen = p[bus] + load;
    let moved = if scenario.moves_gen() { gen } else { 0.0 }
        - if scenario.moves_load() { load } else { 0.0 };
    let mut pa = p.to_vec();
    pa[bus] -= moved;
    pa.push(moved);
    let far = net.lines[line].other_end(bus).unwrap();
    let mut pe = p.to_vec();
    pe[bus] -= moved;
    pe[far] += moved;
    let a = solve_dcpf(&actual_net, &pa).ok()?;
    let e = solve_dcpf(&equivalent_net, &pe).ok()?;
    let mut worst: f64 = 0.0;
    for b in 0..net.n_bus() {
        worst = worst.max((a.theta[b] - e.theta[b]).abs());
    }
    let mut k = 0;
    for l in 0..net.n_line() {
        if l == line {
            // The re-terminated line carries exactly the moved injection.
            let out_of_new = if actual_net.lines[l].from == net.n_bus() {
                a.flows[l]
            } else {
                -a.flows[l]
            };
            worst = worst.max((out_of_new - moved).abs());
            continue;
        }
        worst = worst.max((a.flows[l] - e.flows[k]).abs());
        k += 1;
    }
    Some(worst)
}
