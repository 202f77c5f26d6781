mod common;

use common::{balanced_injections, case, line_between, random_network, split_vs_equivalent};
use gridsplit::case_io::Network;
use gridsplit::dcopf::solve_dcpf;
use gridsplit::network::{
    apply_decisions, bbus, flow_matrix, incidence, islands, TopologyDecision, TransferScenario,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn incidence_columns_point_from_to() {
    let net = random_network(1);
    let a = incidence(&net);
    for (l, line) in net.lines.iter().enumerate() {
        assert_eq!(a.get(line.from, l), 1.0);
        assert_eq!(a.get(line.to, l), -1.0);
    }
}

#[test]
fn incidence_balances_dc_flows_on_case14() {
    let (_, net) = case("case14");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = balanced_injections(&net, &mut rng);
    let pf = solve_dcpf(&net, &p).unwrap();
    let af = incidence(&net).mul_vec(&pf.flows);
    for b in 0..net.n_bus() {
        assert!((af[b] - p[b]).abs() < 1e-9, "bus {b}");
    }
}

#[test]
fn bbus_is_incidence_times_flow_matrix_on_case14() {
    let (_, net) = case("case14");
    let b = bbus(&net).to_dense();
    let ak = incidence(&net).mul(&flow_matrix(&net)).to_dense();
    for i in 0..net.n_bus() {
        for j in 0..net.n_bus() {
            assert!((b[i][j] - ak[i][j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn case14_bus3_split_matches_equivalent_model() {
    let (_, net) = case("case14");
    let bus = net.bus_index(3).unwrap();
    let line = line_between(&net, 3, 4);
    let after = apply_decisions(
        &net,
        &[TopologyDecision::BusSplit {
            bus,
            line,
            scenario: TransferScenario::GenOnly,
        }],
    )
    .unwrap();
    assert_eq!(after.n_bus(), 15);
    assert_eq!(after.gens[net.gen_at(bus).unwrap()].bus, 14);
    assert_eq!(after.buses[bus].load, net.buses[bus].load);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = balanced_injections(&net, &mut rng);
    let err = split_vs_equivalent(&net, &p, bus, line, TransferScenario::GenOnly).unwrap();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn split_equivalence_over_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for name in ["case14", "case118"] {
        let (_, net) = case(name);
        let mut tries = 0;
        while checked < if name == "case14" { 60 } else { 120 } {
            tries += 1;
            assert!(tries < 2000, "too few well-posed triples on {name}");
            let line = rng.gen_range(0..net.n_line());
            let l = &net.lines[line];
            let bus = if rng.gen_bool(0.5) { l.from } else { l.to };
            let scenario = TransferScenario::ALL[rng.gen_range(0..3)];
            let p = balanced_injections(&net, &mut rng);
            if let Some(err) = split_vs_equivalent(&net, &p, bus, line, scenario) {
                assert!(
                    err <= 1e-8,
                    "{name} bus {bus} line {line} {scenario}: {err}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 100);
}

#[test]
fn islands_of_case14_and_a_cut_two_bus() {
    let (_, net) = case("case14");
    assert_eq!(islands(&net), vec![(0..14).collect::<Vec<_>>()]);
    let mut two = random_network(5);
    two.lines.clear();
    let parts = islands(&two);
    assert_eq!(parts.len(), two.n_bus());
}

fn union_find_count(net: &Network) -> usize {
    let mut parent: Vec<usize> = (0..net.n_bus()).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for l in &net.lines {
        let (a, b) = (root(&mut parent, l.from), root(&mut parent, l.to));
        parent[a] = b;
    }
    (0..net.n_bus())
        .filter(|&x| root(&mut parent, x) == x)
        .count()
}

#[test]
fn case118_cut_islands_agree_with_union_find() {
    let (_, net) = case("case118");
    let cut = [127, 135].map(|line| TopologyDecision::LineSwitch { line });
    let after = apply_decisions(&net, &cut).unwrap();
    assert_eq!(islands(&after).len(), union_find_count(&after));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut lines: Vec<usize> = (0..net.n_line()).filter(|_| rng.gen_bool(0.05)).collect();
        lines.dedup();
        let plan: Vec<TopologyDecision> = lines
            .into_iter()
            .map(|line| TopologyDecision::LineSwitch { line })
            .collect();
        let after = apply_decisions(&net, &plan).unwrap();
        assert_eq!(islands(&after).len(), union_find_count(&after));
    }
}

fn random_plan(net: &Network, seed: u64) -> Vec<TopologyDecision> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        let line = rng.gen_range(0..net.n_line());
        let l = &net.lines[line];
        let d = if rng.gen_bool(0.3) {
            TopologyDecision::LineSwitch { line }
        } else {
            TopologyDecision::BusSplit {
                bus: if rng.gen_bool(0.5) { l.from } else { l.to },
                line,
                scenario: TransferScenario::ALL[rng.gen_range(0..3)],
            }
        };
        plan.push(d);
        if gridsplit::network::check_decisions(net, &plan).is_err() {
            plan.pop();
        }
    }
    plan
}

proptest! {
    #[test]
    fn bbus_is_a_laplacian(seed in any::<u64>()) {
        let net = random_network(seed);
        let b = bbus(&net).to_dense();
        let ak = incidence(&net).mul(&flow_matrix(&net)).to_dense();
        for i in 0..net.n_bus() {
            prop_assert!(b[i].iter().sum::<f64>().abs() <= 1e-12);
            for j in 0..net.n_bus() {
                prop_assert!((b[i][j] - b[j][i]).abs() <= 1e-12);
                prop_assert!((b[i][j] - ak[i][j]).abs() <= 1e-12);
                if i != j {
                    prop_assert!(b[i][j] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn incidence_columns_have_one_plus_and_one_minus(seed in any::<u64>()) {
        let net = random_network(seed);
        let a = incidence(&net);
        let k = flow_matrix(&net);
        for (l, line) in net.lines.iter().enumerate() {
            let col: Vec<f64> = (0..net.n_bus()).map(|r| a.get(r, l)).collect();
            prop_assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            prop_assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            prop_assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 2);
            prop_assert_eq!(k.get(l, line.from), line.b);
            prop_assert_eq!(k.get(l, line.to), -line.b);
        }
    }

    #[test]
    fn decisions_conserve_load_and_capacity(seed in any::<u64>()) {
        let net = random_network(seed);
        let plan = random_plan(&net, seed);
        let after = apply_decisions(&net, &plan).unwrap();
        prop_assert!((after.total_load() - net.total_load()).abs() <= 1e-12);
        prop_assert!((after.total_capacity() - net.total_capacity()).abs() <= 1e-12);
        let splits = plan.iter().filter(|d| matches!(d, TopologyDecision::BusSplit { .. })).count();
        prop_assert_eq!(after.n_bus(), net.n_bus() + splits);
        let parts = islands(&after);
        prop_assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), after.n_bus());
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..after.n_bus()).collect::<Vec<_>>());
    }

    #[test]
    fn split_matches_equivalent_model(seed in any::<u64>(), pick in any::<prop::sample::Index>(), k in 0usize..3) {
        let net = random_network(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let line = pick.index(net.n_line());
        let l = &net.lines[line];
        let bus = if rng.gen_bool(0.5) { l.from } else { l.to };
        let p = balanced_injections(&net, &mut rng);
        if let Some(err) = split_vs_equivalent(&net, &p, bus, line, TransferScenario::ALL[k]) {
            prop_assert!(err <= 1e-8, "{}", err);
        }
    }
}
