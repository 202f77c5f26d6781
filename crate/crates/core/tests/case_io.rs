mod common;

use gridsplit::case_io::{
    parse_matpower, parse_native, to_matpower, to_native, validate, BranchRow, BusRow, CaseError,
    CostRow, GenRow, RawCase, ValidateOptions,
};
use gridsplit::cases::{bundled, BUNDLED};
use proptest::prelude::*;

#[test]
fn packaged_cases_have_the_published_sizes() {
    let sizes = |name| {
        let raw = bundled(name).unwrap();
        (raw.buses.len(), raw.branches.len(), raw.generators.len())
    };
    assert_eq!(sizes("case14"), (14, 20, 5));
    assert_eq!(sizes("case14_mod"), (14, 20, 5));
    // The study file keeps the uncommitted units as condensers for the AC
    // checks; 19 of its generator rows can produce real power.
    assert_eq!(sizes("case118_study"), (118, 186, 54));
    let study = bundled("case118_study").unwrap();
    assert_eq!(
        study
            .generators
            .iter()
            .filter(|g| g.status != 0 && g.pmax > 0.0)
            .count(),
        19
    );
}

#[test]
fn json_form_equals_matpower_form() {
    for (name, text) in BUNDLED {
        let raw = parse_matpower(text).unwrap();
        let json = to_native(&raw);
        assert_eq!(parse_native(&json).unwrap(), raw, "{name}");
        assert_eq!(to_native(&parse_native(&json).unwrap()), json, "{name}");
        assert_eq!(
            parse_matpower(&to_matpower(&raw, name)).unwrap(),
            raw,
            "{name}"
        );
    }
}

#[test]
fn case14_total_load_matches_file_sum() {
    let raw = bundled("case14").unwrap();
    let net = validate(&raw, &ValidateOptions::default()).unwrap();
    let file: f64 = raw.buses.iter().map(|b| b.pd).sum();
    assert!((net.total_load() - file / raw.base_mva).abs() <= 1e-12);
}

#[test]
fn case14_modification_is_the_documented_one() {
    let (stock, modified) = (bundled("case14").unwrap(), bundled("case14_mod").unwrap());
    let rate = |raw: &RawCase, a, b| {
        raw.branches
            .iter()
            .find(|r| (r.from, r.to) == (a, b))
            .map(|r| r.rate_a)
            .unwrap()
    };
    assert_eq!(rate(&modified, 2, 3), 100.0);
    assert_eq!(rate(&modified, 3, 4), 10.0);
    assert_eq!(
        modified
            .generators
            .iter()
            .find(|g| g.bus == 3)
            .unwrap()
            .pmax,
        20.0
    );
    // Net load at bus 3 with its generator at full output.
    let d3 = modified.buses.iter().find(|b| b.id == 3).unwrap().pd;
    assert!((d3 - 20.0 - 74.2).abs() < 1e-9);
    assert_eq!(stock.buses.len(), modified.buses.len());
}

#[test]
fn native_schema_errors_carry_a_path() {
    let raw = bundled("case14").unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&to_native(&raw)).unwrap();
    v.as_object_mut().unwrap().remove("branches");
    match parse_native(&v.to_string()) {
        Err(CaseError::SchemaViolation { path, .. }) => assert_eq!(path, "/branches"),
        other => panic!("{other:?}"),
    }
    let mut v: serde_json::Value = serde_json::from_str(&to_native(&raw)).unwrap();
    v["generators"][2]["pmax"] = serde_json::json!("lots");
    match parse_native(&v.to_string()) {
        Err(CaseError::SchemaViolation { path, .. }) => assert_eq!(path, "/generators/2/pmax"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn validation_errors() {
    let base = bundled("case14").unwrap();
    let mut raw = base.clone();
    raw.branches[4].x = 0.0;
    assert!(matches!(
        validate(&raw, &ValidateOptions::default()),
        Err(CaseError::NonPositiveReactance { row: 4, .. })
    ));
    let mut raw = base.clone();
    for g in &mut raw.generators {
        g.status = 0;
    }
    assert_eq!(
        validate(&raw, &ValidateOptions::default()),
        Err(CaseError::NoGeneration)
    );
    let mut raw = base.clone();
    raw.generators[1].bus = 99;
    assert!(matches!(
        validate(&raw, &ValidateOptions::default()),
        Err(CaseError::DanglingReference {
            table: "gen",
            bus: 99,
            ..
        })
    ));
    let mut raw = base;
    raw.base_mva = 0.0;
    assert!(matches!(
        validate(&raw, &ValidateOptions::default()),
        Err(CaseError::InvalidBase(_))
    ));
}

#[test]
fn out_of_service_rows_are_dropped_and_unlimited_lines_capped() {
    let mut raw = bundled("case14").unwrap();
    raw.branches[0].status = 0;
    raw.branches[1].rate_a = 0.0;
    let net = validate(&raw, &ValidateOptions::default()).unwrap();
    assert_eq!(net.n_line(), 19);
    assert!(net.lines.iter().all(|l| l.branch != 0));
    let l = net.lines.iter().find(|l| l.branch == 1).unwrap();
    assert!((l.fmax - l.b * 0.6).abs() < 1e-12);
}

#[test]
fn reference_falls_back_to_largest_generator() {
    let mut raw = bundled("case14").unwrap();
    for b in &mut raw.buses {
        if b.bus_type == 3 {
            b.bus_type = 2;
        }
    }
    let net = validate(&raw, &ValidateOptions::default()).unwrap();
    let best = net
        .gens
        .iter()
        .max_by(|a, b| a.pmax.total_cmp(&b.pmax))
        .unwrap();
    assert_eq!(net.reference, best.bus);
}

/// A small random case with distinct, shuffled bus ids.
fn arb_case() -> impl Strategy<Value = RawCase> {
    (2usize..8).prop_flat_map(|n| {
        (
            prop::collection::btree_set(1u32..10_000, n),
            prop::collection::vec(0.0f64..200.0, n),
            prop::collection::vec(
                (0usize..n, 0usize..n, 0.01f64..0.5, 0.0f64..300.0, 0u8..2),
                1..12,
            ),
            prop::collection::vec((0usize..n, 0.0f64..300.0, 0u8..2, 0.0f64..60.0), 1..5),
            any::<prop::sample::Index>(),
        )
            .prop_map(move |(ids, loads, branches, gens, shuffle)| {
                let mut ids: Vec<u32> = ids.into_iter().collect();
                ids.rotate_left(shuffle.index(n));
                let buses = ids
                    .iter()
                    .zip(&loads)
                    .enumerate()
                    .map(|(k, (&id, &pd))| BusRow {
                        id,
                        bus_type: if k == 0 { 3 } else { 1 },
                        pd,
                        qd: pd / 3.0,
                        gs: 0.0,
                        bs: 0.0,
                        vm: 1.0,
                        va: 0.0,
                        base_kv: 230.0,
                        vmax: 1.1,
                        vmin: 0.9,
                    })
                    .collect();
                let branches = branches
                    .iter()
                    .map(|&(f, t, x, rate, status)| BranchRow {
                        from: ids[f],
                        to: ids[t],
                        r: x / 10.0,
                        x,
                        b: 0.0,
                        rate_a: rate,
                        tap: 0.0,
                        shift: 0.0,
                        status,
                    })
                    .collect();
                let mut generators: Vec<GenRow> = gens
                    .iter()
                    .map(|&(bus, pmax, status, _)| GenRow {
                        bus: ids[bus],
                        pg: 0.0,
                        qg: 0.0,
                        qmax: 100.0,
                        qmin: -100.0,
                        vg: 1.0,
                        pmax,
                        pmin: 0.0,
                        status,
                    })
                    .collect();
                generators[0].status = 1;
                let gencost = gens
                    .iter()
                    .map(|&(.., c)| CostRow {
                        model: 2,
                        startup: 0.0,
                        shutdown: 0.0,
                        coeffs: vec![c, 0.0],
                    })
                    .collect();
                RawCase {
                    base_mva: 100.0,
                    buses,
                    branches,
                    generators,
                    gencost,
                }
            })
    })
}

proptest! {
    #[test]
    fn native_serialisation_is_a_fixed_point(raw in arb_case()) {
        let once = to_native(&raw);
        let back = parse_native(&once).unwrap();
        prop_assert_eq!(&back, &raw);
        prop_assert_eq!(to_native(&back), once);
        prop_assert_eq!(parse_matpower(&to_matpower(&raw, "c")).unwrap(), raw);
    }

    #[test]
    fn validation_keeps_totals_and_ids(raw in arb_case()) {
        let net = validate(&raw, &ValidateOptions::default()).unwrap();
        let load: f64 = raw.buses.iter().map(|b| b.pd).sum();
        let cap: f64 = raw.generators.iter().filter(|g| g.status != 0).map(|g| g.pmax).sum();
        prop_assert!((net.total_load() * raw.base_mva - load).abs() <= 1e-9);
        prop_assert!((net.total_capacity() * raw.base_mva - cap).abs() <= 1e-9);
        prop_assert_eq!(net.n_bus(), raw.buses.len());
        for (k, b) in raw.buses.iter().enumerate() {
            prop_assert_eq!(net.bus_index(b.id), Some(k));
            prop_assert_eq!(net.buses[k].id, b.id);
        }
        prop_assert_eq!(net.n_line(), raw.branches.iter().filter(|b| b.status != 0).count());
    }
}
