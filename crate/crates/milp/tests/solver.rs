mod oracle;

use gridsplit_milp::{
    lp_solve, solve, Branching, LpStatus, MilpOptions, MilpProblem, MilpStatus, Relation,
};
use oracle::{dense_lp, enumerate, Outcome};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn random_lp(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64, boxed: bool) -> MilpProblem {
    let mut p = MilpProblem::new();
    let mut x0 = Vec::new();
    for j in 0..n {
        let kind = if boxed { 3 } else { rng.gen_range(0..6) };
        let (lo, hi) = match kind {
            0 => (f64::NEG_INFINITY, f64::INFINITY),
            1 => (0.0, f64::INFINITY),
            2 => (f64::NEG_INFINITY, 5.0),
            _ => {
                let lo = rng.gen_range(-5.0..0.0);
                (lo, lo + rng.gen_range(0.5..10.0))
            }
        };
        let c = rng.gen_range(-10.0..10.0);
        p.add_var(format!("x{j}"), lo, hi, c);
        let lo_s = if lo.is_finite() { lo } else { -3.0 };
        let hi_s = if hi.is_finite() { hi } else { lo_s + 6.0 };
        x0.push(rng.gen_range(lo_s..=hi_s));
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(density) {
                coeffs.push((j, rng.gen_range(-5.0..5.0)));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let (rel, rhs) = match rng.gen_range(0..5) {
            0 => (Relation::Eq, act),
            1 | 2 => (Relation::Le, act + rng.gen_range(0.0..3.0)),
            _ => (Relation::Ge, act - rng.gen_range(0.0..3.0)),
        };
        p.add_constraint(format!("r{i}"), coeffs, rel, rhs);
    }
    p
}

#[test]
fn random_lps_match_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    for case in 0..60 {
        let mut p = random_lp(&mut rng, 20, 40, 0.3, case % 3 != 0);
        if case % 5 == 4 {
            // Contradict the first row.
            let c = p.constraints[0].clone();
            let (rel, rhs) = match c.relation {
                Relation::Ge => (Relation::Le, c.rhs - 1.0),
                _ => (Relation::Ge, c.rhs + 1.0),
            };
            p.add_constraint("contradiction", c.coeffs, rel, rhs);
        }
        let ours = lp_solve(&p, None).unwrap();
        let reference = dense_lp(&p);
        match (ours.status, reference) {
            (LpStatus::Optimal, Outcome::Optimal(v)) => {
                counts[0] += 1;
                assert!(
                    close(ours.objective, v, 1e-6),
                    "case {case}: {} vs {v}",
                    ours.objective
                );
                assert!(p.max_violation(&ours.x) <= 1e-7, "case {case}: residual");
                assert!(
                    close(ours.objective, ours.dual_objective, 1e-7),
                    "case {case}: duality"
                );
            }
            (LpStatus::Unbounded, Outcome::Unbounded) => counts[1] += 1,
            (LpStatus::Infeasible, Outcome::Infeasible) => counts[2] += 1,
            (s, r) => panic!("case {case}: {s:?} vs {r:?}"),
        }
    }
    assert!(
        counts.iter().all(|&c| c >= 5),
        "too few bounded instances: {counts:?}"
    );
}

#[test]
fn warm_started_lp_agrees_with_cold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut p = random_lp(&mut rng, 20, 40, 0.3, false);
        for j in 0..p.num_vars() {
            if !p.lower[j].is_finite() {
                p.lower[j] = -20.0;
            }
            if !p.upper[j].is_finite() {
                p.upper[j] = 20.0;
            }
        }
        let first = lp_solve(&p, None).unwrap();
        if first.status != LpStatus::Optimal {
            continue;
        }
        let j = rng.gen_range(0..p.num_vars());
        p.upper[j] = (p.lower[j] + p.upper[j]) / 2.0;
        let cold = lp_solve(&p, None).unwrap();
        let warm = lp_solve(&p, first.basis.as_ref()).unwrap();
        assert_eq!(cold.status, warm.status);
        if cold.status == LpStatus::Optimal {
            assert!(close(cold.objective, warm.objective, 1e-8));
        }
    }
}

fn random_milp(rng: &mut ChaCha8Rng) -> MilpProblem {
    let mut p = MilpProblem::new();
    let nb = rng.gen_range(4..=12);
    let nc = rng.gen_range(0..=3);
    for j in 0..nb {
        p.add_binary(format!("b{j}"), rng.gen_range(-10.0..10.0_f64).round());
    }
    for j in 0..nc {
        p.add_var(
            format!("c{j}"),
            0.0,
            rng.gen_range(1.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
    }
    let n = nb + nc;
    for i in 0..rng.gen_range(2..8) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                coeffs.push((j, rng.gen_range(-6..=6) as f64));
            }
        }
        let rel = if rng.gen_bool(0.8) {
            Relation::Le
        } else {
            Relation::Ge
        };
        let rhs = rng.gen_range(-3..=8) as f64;
        p.add_constraint(format!("r{i}"), coeffs, rel, rhs);
    }
    p
}

#[test]
fn random_milps_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for case in 0..25 {
        let p = random_milp(&mut rng);
        let sol = solve(&p, &MilpOptions::default()).unwrap();
        match enumerate(&p) {
            Outcome::Optimal(v) => {
                feasible += 1;
                assert_eq!(sol.status, MilpStatus::Optimal, "case {case}");
                assert!(
                    close(sol.objective, v, 1e-9),
                    "case {case}: {} vs {v}",
                    sol.objective
                );
                let x = sol.x.unwrap();
                assert!(p.max_violation(&x) <= 1e-6);
                assert!(p.max_fractionality(&x) <= 1e-6);
            }
            Outcome::Infeasible => assert_eq!(sol.status, MilpStatus::Infeasible, "case {case}"),
            Outcome::Unbounded => unreachable!("boxed variables"),
        }
    }
    assert!(feasible >= 15, "only {feasible} feasible instances");
}

#[test]
fn reliability_branching_agrees_with_enumeration() {
    let opts = MilpOptions {
        branching: Branching::Reliability {
            candidates: 8,
            reliable: 2,
        },
        ..MilpOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..25 {
        let p = random_milp(&mut rng);
        let sol = solve(&p, &opts).unwrap();
        match enumerate(&p) {
            Outcome::Optimal(v) => {
                assert_eq!(sol.status, MilpStatus::Optimal, "case {case}");
                assert!(
                    close(sol.objective, v, 1e-9),
                    "case {case}: {} vs {v}",
                    sol.objective
                );
            }
            Outcome::Infeasible => assert_eq!(sol.status, MilpStatus::Infeasible, "case {case}"),
            Outcome::Unbounded => unreachable!("boxed variables"),
        }
    }
}

#[test]
fn knapsack_matches_enumeration() {
    let weights = [12.0, 7.0, 11.0, 8.0, 9.0];
    let values = [24.0, 13.0, 23.0, 15.0, 16.0];
    let cap = 26.0;
    let mut p = MilpProblem::new();
    for (k, v) in values.iter().enumerate() {
        p.add_binary(format!("item{k}"), -v);
    }
    p.add_constraint(
        "capacity",
        weights.iter().copied().enumerate().collect(),
        Relation::Le,
        cap,
    );
    let mut best = 0.0;
    for mask in 0..32u32 {
        let (mut w, mut v) = (0.0, 0.0);
        for k in 0..5 {
            if mask >> k & 1 == 1 {
                w += weights[k];
                v += values[k];
            }
        }
        if w <= cap && v > best {
            best = v;
        }
    }
    let sol = solve(&p, &MilpOptions::default()).unwrap();
    assert_eq!(sol.status, MilpStatus::Optimal);
    assert_eq!(sol.objective, -best);
}

#[test]
fn assignment_is_solved_at_root() {
    let cost = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
    let mut p = MilpProblem::new();
    let mut x = [[0usize; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            x[i][j] = p.add_binary(format!("x_{i}_{j}"), cost[i][j]);
        }
    }
    for i in 0..3 {
        p.add_constraint(
            format!("row{i}"),
            (0..3).map(|j| (x[i][j], 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
        p.add_constraint(
            format!("col{i}"),
            (0..3).map(|j| (x[j][i], 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    let sol = solve(&p, &MilpOptions::default()).unwrap();
    assert_eq!(sol.status, MilpStatus::Optimal);
    assert_eq!(sol.nodes, 1);
    assert_eq!(sol.objective, 5.0);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let p = random_milp(&mut rng);
        let opts = MilpOptions {
            log_nodes: true,
            ..MilpOptions::default()
        };
        let a = solve(&p, &opts).unwrap();
        let b = solve(&p, &opts).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.bound.to_bits(), b.bound.to_bits());
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.log, b.log);
    }
}

#[test]
fn node_log_bound_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let p = random_milp(&mut rng);
        let opts = MilpOptions {
            log_nodes: true,
            ..MilpOptions::default()
        };
        let s = solve(&p, &opts).unwrap();
        for w in s.log.windows(2) {
            assert!(w[1].best_bound >= w[0].best_bound);
        }
        if s.status == MilpStatus::Optimal {
            assert!(s.bound <= s.objective + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incumbents_are_feasible_and_bounded_by_relaxation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng);
        let sol = solve(&p, &MilpOptions::default()).unwrap();
        let relax = lp_solve(&p, None).unwrap();
        if let Some(x) = &sol.x {
            prop_assert!(p.max_violation(x) <= 1e-6);
            prop_assert!(p.max_fractionality(x) <= 1e-6);
            prop_assert!((sol.objective - p.objective_value(x)).abs() <= 1e-9);
            prop_assert_eq!(relax.status, LpStatus::Optimal);
            prop_assert!(relax.objective <= sol.objective + 1e-7);
            prop_assert!((sol.gap - (sol.objective - sol.bound) / sol.objective.abs().max(1.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn lp_optimum_is_primal_and_dual_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_lp(&mut rng, 8, 12, 0.4, seed % 2 == 0);
        let s = lp_solve(&p, None).unwrap();
        if s.status == LpStatus::Optimal {
            prop_assert!(p.max_violation(&s.x) <= 1e-7);
            prop_assert!(close(s.objective, s.dual_objective, 1e-7));
            prop_assert!(close(s.objective, dense_lp(&p).value().unwrap(), 1e-6));
        }
    }
}
