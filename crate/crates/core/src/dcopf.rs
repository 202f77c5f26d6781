//! DC power flow and the fixed-topology DC-OPF.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use gridsplit_milp::{lp_solve, LpStatus, MilpError, MilpProblem, Relation};

use crate::case_io::Network;
use crate::network::islands;
use crate::solution::{SolveResult, SolveStatus};

/// Tolerance on the net injection of each island.
pub const BALANCE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DcError {
    #[error("susceptance matrix of the island containing bus index {bus} is singular")]
    SingularSystem { bus: usize },
    #[error("injections of the island containing bus index {bus} sum to {sum:e}, not zero")]
    UnbalancedInjection { bus: usize, sum: f64 },
    #[error("expected {expected} injections, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Lp(#[from] MilpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcSolution {
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
    /// Largest mismatch at an island's reference bus, which absorbs the
    /// rounding of the other equations.
    pub slack_injection_residual: f64,
}

/// Reference of each island: the network reference where it lies, else the
/// first bus with a generator record, else the first bus.
fn island_reference(net: &Network, island: &[usize]) -> usize {
    if island.contains(&net.reference) {
        return net.reference;
    }
    island
        .iter()
        .copied()
        .find(|&b| net.gen_at(b).is_some())
        .unwrap_or(island[0])
}

/// Solves `B theta = p` island by island with each island's reference
/// angle pinned to zero.
pub fn solve_dcpf(net: &Network, p: &[f64]) -> Result<DcSolution, DcError> {
    let n = net.n_bus();
    if p.len() != n {
        return Err(DcError::WrongLength {
            expected: n,
            got: p.len(),
        });
    }
    let mut theta = vec![0.0; n];
    let mut residual: f64 = 0.0;
    let mut local = vec![usize::MAX; n];
    for island in islands(net) {
        let sum: f64 = island.iter().map(|&b| p[b]).sum();
        if sum.abs() > BALANCE_TOL {
            return Err(DcError::UnbalancedInjection {
                bus: island[0],
                sum,
            });
        }
        let reference = island_reference(net, &island);
        let others: Vec<usize> = island.iter().copied().filter(|&b| b != reference).collect();
        if others.is_empty() {
            residual = residual.max(p[reference].abs());
            continue;
        }
        for (k, &b) in others.iter().enumerate() {
            local[b] = k;
        }
        let m = others.len();
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for l in &net.lines {
            if local[l.from] == usize::MAX && local[l.to] == usize::MAX {
                // Outside this island, or a self-loop at the reference.
                continue;
            }
            for (u, v) in [(l.from, l.to), (l.to, l.from)] {
                if u == reference {
                    continue;
                }
                bmat[(local[u], local[u])] += l.b;
                if v != reference {
                    bmat[(local[u], local[v])] -= l.b;
                }
            }
        }
        let rhs = DVector::from_iterator(m, others.iter().map(|&b| p[b]));
        let chol = bmat
            .cholesky()
            .ok_or(DcError::SingularSystem { bus: island[0] })?;
        let sol = chol.solve(&rhs);
        for (k, &b) in others.iter().enumerate() {
            theta[b] = sol[k];
            local[b] = usize::MAX;
        }
        let at_ref: f64 = net
            .lines
            .iter()
            .map(|l| {
                let f = l.b * (theta[l.from] - theta[l.to]);
                if l.from == reference {
                    f
                } else if l.to == reference {
                    -f
                } else {
                    0.0
                }
            })
            .sum();
        residual = residual.max((at_ref - p[reference]).abs());
    }
    let flows = net
        .lines
        .iter()
        .map(|l| l.b * (theta[l.from] - theta[l.to]))
        .collect();
    Ok(DcSolution {
        theta,
        flows,
        slack_injection_residual: residual,
    })
}

/// The DC-OPF as an LP with variables ordered `theta`, `g`, `f`.
pub fn dcopf_problem(net: &Network) -> MilpProblem {
    let mut p = MilpProblem::new();
    let theta: Vec<usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            if k == net.reference {
                p.add_var(format!("theta_{}", b.id), 0.0, 0.0, 0.0)
            } else {
                p.add_var(format!("theta_{}", b.id), b.theta_min, b.theta_max, 0.0)
            }
        })
        .collect();
    let g: Vec<usize> = net
        .gens
        .iter()
        .map(|gen| {
            p.add_var(
                format!("g_{}", net.buses[gen.bus].id),
                gen.pmin,
                gen.pmax,
                gen.cost,
            )
        })
        .collect();
    let f: Vec<usize> = net
        .lines
        .iter()
        .map(|l| p.add_var(format!("f_{}", l.branch + 1), -l.fmax, l.fmax, 0.0))
        .collect();
    for (k, l) in net.lines.iter().enumerate() {
        p.add_constraint(
            format!("ohm_{}", l.branch + 1),
            vec![(f[k], 1.0), (theta[l.from], -l.b), (theta[l.to], l.b)],
            Relation::Eq,
            0.0,
        );
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.n_bus()];
    for (k, l) in net.lines.iter().enumerate() {
        rows[l.from].push((f[k], 1.0));
        rows[l.to].push((f[k], -1.0));
    }
    for (j, gen) in net.gens.iter().enumerate() {
        rows[gen.bus].push((g[j], -1.0));
    }
    for (n, row) in rows.into_iter().enumerate() {
        let bus = &net.buses[n];
        p.add_constraint(format!("balance_{}", bus.id), row, Relation::Eq, -bus.load);
    }
    p
}

/// Least-cost dispatch on the fixed topology.
pub fn solve_dcopf(net: &Network) -> Result<SolveResult, DcError> {
    let start = Instant::now();
    let problem = dcopf_problem(net);
    let lp = lp_solve(&problem, None)?;
    let mut out = SolveResult::empty(lp.status.into());
    out.islands = islands(net).len();
    out.nodes = 1;
    out.wall_time_s = start.elapsed().as_secs_f64();
    if lp.status != LpStatus::Optimal {
        return Ok(out);
    }
    let (nb, ng) = (net.n_bus(), net.gens.len());
    out.status = SolveStatus::Optimal;
    out.objective = Some(lp.objective);
    out.bound = Some(lp.dual_objective);
    out.gap = Some(0.0);
    out.theta = lp.x[..nb].to_vec();
    out.dispatch = lp.x[nb..nb + ng].to_vec();
    out.flows = lp.x[nb + ng..].to_vec();
    Ok(out)
}
