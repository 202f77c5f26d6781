//! Network matrices, topology decisions and post-event networks.

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_io::{Bus, Network};

/// Which injections move to the new bus bar in a split. The order matches
/// the columns `[d_i, -g_i, d_i - g_i]` of the transfer matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransferScenario {
    LoadOnly,
    GenOnly,
    GenAndLoad,
}

impl TransferScenario {
    pub const ALL: [TransferScenario; 3] = [
        TransferScenario::LoadOnly,
        TransferScenario::GenOnly,
        TransferScenario::GenAndLoad,
    ];

    /// Column index 0, 1, 2.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn moves_load(self) -> bool {
        self != TransferScenario::GenOnly
    }

    pub fn moves_gen(self) -> bool {
        self != TransferScenario::LoadOnly
    }
}

impl fmt::Display for TransferScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferScenario::LoadOnly => "load",
            TransferScenario::GenOnly => "gen",
            TransferScenario::GenAndLoad => "gen+load",
        })
    }
}

/// One physical operation. Bus and line fields are indices into the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyDecision {
    LineSwitch {
        line: usize,
    },
    BusSplit {
        bus: usize,
        line: usize,
        scenario: TransferScenario,
    },
}

impl TopologyDecision {
    pub fn line(&self) -> usize {
        match *self {
            TopologyDecision::LineSwitch { line } | TopologyDecision::BusSplit { line, .. } => line,
        }
    }

    /// Human-readable label using external bus ids and 1-based line numbers.
    pub fn describe(&self, net: &Network) -> String {
        match *self {
            TopologyDecision::LineSwitch { line } => {
                let l = &net.lines[line];
                format!(
                    "open line {} ({}-{})",
                    line + 1,
                    net.buses[l.from].id,
                    net.buses[l.to].id
                )
            }
            TopologyDecision::BusSplit {
                bus,
                line,
                scenario,
            } => {
                let l = &net.lines[line];
                format!(
                    "split bus {} on line {} ({}-{}) moving {}",
                    net.buses[bus].id,
                    line + 1,
                    net.buses[l.from].id,
                    net.buses[l.to].id,
                    scenario
                )
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("bus {0} is split twice")]
    DuplicateSplit(usize),
    #[error("line {0} appears in more than one decision")]
    DecisionConflict(usize),
    #[error("bus {bus} has no generator to move")]
    MissingInjection { bus: usize },
    #[error("line {0} does not exist")]
    UnknownLine(usize),
    #[error("bus {bus} is not an end of line {line}")]
    NotIncident { bus: usize, line: usize },
}

/// Coordinate-format sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// `(row, col, value)`, row-major order, no duplicates.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    fn from_unsorted(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        SparseMatrix {
            nrows,
            ncols,
            entries: merged,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == i && e.1 == j)
            .map_or(0.0, |e| e.2)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for &(i, j, v) in &self.entries {
            d[i][j] += v;
        }
        d
    }

    /// Product with another sparse matrix.
    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); other.nrows];
        for &(i, j, v) in &other.entries {
            by_row[i].push((j, v));
        }
        let mut out = Vec::new();
        for &(i, k, a) in &self.entries {
            for &(j, b) in &by_row[k] {
                out.push((i, j, a * b));
            }
        }
        SparseMatrix::from_unsorted(self.nrows, other.ncols, out)
    }

    /// One `row col value` line per entry, 1-based, after a `nrows ncols nnz` header.
    pub fn to_triplet_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.nrows, self.ncols, self.entries.len());
        for &(i, j, v) in &self.entries {
            let _ = writeln!(s, "{} {} {}", i + 1, j + 1, v);
        }
        s
    }
}

/// `N x L` incidence matrix, column `l` is `e_from - e_to`.
pub fn incidence(net: &Network) -> SparseMatrix {
    let mut e = Vec::with_capacity(2 * net.n_line());
    for (k, l) in net.lines.iter().enumerate() {
        e.push((l.from, k, 1.0));
        e.push((l.to, k, -1.0));
    }
    SparseMatrix::from_unsorted(net.n_bus(), net.n_line(), e)
}

/// `L x N` matrix mapping angles to flows, row `l` is `b_l (e_from - e_to)^T`.
pub fn flow_matrix(net: &Network) -> SparseMatrix {
    let mut e = Vec::with_capacity(2 * net.n_line());
    for (k, l) in net.lines.iter().enumerate() {
        e.push((k, l.from, l.b));
        e.push((k, l.to, -l.b));
    }
    SparseMatrix::from_unsorted(net.n_line(), net.n_bus(), e)
}

/// Nodal susceptance matrix `sum_l b_l (e_i - e_j)(e_i - e_j)^T`.
pub fn bbus(net: &Network) -> SparseMatrix {
    let mut e = Vec::with_capacity(4 * net.n_line());
    for l in &net.lines {
        e.push((l.from, l.from, l.b));
        e.push((l.to, l.to, l.b));
        e.push((l.from, l.to, -l.b));
        e.push((l.to, l.from, -l.b));
    }
    SparseMatrix::from_unsorted(net.n_bus(), net.n_bus(), e)
}

/// Checks the structural rules shared by every decision list.
pub fn check_decisions(net: &Network, decisions: &[TopologyDecision]) -> Result<(), NetworkError> {
    let mut line_used = vec![false; net.n_line()];
    let mut bus_split = vec![false; net.n_bus()];
    for d in decisions {
        let line = d.line();
        if line >= net.n_line() {
            return Err(NetworkError::UnknownLine(line));
        }
        if std::mem::replace(&mut line_used[line], true) {
            return Err(NetworkError::DecisionConflict(line));
        }
        if let TopologyDecision::BusSplit { bus, scenario, .. } = *d {
            if net.lines[line].other_end(bus).is_none() {
                return Err(NetworkError::NotIncident { bus, line });
            }
            if std::mem::replace(&mut bus_split[bus], true) {
                return Err(NetworkError::DuplicateSplit(bus));
            }
            if scenario.moves_gen() && net.gen_at(bus).is_none() {
                return Err(NetworkError::MissingInjection { bus });
            }
        }
    }
    Ok(())
}

/// Builds the post-event network. Switched lines are removed; each split
/// appends a bus `i'` that takes over line `l` and the selected injections.
/// Line indices of the result follow the input with switched lines dropped.
pub fn apply_decisions(
    net: &Network,
    decisions: &[TopologyDecision],
) -> Result<Network, NetworkError> {
    check_decisions(net, decisions)?;
    let mut out = net.clone();
    let mut next_id = net.buses.iter().map(|b| b.id).max().unwrap_or(0);
    let mut removed = vec![false; net.n_line()];
    for d in decisions {
        match *d {
            TopologyDecision::LineSwitch { line } => removed[line] = true,
            TopologyDecision::BusSplit {
                bus,
                line,
                scenario,
            } => {
                next_id += 1;
                let new = out.buses.len();
                let old = &net.buses[bus];
                out.buses.push(Bus {
                    id: next_id,
                    load: 0.0,
                    theta_min: old.theta_min,
                    theta_max: old.theta_max,
                    split_from: Some(bus),
                });
                let l = &mut out.lines[line];
                if l.from == bus {
                    l.from = new;
                } else {
                    l.to = new;
                }
                if scenario.moves_load() {
                    out.buses[new].load = out.buses[bus].load;
                    out.buses[bus].load = 0.0;
                }
                if scenario.moves_gen() {
                    let g = out.gen_at(bus).expect("checked above");
                    out.gens[g].bus = new;
                }
            }
        }
    }
    let mut k = 0;
    out.lines.retain(|_| {
        let keep = !removed[k];
        k += 1;
        keep
    });
    Ok(out)
}

/// Connected components of the in-service graph, each sorted, ordered by
/// smallest member.
pub fn islands(net: &Network) -> Vec<Vec<usize>> {
    let n = net.n_bus();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in &net.lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
