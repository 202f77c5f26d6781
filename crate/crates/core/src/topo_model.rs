//! The switching MILP: line status, bus-split transfer selectors and their
//! McCormick products, and the mapping back to topology decisions.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gridsplit_milp::{
    solve, Branching, Constraint, MilpError, MilpOptions, MilpProblem, MilpStatus, NodeEvent,
    Relation,
};

use crate::case_io::{Line, Network};
use crate::network::{apply_decisions, islands, NetworkError, TopologyDecision, TransferScenario};
use crate::solution::{SolveResult, SolveStatus};

/// Values above this count as 1 when reading binaries back.
const ONE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Fixed topology: the DC-OPF benchmark.
    NoSwitch,
    /// Line switching only.
    LineOnly,
    /// Line switching and bus splitting.
    Breaker,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoSwitch, Mode::LineOnly, Mode::Breaker];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NoSwitch => "none",
            Mode::LineOnly => "line",
            Mode::Breaker => "breaker",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" | "no-switch" => Ok(Mode::NoSwitch),
            "line" | "line-only" => Ok(Mode::LineOnly),
            "breaker" => Ok(Mode::Breaker),
            _ => Err(format!(
                "unknown mode '{s}' (expected none, line or breaker)"
            )),
        }
    }
}

/// End of a line: `I` is the from bus, `J` the to bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum End {
    I,
    J,
}

impl End {
    pub const BOTH: [End; 2] = [End::I, End::J];

    pub fn bus(self, line: &Line) -> usize {
        match self {
            End::I => line.from,
            End::J => line.to,
        }
    }

    pub fn other(self) -> End {
        match self {
            End::I => End::J,
            End::J => End::I,
        }
    }

    fn tag(self) -> char {
        match self {
            End::I => 'i',
            End::J => 'j',
        }
    }
}

/// What a column of the MILP stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Theta {
        bus: usize,
    },
    Gen {
        bus: usize,
    },
    Flow {
        line: usize,
    },
    Status {
        line: usize,
    },
    Transfer {
        line: usize,
        end: End,
        scenario: TransferScenario,
    },
    Product {
        line: usize,
        end: End,
        scenario: TransferScenario,
    },
}

/// Column indices by role. `w[l][end][k]` and `y[l][end][k]` use
/// `End as usize` and the scenario index.
#[derive(Clone, Debug, PartialEq)]
pub struct VarMap {
    pub theta: Vec<usize>,
    pub gen: Vec<usize>,
    pub flow: Vec<usize>,
    pub status: Vec<usize>,
    pub w: Vec<[[usize; 3]; 2]>,
    pub y: Vec<[[usize; 3]; 2]>,
    pub kinds: Vec<VarKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    /// Angle spread defining the Big-M constants, rad.
    pub dtheta_max: f64,
    /// Decision sets excluded by no-good cuts.
    pub no_goods: Vec<Vec<TopologyDecision>>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            dtheta_max: 0.6,
            no_goods: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TopologyModel {
    pub problem: MilpProblem,
    pub vars: VarMap,
    pub mode: Mode,
    /// Budget after clamping to the line count.
    pub budget: usize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("network has no buses")]
    EmptyNetwork,
    #[error("dtheta_max must be positive, got {0}")]
    InvalidAngleSpread(f64),
    #[error("line {line} has {active} active transfer selectors (status {status})")]
    AmbiguousDecision {
        line: usize,
        active: usize,
        status: f64,
    },
    #[error("solver objective {reported} disagrees with recomputed cost {recomputed}")]
    ObjectiveMismatch { reported: f64, recomputed: f64 },
    #[error("solution vector has {got} entries, model has {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Big-M of the angle constraints of a line: `b * dtheta_max`.
pub fn big_m(line: &Line, dtheta_max: f64) -> f64 {
    line.b * dtheta_max
}

/// Linearizes `y_k = w_k g` for the three scenarios of one line end.
/// Rows come in scenario order, four per scenario.
pub fn mccormick_block(
    w: [usize; 3],
    y: [usize; 3],
    g: usize,
    gmin: f64,
    gmax: f64,
    tag: &str,
) -> Vec<Constraint> {
    let mut rows = Vec::with_capacity(12);
    for k in 0..3 {
        let name = |n: u8| format!("mc{n}_{tag}_{}", k + 1);
        rows.push(Constraint {
            name: name(1),
            coeffs: vec![(y[k], 1.0), (w[k], -gmin)],
            relation: Relation::Ge,
            rhs: 0.0,
        });
        rows.push(Constraint {
            name: name(2),
            coeffs: vec![(y[k], 1.0), (g, -1.0), (w[k], -gmax)],
            relation: Relation::Ge,
            rhs: -gmax,
        });
        rows.push(Constraint {
            name: name(3),
            coeffs: vec![(y[k], 1.0), (w[k], -gmax)],
            relation: Relation::Le,
            rhs: 0.0,
        });
        rows.push(Constraint {
            name: name(4),
            coeffs: vec![(y[k], 1.0), (g, -1.0), (w[k], -gmin)],
            relation: Relation::Le,
            rhs: -gmin,
        });
    }
    rows
}

/// Generator bounds and cost per bus; zero where there is no record.
fn bus_generation(net: &Network) -> Vec<Option<(f64, f64, f64)>> {
    let mut out = vec![None; net.n_bus()];
    for g in &net.gens {
        out[g.bus] = Some((g.pmin, g.pmax, g.cost));
    }
    out
}

/// Builds the MILP for budget `s` in the given mode.
pub fn build_model(
    net: &Network,
    s: usize,
    mode: Mode,
    opts: &ModelOptions,
) -> Result<TopologyModel, ModelError> {
    if net.n_bus() == 0 {
        return Err(ModelError::EmptyNetwork);
    }
    if !(opts.dtheta_max > 0.0) {
        return Err(ModelError::InvalidAngleSpread(opts.dtheta_max));
    }
    let nl = net.n_line();
    let budget = if s > nl {
        log::warn!("budget {s} exceeds the {nl} lines; using {nl}");
        nl
    } else {
        s
    };
    let gen = bus_generation(net);
    let id = |b: usize| net.buses[b].id;
    let mut p = MilpProblem::new();
    let mut kinds = Vec::new();

    let theta: Vec<usize> = (0..net.n_bus())
        .map(|b| {
            kinds.push(VarKind::Theta { bus: b });
            let bus = &net.buses[b];
            let (lo, hi) = if b == net.reference {
                (0.0, 0.0)
            } else {
                (bus.theta_min, bus.theta_max)
            };
            p.add_var(format!("theta_{}", id(b)), lo, hi, 0.0)
        })
        .collect();
    let g: Vec<usize> = (0..net.n_bus())
        .map(|b| {
            kinds.push(VarKind::Gen { bus: b });
            let (lo, hi, c) = gen[b].unwrap_or((0.0, 0.0, 0.0));
            p.add_var(format!("g_{}", id(b)), lo, hi, c)
        })
        .collect();
    let flow: Vec<usize> = (0..nl)
        .map(|l| {
            kinds.push(VarKind::Flow { line: l });
            let fmax = net.lines[l].fmax;
            p.add_var(format!("f_{}", l + 1), -fmax, fmax, 0.0)
        })
        .collect();
    let status: Vec<usize> = (0..nl)
        .map(|l| {
            kinds.push(VarKind::Status { line: l });
            p.add_binary(format!("z_{}", l + 1), 0.0)
        })
        .collect();
    let mut w = vec![[[0usize; 3]; 2]; nl];
    for (l, ends) in w.iter_mut().enumerate() {
        for end in End::BOTH {
            for scenario in TransferScenario::ALL {
                kinds.push(VarKind::Transfer {
                    line: l,
                    end,
                    scenario,
                });
                ends[end as usize][scenario.index()] = p.add_binary(
                    format!("w_{}_{}_{}", l + 1, end.tag(), scenario.index() + 1),
                    0.0,
                );
            }
        }
    }
    let mut y = vec![[[0usize; 3]; 2]; nl];
    for (l, ends) in y.iter_mut().enumerate() {
        for end in End::BOTH {
            let (gmin, gmax, _) = gen[end.bus(&net.lines[l])].unwrap_or((0.0, 0.0, 0.0));
            for scenario in TransferScenario::ALL {
                kinds.push(VarKind::Product {
                    line: l,
                    end,
                    scenario,
                });
                ends[end as usize][scenario.index()] = p.add_var(
                    format!("y_{}_{}_{}", l + 1, end.tag(), scenario.index() + 1),
                    gmin.min(0.0),
                    gmax.max(0.0),
                    0.0,
                );
            }
        }
    }

    // Fix selectors whose transfer would be empty, then apply the mode.
    for l in 0..nl {
        for end in End::BOTH {
            let bus = end.bus(&net.lines[l]);
            let no_gen = gen[bus].is_none_or(|(lo, hi, _)| lo == 0.0 && hi == 0.0);
            let no_load = net.buses[bus].load == 0.0;
            for scenario in TransferScenario::ALL {
                let k = scenario.index();
                let empty = (scenario.moves_gen() && no_gen) || (scenario.moves_load() && no_load);
                if empty || mode != Mode::Breaker {
                    p.fix(w[l][end as usize][k], 0.0);
                }
                if no_gen || mode != Mode::Breaker {
                    p.fix(y[l][end as usize][k], 0.0);
                }
            }
        }
        if mode == Mode::NoSwitch {
            p.fix(status[l], 1.0);
        }
    }

    for (l, line) in net.lines.iter().enumerate() {
        let (f, z) = (flow[l], status[l]);
        let m = big_m(line, opts.dtheta_max);
        let (ti, tj) = (theta[line.from], theta[line.to]);
        let n = l + 1;
        p.add_constraint(
            format!("fmax_{n}"),
            vec![(f, 1.0), (z, -line.fmax)],
            Relation::Le,
            0.0,
        );
        p.add_constraint(
            format!("fmin_{n}"),
            vec![(f, 1.0), (z, line.fmax)],
            Relation::Ge,
            0.0,
        );
        p.add_constraint(
            format!("ohm_lo_{n}"),
            vec![(ti, line.b), (tj, -line.b), (f, -1.0), (z, -m)],
            Relation::Ge,
            -m,
        );
        p.add_constraint(
            format!("ohm_hi_{n}"),
            vec![(ti, line.b), (tj, -line.b), (f, -1.0), (z, m)],
            Relation::Le,
            m,
        );
    }

    p.add_constraint(
        "budget",
        status.iter().map(|&z| (z, -1.0)).collect(),
        Relation::Le,
        budget as f64 - nl as f64,
    );

    for l in 0..nl {
        let mut row = vec![(status[l], 1.0)];
        for end in End::BOTH {
            row.extend(w[l][end as usize].iter().map(|&v| (v, 1.0)));
        }
        p.add_constraint(format!("one_op_{}", l + 1), row, Relation::Le, 1.0);
    }

    let mut per_bus: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.n_bus()];
    for (l, line) in net.lines.iter().enumerate() {
        for end in End::BOTH {
            per_bus[end.bus(line)].extend(w[l][end as usize].iter().map(|&v| (v, 1.0)));
        }
    }
    for (b, row) in per_bus.into_iter().enumerate() {
        p.add_constraint(format!("one_split_{}", id(b)), row, Relation::Le, 1.0);
    }

    // Nodal balance with the transferred injections moved to the left.
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.n_bus()];
    for (l, line) in net.lines.iter().enumerate() {
        balance[line.from].push((flow[l], 1.0));
        balance[line.to].push((flow[l], -1.0));
    }
    for b in 0..net.n_bus() {
        balance[b].push((g[b], -1.0));
    }
    for (l, line) in net.lines.iter().enumerate() {
        let mut cap = Vec::new();
        for end in End::BOTH {
            let a = end.bus(line);
            let o = end.other().bus(line);
            let d = net.buses[a].load;
            let sign = if end == End::I { 1.0 } else { -1.0 };
            let terms = transfer_terms(&w[l][end as usize], &y[l][end as usize], d);
            for &(v, c) in &terms {
                balance[a].push((v, -c));
                balance[o].push((v, c));
                cap.push((v, sign * c));
            }
        }
        p.add_constraint(
            format!("transfer_hi_{}", l + 1),
            cap.clone(),
            Relation::Le,
            line.fmax,
        );
        p.add_constraint(
            format!("transfer_lo_{}", l + 1),
            cap,
            Relation::Ge,
            -line.fmax,
        );
    }
    for (b, row) in balance.into_iter().enumerate() {
        p.add_constraint(
            format!("balance_{}", id(b)),
            row,
            Relation::Eq,
            -net.buses[b].load,
        );
    }

    for (l, line) in net.lines.iter().enumerate() {
        for end in End::BOTH {
            let bus = end.bus(line);
            let (gmin, gmax, _) = gen[bus].unwrap_or((0.0, 0.0, 0.0));
            let e = end as usize;
            let tag = format!("{}_{}", l + 1, end.tag());
            for row in mccormick_block(w[l][e], y[l][e], g[bus], gmin, gmax, &tag) {
                p.add_constraint(row.name, row.coeffs, row.relation, row.rhs);
            }
        }
    }

    let vars = VarMap {
        theta,
        gen: g,
        flow,
        status,
        w,
        y,
        kinds,
    };
    for (c, cut) in opts.no_goods.iter().enumerate() {
        let (coeffs, rhs) = no_good_row(&vars, net, cut);
        p.add_constraint(format!("no_good_{}", c + 1), coeffs, Relation::Ge, rhs);
    }

    Ok(TopologyModel {
        problem: p,
        vars,
        mode,
        budget,
    })
}

/// The net injection removed from a line end by its selectors, as
/// `(variable, coefficient)`: `d (w_1 + w_3) - (y_2 + y_3)`.
fn transfer_terms(w: &[usize; 3], y: &[usize; 3], load: f64) -> Vec<(usize, f64)> {
    vec![(w[0], load), (w[2], load), (y[1], -1.0), (y[2], -1.0)]
}

/// `sum_{switched} z + sum_{splits} (1 - w) >= 1`, returned with the
/// constants moved to the right-hand side.
fn no_good_row(
    vars: &VarMap,
    net: &Network,
    decisions: &[TopologyDecision],
) -> (Vec<(usize, f64)>, f64) {
    let mut coeffs = Vec::new();
    let mut rhs = 1.0;
    for d in decisions {
        match *d {
            TopologyDecision::LineSwitch { line } => coeffs.push((vars.status[line], 1.0)),
            TopologyDecision::BusSplit {
                bus,
                line,
                scenario,
            } => {
                let end = if net.lines[line].from == bus {
                    End::I
                } else {
                    End::J
                };
                coeffs.push((vars.w[line][end as usize][scenario.index()], -1.0));
                rhs -= 1.0;
            }
        }
    }
    (coeffs, rhs)
}

/// Reads decisions, dispatch, angles and physical flows from an
/// integer-feasible vector and checks the cost against `reported`.
pub fn decode(
    model: &TopologyModel,
    net: &Network,
    x: &[f64],
    reported: f64,
) -> Result<SolveResult, ModelError> {
    let v = &model.vars;
    if x.len() != model.problem.num_vars() {
        return Err(ModelError::WrongLength {
            expected: model.problem.num_vars(),
            got: x.len(),
        });
    }
    let mut decisions = Vec::new();
    let mut flows = Vec::with_capacity(net.n_line());
    for (l, line) in net.lines.iter().enumerate() {
        let z = x[v.status[l]];
        let active: Vec<(End, TransferScenario)> = End::BOTH
            .iter()
            .flat_map(|&end| TransferScenario::ALL.iter().map(move |&sc| (end, sc)))
            .filter(|&(end, sc)| x[v.w[l][end as usize][sc.index()]] > ONE)
            .collect();
        let closed = z > ONE;
        if active.len() > 1 || (closed && !active.is_empty()) {
            return Err(ModelError::AmbiguousDecision {
                line: l,
                active: active.len(),
                status: z,
            });
        }
        if closed {
            flows.push(x[v.flow[l]]);
            continue;
        }
        match active.first() {
            None => {
                decisions.push(TopologyDecision::LineSwitch { line: l });
                flows.push(0.0);
            }
            Some(&(end, scenario)) => {
                let bus = end.bus(line);
                decisions.push(TopologyDecision::BusSplit {
                    bus,
                    line: l,
                    scenario,
                });
                // The re-terminated line carries the moved injection away
                // from the new bus; orient it from -> to.
                let e = end as usize;
                let moved: f64 = transfer_terms(&v.w[l][e], &v.y[l][e], net.buses[bus].load)
                    .iter()
                    .map(|&(k, c)| c * x[k])
                    .sum();
                let sign = if end == End::I { -1.0 } else { 1.0 };
                flows.push(sign * moved);
            }
        }
    }
    let dispatch: Vec<f64> = net.gens.iter().map(|g| x[v.gen[g.bus]]).collect();
    let recomputed: f64 = net
        .gens
        .iter()
        .zip(&dispatch)
        .map(|(g, &p)| g.cost * p)
        .sum();
    if (recomputed - reported).abs() > 1e-7 * (1.0 + reported.abs()) {
        return Err(ModelError::ObjectiveMismatch {
            reported,
            recomputed,
        });
    }
    let post = apply_decisions(net, &decisions)?;
    let mut out = SolveResult::empty(SolveStatus::Optimal);
    out.objective = Some(recomputed);
    out.dispatch = dispatch;
    out.theta = v.theta.iter().map(|&k| x[k]).collect();
    out.flows = flows;
    out.decisions = decisions;
    out.islands = islands(&post).len();
    Ok(out)
}

/// Integer part of a start vector realising `decisions`; continuous
/// entries are left at zero for the solver to complete.
pub fn encode(model: &TopologyModel, net: &Network, decisions: &[TopologyDecision]) -> Vec<f64> {
    let v = &model.vars;
    let mut x = vec![0.0; model.problem.num_vars()];
    for &z in &v.status {
        x[z] = 1.0;
    }
    for d in decisions {
        let line = d.line();
        x[v.status[line]] = 0.0;
        if let TopologyDecision::BusSplit { bus, scenario, .. } = *d {
            let end = if net.lines[line].from == bus {
                End::I
            } else {
                End::J
            };
            x[v.w[line][end as usize][scenario.index()]] = 1.0;
        }
    }
    x
}

#[derive(Clone, Debug)]
pub struct TopologyOptions {
    pub model: ModelOptions,
    pub rel_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub forbid_islanding: bool,
    /// Most no-good cuts added before giving up on a connected plan.
    pub max_cuts: usize,
    pub log_nodes: bool,
    /// Known feasible plan offered to the solver as an incumbent.
    pub start: Option<Vec<TopologyDecision>>,
    pub branching: Branching,
}

impl Default for TopologyOptions {
    fn default() -> Self {
        TopologyOptions {
            model: ModelOptions::default(),
            rel_gap: 1e-6,
            time_limit: None,
            node_limit: None,
            forbid_islanding: false,
            max_cuts: 50,
            log_nodes: false,
            start: None,
            branching: Branching::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TopologyOutcome {
    pub result: SolveResult,
    pub node_log: Vec<NodeEvent>,
    /// Plans rejected for islanding.
    pub cuts: Vec<Vec<TopologyDecision>>,
    pub num_vars: usize,
    pub num_constraints: usize,
}

/// Builds, solves and decodes; with `forbid_islanding`, re-solves with a
/// no-good cut after each islanded optimum.
pub fn solve_topology(
    net: &Network,
    s: usize,
    mode: Mode,
    opts: &TopologyOptions,
) -> Result<TopologyOutcome, ModelError> {
    let started = Instant::now();
    let base_islands = islands(net).len();
    let mut model_opts = opts.model.clone();
    let mut node_log = Vec::new();
    let mut nodes = 0;
    let mut start = opts.start.clone();
    loop {
        let model = build_model(net, s, mode, &model_opts)?;
        let remaining = opts.time_limit.map(|t| t.saturating_sub(started.elapsed()));
        let milp_opts = MilpOptions {
            rel_gap: opts.rel_gap,
            time_limit: remaining,
            node_limit: opts.node_limit,
            log_nodes: opts.log_nodes,
            start: start.as_ref().map(|d| encode(&model, net, d)),
            branching: opts.branching,
            ..MilpOptions::default()
        };
        let sol = solve(&model.problem, &milp_opts)?;
        nodes += sol.nodes;
        node_log.extend(sol.log);
        let status = SolveStatus::from(sol.status);
        let mut result = match &sol.x {
            Some(x) => {
                let mut r = decode(&model, net, x, sol.objective)?;
                r.status = status;
                r.gap = Some(sol.gap);
                r
            }
            None => SolveResult::empty(status),
        };
        result.bound = sol.bound.is_finite().then_some(sol.bound);
        result.nodes = nodes;
        result.wall_time_s = started.elapsed().as_secs_f64();
        let islanded = result.has_solution() && result.islands > base_islands;
        let can_cut =
            model_opts.no_goods.len() < opts.max_cuts && sol.status == MilpStatus::Optimal;
        if opts.forbid_islanding && islanded && can_cut {
            log::info!(
                "s={s} {mode}: plan {:?} islands the network; excluding it",
                result.decisions
            );
            model_opts.no_goods.push(result.decisions.clone());
            start = None;
            continue;
        }
        if opts.forbid_islanding && islanded {
            log::warn!(
                "s={s} {mode}: returning an islanded plan; cut limit or solver limit reached"
            );
        }
        return Ok(TopologyOutcome {
            result,
            node_log,
            cuts: model_opts.no_goods,
            num_vars: model.problem.num_vars(),
            num_constraints: model.problem.num_constraints(),
        });
    }
}
