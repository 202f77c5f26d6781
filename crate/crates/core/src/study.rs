//! Budget sweeps over the switching modes, their output files, and the
//! comparison of two sweeps.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use gridsplit_milp::{export_lp, Branching};

use crate::acpf::{verify_decisions, AcNetwork, AcStatus, FeasibilityReport, NrOptions};
use crate::case_io::{
    to_native, validate, CaseError, CostLinearization, Network, RawCase, ValidateOptions,
};
use crate::cases::{load, LoadError};
use crate::network::TopologyDecision;
use crate::solution::{SolveResult, SolveStatus};
use crate::topo_model::{
    build_model, solve_topology, Mode, ModelError, ModelOptions, TopologyOptions,
};

/// Exit codes of [`run`].
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            json: true,
            csv: true,
        }
    }
}

impl std::str::FromStr for Formats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut f = Formats {
            json: false,
            csv: false,
        };
        for part in s.split(',').map(str::trim) {
            match part {
                "json" => f.json = true,
                "csv" => f.csv = true,
                _ => return Err(format!("unknown format '{part}' (expected json or csv)")),
            }
        }
        Ok(f)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// File path or bundled case name.
    pub case: String,
    pub modes: Vec<Mode>,
    pub budgets: Vec<usize>,
    pub dtheta_max: f64,
    pub gap: f64,
    /// Per solve.
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub branching: Branching,
    pub forbid_islanding: bool,
    pub verify_ac: bool,
    pub export_lp: Option<PathBuf>,
    pub out: PathBuf,
    pub formats: Formats,
    pub log_nodes: bool,
    pub linearize_cost: CostLinearization,
    /// Record wall times; off makes every output byte-reproducible.
    pub timings: bool,
    /// Offer each solve the best plan of its weaker neighbours (previous
    /// budget, weaker mode) as a starting incumbent.
    pub chain_starts: bool,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: String::new(),
            modes: vec![Mode::Breaker],
            budgets: (0..=5).collect(),
            dtheta_max: 0.6,
            gap: 1e-6,
            time_limit: Some(Duration::from_secs(300)),
            node_limit: None,
            branching: Branching::default(),
            forbid_islanding: false,
            verify_ac: false,
            export_lp: None,
            out: PathBuf::from("out"),
            formats: Formats::default(),
            log_nodes: false,
            linearize_cost: CostLinearization::Reject,
            timings: true,
            chain_starts: true,
            threads: 1,
        }
    }
}

/// Parses `N` or an inclusive range `A..B`.
pub fn parse_budgets(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad budget '{t}'"))
    };
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty budget range {s}"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

/// Parses a comma-separated mode list.
pub fn parse_modes(s: &str) -> Result<Vec<Mode>, String> {
    s.split(',').map(|m| m.trim().parse()).collect()
}

/// Sweep parallelism from `GRIDSPLIT_THREADS`, defaulting to one.
pub fn threads_from_env() -> usize {
    std::env::var("GRIDSPLIT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("invalid case: {0}")]
    Case(#[from] CaseError),
    #[error("{mode} s={s}: {source}")]
    Model {
        mode: Mode,
        s: usize,
        source: ModelError,
    },
    #[error("empty budget sweep")]
    EmptySweep,
    #[error("no mode requested")]
    NoModes,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One (mode, budget) solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mode: Mode,
    pub s: usize,
    pub result: SolveResult,
    /// Decisions as labels with external bus ids and 1-based line numbers.
    pub plan: Vec<String>,
    /// Islanding plans excluded by no-good cuts.
    pub cuts: usize,
    pub num_vars: usize,
    pub num_constraints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<FeasibilityReport>,
}

/// Contents of `results.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: String,
    /// SHA-256 of the case data and the cost treatment.
    pub case_hash: String,
    pub base_mva: f64,
    pub dtheta_max: f64,
    pub gap: f64,
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<usize>,
    pub forbid_islanding: bool,
    pub cells: Vec<Cell>,
}

impl RunReport {
    pub fn cell(&self, mode: Mode, s: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.mode == mode && c.s == s)
    }

    /// Exit code summarising the statuses.
    pub fn exit_code(&self) -> i32 {
        let any = |f: &dyn Fn(SolveStatus) -> bool| self.cells.iter().any(|c| f(c.result.status));
        if any(&|s| matches!(s, SolveStatus::Infeasible | SolveStatus::Unbounded)) {
            EXIT_INFEASIBLE
        } else if any(&|s| matches!(s, SolveStatus::Feasible | SolveStatus::BudgetExhausted)) {
            EXIT_LIMIT
        } else {
            EXIT_OK
        }
    }

    /// `costs.csv`: one row per cell.
    pub fn costs_csv(&self, timings: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "s",
            "mode",
            "status",
            "objective",
            "bound",
            "gap",
            "wall_time_s",
            "nodes",
        ])
        .expect("in-memory write");
        for c in &self.cells {
            let r = &c.result;
            w.write_record([
                c.s.to_string(),
                c.mode.to_string(),
                status_label(r.status).to_string(),
                opt(r.objective),
                opt(r.bound),
                opt(r.gap),
                if timings {
                    format!("{:.3}", r.wall_time_s)
                } else {
                    String::new()
                },
                r.nodes.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// `decisions.csv`: the plan of each cell and its saving against line
    /// switching at the same budget.
    pub fn decisions_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["s", "mode", "decisions", "reduction_vs_line_pct"])
            .expect("in-memory write");
        for c in &self.cells {
            let reduction = match (c.mode, c.result.objective, self.cell(Mode::LineOnly, c.s)) {
                (Mode::NoSwitch, ..) => None,
                (_, Some(obj), Some(line)) => line.result.objective.map(|l| saving_pct(l, obj)),
                _ => None,
            };
            w.write_record([
                c.s.to_string(),
                c.mode.to_string(),
                c.plan.join("; "),
                reduction.map_or(String::new(), |v| format!("{v:.4}")),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::BudgetExhausted => "budget_exhausted",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Saving of `new` relative to `base`, in percent.
/// Differences below `1e-9` of the base count as no saving.
pub fn saving_pct(base: f64, new: f64) -> f64 {
    let scale = base.abs().max(1e-12);
    if (base - new).abs() <= 1e-9 * scale {
        return 0.0;
    }
    100.0 * (base - new) / scale
}

/// Hex SHA-256 identifying a case together with how its costs were read.
pub fn case_hash(raw: &RawCase, linearize: CostLinearization) -> String {
    let mut h = Sha256::new();
    h.update(to_native(raw).as_bytes());
    h.update(format!("{linearize:?}").as_bytes());
    h.finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Sweep cells in solve order: modes from weakest to strongest, budgets
/// ascending. The unswitched network does not depend on `s`, so it
/// it runs once at `s = 0`.
fn plan_cells(modes: &[Mode], budgets: &[usize]) -> Vec<(Mode, usize)> {
    let mut cells = Vec::new();
    for mode in Mode::ALL {
        if !modes.contains(&mode) {
            continue;
        }
        if mode == Mode::NoSwitch {
            cells.push((mode, 0));
        } else {
            let mut b = budgets.to_vec();
            b.sort_unstable();
            b.dedup();
            cells.extend(b.into_iter().map(|s| (mode, s)));
        }
    }
    cells
}

struct Solved {
    cell: Cell,
    decisions: Vec<TopologyDecision>,
    node_log: Vec<gridsplit_milp::NodeEvent>,
}

/// Best plan among already-solved cells that is feasible for `(mode, s)`:
/// any weaker-or-equal mode at a budget of at most `s`.
fn chain_start(
    done: &[Option<Solved>],
    cells: &[(Mode, usize)],
    mode: Mode,
    s: usize,
) -> Option<Vec<TopologyDecision>> {
    let mut best: Option<(f64, &Solved)> = None;
    for (k, slot) in done.iter().enumerate() {
        let Some(solved) = slot else { continue };
        let (m, b) = cells[k];
        if m > mode || b > s || (m == mode && b == s) {
            continue;
        }
        let Some(obj) = solved.cell.result.objective else {
            continue;
        };
        if best.is_none_or(|(o, _)| obj < o) {
            best = Some((obj, solved));
        }
    }
    best.map(|(_, s)| s.decisions.clone())
}

fn solve_cell(
    net: &Network,
    ac: Option<&AcNetwork>,
    config: &RunConfig,
    mode: Mode,
    s: usize,
    start: Option<Vec<TopologyDecision>>,
) -> Result<Solved, RunError> {
    let opts = TopologyOptions {
        model: ModelOptions {
            dtheta_max: config.dtheta_max,
            ..ModelOptions::default()
        },
        rel_gap: config.gap,
        time_limit: config.time_limit,
        node_limit: config.node_limit,
        forbid_islanding: config.forbid_islanding,
        log_nodes: config.log_nodes,
        start,
        branching: config.branching,
        ..TopologyOptions::default()
    };
    let out = solve_topology(net, s, mode, &opts).map_err(|source| RunError::Model {
        mode,
        s,
        source,
    })?;
    let mut result = out.result;
    if !config.timings {
        result.wall_time_s = 0.0;
    }
    let ac_report = match ac {
        Some(ac) if result.has_solution() => {
            let mut ac = ac.clone();
            ac.set_dispatch(&result.dispatch);
            let rep = verify_decisions(&ac, net, &result.decisions, &NrOptions::default())
                .expect("decoded decisions are valid for the network");
            Some(rep)
        }
        _ => None,
    };
    let decisions = result.decisions.clone();
    Ok(Solved {
        cell: Cell {
            mode,
            s,
            plan: decisions.iter().map(|d| d.describe(net)).collect(),
            cuts: out.cuts.len(),
            num_vars: out.num_vars,
            num_constraints: out.num_constraints,
            ac: ac_report,
            result,
        },
        decisions,
        node_log: out.node_log,
    })
}

/// Solves every requested cell and writes the outputs under `config.out`.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    if config.budgets.is_empty() {
        return Err(RunError::EmptySweep);
    }
    if config.modes.is_empty() {
        return Err(RunError::NoModes);
    }
    let (raw, _) = load(&config.case)?;
    let net = validate(
        &raw,
        &ValidateOptions {
            linearize: config.linearize_cost,
            dtheta_max: config.dtheta_max,
        },
    )?;
    let ac = config.verify_ac.then(|| AcNetwork::from_case(&raw, &net));
    let cells = plan_cells(&config.modes, &config.budgets);

    if let Some(dir) = &config.export_lp {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for &(mode, s) in &cells {
            let model = build_model(
                &net,
                s,
                mode,
                &ModelOptions {
                    dtheta_max: config.dtheta_max,
                    ..ModelOptions::default()
                },
            )
            .map_err(|source| RunError::Model { mode, s, source })?;
            let path = dir.join(format!("{mode}_s{s}.lp"));
            fs::write(&path, export_lp(&model.problem)).map_err(io_err(&path))?;
        }
    }

    let solved = solve_all(&net, ac.as_ref(), config, &cells)?;

    let report = RunReport {
        case: case_name(&config.case),
        case_hash: case_hash(&raw, config.linearize_cost),
        base_mva: raw.base_mva,
        dtheta_max: config.dtheta_max,
        gap: config.gap,
        time_limit_s: config.time_limit.map(|t| t.as_secs_f64()),
        node_limit: config.node_limit,
        forbid_islanding: config.forbid_islanding,
        cells: solved.iter().map(|s| s.cell.clone()).collect(),
    };
    write_outputs(config, &report, &solved)?;
    Ok(report)
}

fn case_name(spec: &str) -> String {
    Path::new(spec)
        .file_stem()
        .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned())
}

/// Solves cells in waves: a cell waits for its weaker-mode and
/// smaller-budget neighbours when starts are chained.
fn solve_all(
    net: &Network,
    ac: Option<&AcNetwork>,
    config: &RunConfig,
    cells: &[(Mode, usize)],
) -> Result<Vec<Solved>, RunError> {
    let mut done: Vec<Option<Solved>> = cells.iter().map(|_| None).collect();
    // Wave of a cell: its position along the chain of prerequisites.
    let wave = |k: usize| -> usize {
        if !config.chain_starts {
            return 0;
        }
        let (mode, s) = cells[k];
        let mode_rank = Mode::ALL.iter().position(|&m| m == mode).unwrap();
        let s_rank = cells.iter().filter(|&&(m, b)| m == mode && b < s).count();
        mode_rank + s_rank
    };
    let waves = (0..cells.len()).map(wave).max().unwrap_or(0);
    let threads = config.threads.max(1);
    for w in 0..=waves {
        let todo: Vec<usize> = (0..cells.len()).filter(|&k| wave(k) == w).collect();
        for chunk in todo.chunks(threads) {
            let jobs: Vec<(usize, Option<Vec<TopologyDecision>>)> = chunk
                .iter()
                .map(|&k| {
                    let (mode, s) = cells[k];
                    let start = if config.chain_starts {
                        chain_start(&done, cells, mode, s)
                    } else {
                        None
                    };
                    (k, start)
                })
                .collect();
            let results: Vec<(usize, Result<Solved, RunError>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = jobs
                    .into_iter()
                    .map(|(k, start)| {
                        let (mode, s) = cells[k];
                        scope.spawn(move || (k, solve_cell(net, ac, config, mode, s, start)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("solver thread panicked"))
                    .collect()
            });
            for (k, r) in results {
                let solved = r?;
                log_cell(&solved.cell);
                done[k] = Some(solved);
            }
        }
    }
    Ok(done
        .into_iter()
        .map(|s| s.expect("every wave solved"))
        .collect())
}

fn log_cell(c: &Cell) {
    let r = &c.result;
    let obj = r.objective.map_or("-".to_string(), |o| format!("{o:.2}"));
    let mut line = format!("{:>7} s={} {:?} cost {obj}", c.mode, c.s, r.status);
    if !c.plan.is_empty() {
        let _ = write!(line, " [{}]", c.plan.join("; "));
    }
    if let Some(ac) = &c.ac {
        let _ = write!(line, " ac {:?}", ac.status);
        if ac.status == AcStatus::ConvergedWithViolations {
            let _ = write!(line, " ({} violations)", ac.violations.len());
        }
    }
    log::info!("{line}");
}

fn write_outputs(
    config: &RunConfig,
    report: &RunReport,
    solved: &[Solved],
) -> Result<(), RunError> {
    let out = &config.out;
    fs::create_dir_all(out).map_err(io_err(out))?;
    if config.formats.json {
        let path = out.join("results.json");
        let mut text = serde_json::to_string_pretty(report).map_err(|source| RunError::Json {
            path: path.display().to_string(),
            source,
        })?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    if config.formats.csv {
        let path = out.join("costs.csv");
        fs::write(&path, report.costs_csv(config.timings)).map_err(io_err(&path))?;
        let path = out.join("decisions.csv");
        fs::write(&path, report.decisions_csv()).map_err(io_err(&path))?;
    }
    if config.log_nodes {
        for s in solved {
            let path = out.join(format!("nodes_{}_s{}.jsonl", s.cell.mode, s.cell.s));
            let mut text = String::new();
            for e in &s.node_log {
                text.push_str(&serde_json::to_string(e).expect("node events serialise"));
                text.push('\n');
            }
            fs::write(&path, text).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

// ----------------------------------------------------------------- compare

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_path_to_error::Error<serde_json::Error>,
    },
    #[error("results are for different cases ({a} vs {b})")]
    MismatchedCases { a: String, b: String },
}

/// Reads a `results.json`.
pub fn read_report(path: &Path) -> Result<RunReport, CompareError> {
    let text = fs::read_to_string(path).map_err(|source| CompareError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|source| CompareError::Json {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub s: usize,
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub objective_a: f64,
    pub objective_b: f64,
    /// Saving of B against A at the same budget.
    pub saving_pct: f64,
    /// Saving of B against A's no-switching cost, when A has one.
    pub saving_vs_benchmark_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub case: String,
    pub rows: Vec<CompareRow>,
}

/// Pairs cells of B with cells of A at the same budget: same mode when both
/// files share modes, otherwise the single mode of each file. A cell without
/// a budget (no switching) pairs with every budget.
pub fn compare_reports(a: &RunReport, b: &RunReport) -> Result<Comparison, CompareError> {
    if a.case_hash != b.case_hash {
        return Err(CompareError::MismatchedCases {
            a: format!("{} {}", a.case, &a.case_hash[..12.min(a.case_hash.len())]),
            b: format!("{} {}", b.case, &b.case_hash[..12.min(b.case_hash.len())]),
        });
    }
    let modes = |r: &RunReport| {
        let mut m: Vec<Mode> = r.cells.iter().map(|c| c.mode).collect();
        m.sort();
        m.dedup();
        m
    };
    let (ma, mb) = (modes(a), modes(b));
    let shared: Vec<(Mode, Mode)> = ma
        .iter()
        .filter(|m| mb.contains(m))
        .map(|&m| (m, m))
        .collect();
    let pairs = if !shared.is_empty() {
        shared
    } else if ma.len() == 1 && mb.len() == 1 {
        vec![(ma[0], mb[0])]
    } else {
        Vec::new()
    };
    let benchmark = a.cell(Mode::NoSwitch, 0).and_then(|c| c.result.objective);
    let mut rows = Vec::new();
    for (mode_a, mode_b) in pairs {
        let series_b: BTreeMap<usize, f64> = b
            .cells
            .iter()
            .filter(|c| c.mode == mode_b)
            .filter_map(|c| c.result.objective.map(|o| (c.s, o)))
            .collect();
        for (&s, &objective_b) in &series_b {
            let partner = if mode_a == Mode::NoSwitch {
                a.cell(mode_a, 0)
            } else {
                a.cell(mode_a, s)
            };
            let Some(objective_a) = partner.and_then(|c| c.result.objective) else {
                continue;
            };
            rows.push(CompareRow {
                s,
                mode_a,
                mode_b,
                objective_a,
                objective_b,
                saving_pct: saving_pct(objective_a, objective_b),
                saving_vs_benchmark_pct: benchmark.map(|base| saving_pct(base, objective_b)),
            });
        }
    }
    Ok(Comparison {
        case: a.case.clone(),
        rows,
    })
}

/// Reads two `results.json` files and compares them.
pub fn compare(a: &Path, b: &Path) -> Result<Comparison, CompareError> {
    compare_reports(&read_report(a)?, &read_report(b)?)
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case {}", self.case)?;
        writeln!(
            f,
            "{:>3}  {:>8}  {:>8}  {:>14}  {:>14}  {:>9}  {:>12}",
            "s", "A", "B", "cost A", "cost B", "saving %", "vs base %"
        )?;
        for r in &self.rows {
            let base = r
                .saving_vs_benchmark_pct
                .map_or("-".to_string(), |v| format!("{v:.3}"));
            writeln!(
                f,
                "{:>3}  {:>8}  {:>8}  {:>14.4}  {:>14.4}  {:>9.3}  {:>12}",
                r.s,
                r.mode_a.to_string(),
                r.mode_b.to_string(),
                r.objective_a,
                r.objective_b,
                r.saving_pct,
                base
            )?;
        }
        if self.rows.is_empty() {
            writeln!(f, "(no comparable cells)")?;
        }
        Ok(())
    }
}
