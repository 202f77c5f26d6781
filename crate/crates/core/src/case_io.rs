//! Case files: a MATPOWER `.m` subset and the native JSON format, both read
//! into [`RawCase`], and validation into a per-unit [`Network`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}: malformed matrix: {detail}")]
    MalformedMatrix { line: usize, detail: String },
    #[error("missing section mpc.{0}")]
    MissingSection(String),
    #[error("line {line}: cannot parse number {token:?}")]
    NumberParse { line: usize, token: String },
    #[error("schema violation at {path}: {detail}")]
    SchemaViolation { path: String, detail: String },
    #[error("{table} row {row} refers to unknown bus {bus}")]
    DanglingReference {
        table: &'static str,
        row: usize,
        bus: u32,
    },
    #[error("branch row {row} has non-positive reactance {x}")]
    NonPositiveReactance { row: usize, x: f64 },
    #[error("no in-service generator")]
    NoGeneration,
    #[error("generator row {row}: {detail}")]
    CostModelUnsupported { row: usize, detail: String },
    #[error("bus id {0} appears twice")]
    DuplicateBus(u32),
    #[error("base MVA must be positive, got {0}")]
    InvalidBase(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRow {
    pub id: u32,
    #[serde(rename = "type")]
    pub bus_type: u8,
    /// MW
    pub pd: f64,
    /// MVAr
    pub qd: f64,
    /// Shunt conductance, MW at 1 p.u. voltage.
    #[serde(default)]
    pub gs: f64,
    /// Shunt susceptance, MVAr at 1 p.u. voltage.
    #[serde(default)]
    pub bs: f64,
    pub vm: f64,
    /// Degrees.
    pub va: f64,
    #[serde(default)]
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRow {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// MVA; 0 means unlimited.
    pub rate_a: f64,
    /// Off-nominal turns ratio; 0 means 1.
    #[serde(default)]
    pub tap: f64,
    /// Phase shift, degrees.
    #[serde(default)]
    pub shift: f64,
    pub status: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRow {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    /// Voltage setpoint, p.u.
    #[serde(default = "one")]
    pub vg: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub status: u8,
}

fn one() -> f64 {
    1.0
}

/// MATPOWER cost row: model 1 is piecewise linear with `(MW, $/h)` points,
/// model 2 a polynomial with coefficients from the highest degree down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRow {
    pub model: u8,
    #[serde(default)]
    pub startup: f64,
    #[serde(default)]
    pub shutdown: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCase {
    pub base_mva: f64,
    pub buses: Vec<BusRow>,
    pub branches: Vec<BranchRow>,
    pub generators: Vec<GenRow>,
    /// One row per generator, or empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gencost: Vec<CostRow>,
}

// ---------------------------------------------------------------- MATPOWER

struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (k, c) in line.char_indices() {
        match c {
            '\'' => in_str = !in_str,
            '%' if !in_str => return &line[..k],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    let lower = tok.to_ascii_lowercase();
    let v = match lower.as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => lower.parse::<f64>(),
    };
    v.map_err(|_| CaseError::NumberParse {
        line,
        token: tok.to_string(),
    })
}

/// Parses the body of a `[ ... ]` literal. `body` holds `(line number, text)`
/// with the opening bracket already removed from the first entry.
fn parse_matrix(start: usize, body: &[(usize, String)]) -> Result<Matrix, CaseError> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_line = start;
    let flush = |rows: &mut Vec<(usize, Vec<f64>)>, current: &mut Vec<f64>, line: usize| {
        if !current.is_empty() {
            rows.push((line, std::mem::take(current)));
        }
    };
    for (line, text) in body {
        for (k, chunk) in text.split(';').enumerate() {
            if k > 0 {
                flush(&mut rows, &mut current, current_line);
            }
            for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() || tok == "..." {
                    continue;
                }
                if current.is_empty() {
                    current_line = *line;
                }
                current.push(parse_number(tok, *line)?);
            }
        }
        // A newline ends a row unless continued with `...`.
        if !text.trim_end().ends_with("...") {
            flush(&mut rows, &mut current, current_line);
        }
    }
    flush(&mut rows, &mut current, current_line);
    Ok(Matrix { rows })
}

fn check_width(m: &Matrix, name: &str, min: usize) -> Result<(), CaseError> {
    for (line, row) in &m.rows {
        if row.len() < min {
            return Err(CaseError::MalformedMatrix {
                line: *line,
                detail: format!(
                    "mpc.{name} row has {} columns, expected at least {min}",
                    row.len()
                ),
            });
        }
    }
    if let Some((line, _)) = m.rows.iter().find(|(_, r)| r.len() != m.rows[0].1.len()) {
        if name != "gencost" {
            return Err(CaseError::MalformedMatrix {
                line: *line,
                detail: format!("ragged mpc.{name} rows"),
            });
        }
    }
    Ok(())
}

/// Parses the `mpc.baseMVA`, `mpc.bus`, `mpc.branch`, `mpc.gen` and
/// `mpc.gencost` assignments of a MATPOWER case file.
pub fn parse_matpower(text: &str) -> Result<RawCase, CaseError> {
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, strip_comment(l).to_string()))
        .collect();
    let mut base_mva = None;
    let mut tables: HashMap<String, Matrix> = HashMap::new();
    let mut k = 0;
    while k < lines.len() {
        let (line_no, text) = &lines[k];
        let t = text.trim();
        k += 1;
        let Some(rest) = t.strip_prefix("mpc.") else {
            continue;
        };
        let Some((name, value)) = rest.split_once('=') else {
            continue;
        };
        let name = name.trim().to_string();
        let value = value.trim();
        if let Some(open) = value.strip_prefix('[') {
            let mut body = Vec::new();
            let mut first = open.to_string();
            let mut closed = false;
            let mut cur_line = *line_no;
            loop {
                if let Some(end) = first.find(']') {
                    body.push((cur_line, first[..end].to_string()));
                    closed = true;
                    break;
                }
                body.push((cur_line, first));
                if k >= lines.len() {
                    break;
                }
                cur_line = lines[k].0;
                first = lines[k].1.clone();
                k += 1;
            }
            if !closed {
                return Err(CaseError::MalformedMatrix {
                    line: *line_no,
                    detail: format!("unterminated mpc.{name} matrix"),
                });
            }
            if matches!(name.as_str(), "bus" | "branch" | "gen" | "gencost") {
                tables.insert(name, parse_matrix(*line_no, &body)?);
            } else {
                log::warn!("ignoring mpc.{name}");
            }
        } else if value.starts_with('{') {
            let mut depth = value.matches('{').count() as i64 - value.matches('}').count() as i64;
            while depth > 0 && k < lines.len() {
                depth +=
                    lines[k].1.matches('{').count() as i64 - lines[k].1.matches('}').count() as i64;
                k += 1;
            }
            log::warn!("ignoring mpc.{name}");
        } else if name == "baseMVA" {
            let v = value.trim_end_matches(';').trim();
            base_mva = Some(parse_number(v, *line_no)?);
        } else if name != "version" {
            log::warn!("ignoring mpc.{name}");
        }
    }

    let base_mva = base_mva.ok_or_else(|| CaseError::MissingSection("baseMVA".into()))?;
    let take = |tables: &mut HashMap<String, Matrix>,
                name: &str,
                min: usize|
     -> Result<Matrix, CaseError> {
        let m = tables
            .remove(name)
            .ok_or_else(|| CaseError::MissingSection(name.into()))?;
        check_width(&m, name, min)?;
        Ok(m)
    };
    let bus = take(&mut tables, "bus", 13)?;
    let branch = take(&mut tables, "branch", 11)?;
    let gen = take(&mut tables, "gen", 10)?;
    let gencost = match tables.remove("gencost") {
        Some(m) => {
            check_width(&m, "gencost", 4)?;
            Some(m)
        }
        None => None,
    };

    let id = |v: f64, line: usize| -> Result<u32, CaseError> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(CaseError::NumberParse {
                line,
                token: v.to_string(),
            })
        }
    };
    let flag = |v: f64| u8::from(v > 0.0);

    let mut buses = Vec::new();
    for (line, r) in &bus.rows {
        buses.push(BusRow {
            id: id(r[0], *line)?,
            bus_type: r[1] as u8,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            vmax: r[11],
            vmin: r[12],
        });
    }
    let mut branches = Vec::new();
    for (line, r) in &branch.rows {
        branches.push(BranchRow {
            from: id(r[0], *line)?,
            to: id(r[1], *line)?,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5],
            tap: r[8],
            shift: r[9],
            status: flag(r[10]),
        });
    }
    let mut generators = Vec::new();
    for (line, r) in &gen.rows {
        generators.push(GenRow {
            bus: id(r[0], *line)?,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            status: flag(r[7]),
            pmax: r[8],
            pmin: r[9],
        });
    }
    let mut costs = Vec::new();
    if let Some(m) = gencost {
        for (line, r) in &m.rows {
            let n = r[3] as usize;
            let width = if r[0] as u8 == 1 { 2 * n } else { n };
            if r.len() < 4 + width {
                return Err(CaseError::MalformedMatrix {
                    line: *line,
                    detail: format!(
                        "gencost row declares {n} cost terms but has {} columns",
                        r.len()
                    ),
                });
            }
            costs.push(CostRow {
                model: r[0] as u8,
                startup: r[1],
                shutdown: r[2],
                coeffs: r[4..4 + width].to_vec(),
            });
        }
        if costs.len() > generators.len() {
            log::warn!(
                "ignoring {} reactive cost rows",
                costs.len() - generators.len()
            );
            costs.truncate(generators.len());
        }
    }
    Ok(RawCase {
        base_mva,
        buses,
        branches,
        generators,
        gencost: costs,
    })
}

/// Renders a case as a MATPOWER file that [`parse_matpower`] reads back to
/// the same [`RawCase`]. Columns absent from `RawCase` are written as zeros.
pub fn to_matpower(raw: &RawCase, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {name}");
    s.push_str("mpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {};", raw.base_mva);
    s.push_str("\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n");
    for b in &raw.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t{}\t{};",
            b.id, b.bus_type, b.pd, b.qd, b.gs, b.bs, b.vm, b.va, b.base_kv, b.vmax, b.vmin
        );
    }
    s.push_str("];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n");
    for g in &raw.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, raw.base_mva, g.status, g.pmax, g.pmin
        );
    }
    s.push_str("];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n");
    for br in &raw.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t-360\t360;",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b,
            br.rate_a,
            br.rate_a,
            br.rate_a,
            br.tap,
            br.shift,
            br.status
        );
    }
    s.push_str("];\n");
    if !raw.gencost.is_empty() {
        s.push_str("\n%% model startup shutdown n coefficients\nmpc.gencost = [\n");
        for c in &raw.gencost {
            let n = if c.model == 1 {
                c.coeffs.len() / 2
            } else {
                c.coeffs.len()
            };
            let _ = write!(s, "\t{}\t{}\t{}\t{}", c.model, c.startup, c.shutdown, n);
            for v in &c.coeffs {
                let _ = write!(s, "\t{v}");
            }
            s.push_str(";\n");
        }
        s.push_str("];\n");
    }
    s
}

// ------------------------------------------------------------------ native

/// Reads the native JSON format.
pub fn parse_native(text: &str) -> Result<RawCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = String::new();
        for seg in e.path().iter() {
            match seg {
                serde_path_to_error::Segment::Seq { index } => {
                    let _ = write!(path, "/{index}");
                }
                serde_path_to_error::Segment::Map { key } => {
                    let _ = write!(path, "/{key}");
                }
                serde_path_to_error::Segment::Enum { variant } => {
                    let _ = write!(path, "/{variant}");
                }
                serde_path_to_error::Segment::Unknown => path.push_str("/?"),
            }
        }
        let detail = e.inner().to_string();
        if let Some(field) = detail
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
        {
            let _ = write!(path, "/{field}");
        }
        if path.is_empty() {
            path.push('/');
        }
        CaseError::SchemaViolation { path, detail }
    })
}

/// Writes the native JSON format (pretty-printed, trailing newline).
pub fn to_native(raw: &RawCase) -> String {
    let mut s = serde_json::to_string_pretty(raw).expect("RawCase serialises");
    s.push('\n');
    s
}

// ----------------------------------------------------------------- network

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External id; split buses get fresh ids above the case maximum.
    pub id: u32,
    /// Real load, p.u.
    pub load: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Bus this one was split from.
    pub split_from: Option<usize>,
}

/// One dispatchable record per bus; parallel units are merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    /// $/p.u.-h
    pub cost: f64,
    /// Rows of the case's generator table merged into this record.
    pub units: Vec<usize>,
}

impl Generator {
    /// False for condensers and other records that cannot inject real power.
    pub fn dispatchable(&self) -> bool {
        self.pmax != 0.0 || self.pmin != 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series susceptance 1/x, p.u.
    pub b: f64,
    /// p.u.
    pub fmax: f64,
    /// Row of the case's branch table.
    pub branch: usize,
}

impl Line {
    pub fn other_end(&self, bus: usize) -> Option<usize> {
        if bus == self.from {
            Some(self.to)
        } else if bus == self.to {
            Some(self.from)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub gens: Vec<Generator>,
    pub reference: usize,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_line(&self) -> usize {
        self.lines.len()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load).collect()
    }

    /// Generator record at `bus`, if any.
    pub fn gen_at(&self, bus: usize) -> Option<usize> {
        self.gens.iter().position(|g| g.bus == bus)
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.gens.iter().map(|g| g.pmax).sum()
    }

    /// Net injection `g - d` per bus for a dispatch given per generator record.
    pub fn injections(&self, dispatch: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.buses.iter().map(|b| -b.load).collect();
        for (g, &v) in self.gens.iter().zip(dispatch) {
            p[g.bus] += v;
        }
        p
    }

    /// Lines incident to `bus`.
    pub fn lines_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.from == bus || l.to == bus)
            .map(|(k, _)| k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CostLinearization {
    /// Accept only costs of degree at most one.
    Reject,
    /// Replace the cost by its slope at `(Pmin + Pmax) / 2`.
    MarginalAtMidpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub linearize: CostLinearization,
    /// Angle spread used to cap unlimited lines at `b * dtheta_max`.
    pub dtheta_max: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            linearize: CostLinearization::Reject,
            dtheta_max: 0.6,
        }
    }
}

/// Slope in $/MWh of a cost row at `mid`, or an explanation of why it cannot be used.
fn marginal_cost(c: &CostRow, mid: f64, linearize: CostLinearization) -> Result<f64, String> {
    match c.model {
        2 => {
            // Drop leading zero coefficients to find the true degree.
            let first = c
                .coeffs
                .iter()
                .position(|&v| v != 0.0)
                .unwrap_or(c.coeffs.len());
            let coeffs = &c.coeffs[first..];
            let degree = coeffs.len().saturating_sub(1);
            if degree <= 1 {
                return Ok(if degree == 1 { coeffs[0] } else { 0.0 });
            }
            if linearize == CostLinearization::Reject {
                return Err(format!(
                    "polynomial cost of degree {degree} needs linearization"
                ));
            }
            Ok(coeffs
                .iter()
                .enumerate()
                .take(degree)
                .map(|(k, &a)| {
                    let power = (degree - k) as i32;
                    a * power as f64 * mid.powi(power - 1)
                })
                .sum())
        }
        1 => {
            let pts: Vec<(f64, f64)> = c.coeffs.chunks(2).map(|p| (p[0], p[1])).collect();
            if pts.len() < 2 {
                return Err("piecewise cost needs two points".into());
            }
            if pts.len() > 2 && linearize == CostLinearization::Reject {
                return Err(format!(
                    "piecewise cost with {} segments needs linearization",
                    pts.len() - 1
                ));
            }
            let seg = pts
                .windows(2)
                .find(|w| mid <= w[1].0)
                .unwrap_or(&pts[pts.len() - 2..]);
            let dx = seg[1].0 - seg[0].0;
            if dx <= 0.0 {
                return Err("piecewise cost points must increase in MW".into());
            }
            Ok((seg[1].1 - seg[0].1) / dx)
        }
        m => Err(format!("unknown cost model {m}")),
    }
}

/// Converts a raw case into a per-unit network: drops out-of-service rows,
/// densifies bus ids, merges parallel generators and picks the reference bus.
pub fn validate(raw: &RawCase, opts: &ValidateOptions) -> Result<Network, CaseError> {
    if !(raw.base_mva > 0.0) {
        return Err(CaseError::InvalidBase(raw.base_mva));
    }
    let base = raw.base_mva;
    let mut index = HashMap::new();
    for (k, b) in raw.buses.iter().enumerate() {
        if index.insert(b.id, k).is_some() {
            return Err(CaseError::DuplicateBus(b.id));
        }
    }
    for (row, br) in raw.branches.iter().enumerate() {
        for bus in [br.from, br.to] {
            if !index.contains_key(&bus) {
                return Err(CaseError::DanglingReference {
                    table: "branch",
                    row,
                    bus,
                });
            }
        }
    }
    for (row, g) in raw.generators.iter().enumerate() {
        if !index.contains_key(&g.bus) {
            return Err(CaseError::DanglingReference {
                table: "gen",
                row,
                bus: g.bus,
            });
        }
    }

    let buses: Vec<Bus> = raw
        .buses
        .iter()
        .map(|b| Bus {
            id: b.id,
            load: b.pd / base,
            theta_min: -PI,
            theta_max: PI,
            split_from: None,
        })
        .collect();

    let mut lines = Vec::new();
    for (row, br) in raw.branches.iter().enumerate() {
        if br.status == 0 {
            continue;
        }
        if !(br.x > 0.0) {
            return Err(CaseError::NonPositiveReactance { row, x: br.x });
        }
        let b = 1.0 / br.x;
        let fmax = if br.rate_a > 0.0 {
            br.rate_a / base
        } else {
            b * opts.dtheta_max
        };
        lines.push(Line {
            from: index[&br.from],
            to: index[&br.to],
            b,
            fmax,
            branch: row,
        });
    }

    let mut gens: Vec<Generator> = Vec::new();
    if raw.gencost.is_empty() && !raw.generators.is_empty() {
        log::warn!("case has no gencost table; all generation is free");
    }
    for (row, g) in raw.generators.iter().enumerate() {
        if g.status == 0 {
            continue;
        }
        let cost = match raw.gencost.get(row) {
            Some(c) => {
                let mid = (g.pmin + g.pmax) / 2.0;
                marginal_cost(c, mid, opts.linearize)
                    .map_err(|detail| CaseError::CostModelUnsupported { row, detail })?
                    * base
            }
            None => 0.0,
        };
        let bus = index[&g.bus];
        match gens.iter_mut().find(|r| r.bus == bus) {
            Some(rec) => {
                log::warn!(
                    "merging generator row {row} into the record at bus {}; cost becomes the minimum",
                    g.bus
                );
                rec.pmin += g.pmin / base;
                rec.pmax += g.pmax / base;
                rec.cost = rec.cost.min(cost);
                rec.units.push(row);
            }
            None => gens.push(Generator {
                bus,
                pmin: g.pmin / base,
                pmax: g.pmax / base,
                cost,
                units: vec![row],
            }),
        }
    }
    if gens.is_empty() {
        return Err(CaseError::NoGeneration);
    }

    let reference = match raw.buses.iter().position(|b| b.bus_type == 3) {
        Some(k) => k,
        None => {
            let mut best = &gens[0];
            for g in &gens {
                if g.pmax > best.pmax {
                    best = g;
                }
            }
            best.bus
        }
    };

    Ok(Network {
        base_mva: base,
        buses,
        lines,
        gens,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 100 -100 1 100 1 200 0 ];
mpc.branch = [
  1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;  % the only line
];
mpc.gencost = [ 2 0 0 2 10 0 ];
";

    #[test]
    fn minimal_two_bus() {
        let raw = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(
            (raw.buses.len(), raw.branches.len(), raw.generators.len()),
            (2, 1, 1)
        );
        assert_eq!(raw.gencost[0].coeffs, vec![10.0, 0.0]);
        let net = validate(&raw, &ValidateOptions::default()).unwrap();
        assert_eq!(net.loads(), vec![0.0, 0.5]);
        assert_eq!(net.gens[0].cost, 1000.0);
        assert_eq!(net.reference, 0);
        assert!((net.lines[0].fmax - 10.0 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn unterminated_matrix_reports_line() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n";
        assert!(matches!(
            parse_matpower(text),
            Err(CaseError::MalformedMatrix { line: 2, .. })
        ));
    }

    #[test]
    fn bad_token_reports_line() {
        let text = TWO_BUS.replace("0.01 0.1", "0.01 x0.1");
        assert!(matches!(
            parse_matpower(&text),
            Err(CaseError::NumberParse { line: 9, .. })
        ));
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = TWO_BUS.replace(
            "2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;",
            "2 1 50 10 0 0 1 1 0 230 1 1.1 0.9 7;",
        );
        assert!(matches!(
            parse_matpower(&text),
            Err(CaseError::MalformedMatrix { .. })
        ));
    }

    #[test]
    fn missing_branch_table() {
        let text = TWO_BUS.replace("mpc.branch", "mpc.other");
        assert_eq!(
            parse_matpower(&text),
            Err(CaseError::MissingSection("branch".into()))
        );
    }

    #[test]
    fn dangling_branch() {
        let mut raw = parse_matpower(TWO_BUS).unwrap();
        raw.branches[0].to = 99;
        assert!(matches!(
            validate(&raw, &ValidateOptions::default()),
            Err(CaseError::DanglingReference { bus: 99, .. })
        ));
    }

    #[test]
    fn quadratic_cost_needs_flag() {
        let mut raw = parse_matpower(TWO_BUS).unwrap();
        raw.gencost[0].coeffs = vec![0.01, 20.0, 0.0];
        assert!(matches!(
            validate(&raw, &ValidateOptions::default()),
            Err(CaseError::CostModelUnsupported { .. })
        ));
        let opts = ValidateOptions {
            linearize: CostLinearization::MarginalAtMidpoint,
            ..Default::default()
        };
        let net = validate(&raw, &opts).unwrap();
        // 20 + 2 * 0.01 * 100 MW = 22 $/MWh
        assert!((net.gens[0].cost - 2200.0).abs() < 1e-9);
    }

    #[test]
    fn piecewise_slope() {
        let c = CostRow {
            model: 1,
            startup: 0.0,
            shutdown: 0.0,
            coeffs: vec![0.0, 0.0, 50.0, 500.0, 100.0, 1500.0],
        };
        assert!(marginal_cost(&c, 75.0, CostLinearization::Reject).is_err());
        assert_eq!(
            marginal_cost(&c, 75.0, CostLinearization::MarginalAtMidpoint),
            Ok(20.0)
        );
    }

    #[test]
    fn parallel_units_merge() {
        let mut raw = parse_matpower(TWO_BUS).unwrap();
        let mut g = raw.generators[0].clone();
        g.pmax = 50.0;
        raw.generators.push(g);
        raw.gencost.push(CostRow {
            model: 2,
            startup: 0.0,
            shutdown: 0.0,
            coeffs: vec![7.0, 0.0],
        });
        let net = validate(&raw, &ValidateOptions::default()).unwrap();
        assert_eq!(net.gens.len(), 1);
        assert_eq!(net.gens[0].pmax, 2.5);
        assert_eq!(net.gens[0].cost, 700.0);
        assert_eq!(net.gens[0].units, vec![0, 1]);
    }

    #[test]
    fn native_missing_key_path() {
        let text = r#"{"base_mva": 100, "buses": [], "generators": []}"#;
        match parse_native(text) {
            Err(CaseError::SchemaViolation { path, .. }) => assert_eq!(path, "/branches"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"base_mva": 100, "buses": [{"id": 1}], "branches": [], "generators": []}"#;
        match parse_native(text) {
            Err(CaseError::SchemaViolation { path, .. }) => assert_eq!(path, "/buses/0/type"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn native_round_trip() {
        let raw = parse_matpower(TWO_BUS).unwrap();
        let text = to_native(&raw);
        assert_eq!(parse_native(&text).unwrap(), raw);
        assert_eq!(parse_matpower(&to_matpower(&raw, "two")).unwrap(), raw);
    }
}
