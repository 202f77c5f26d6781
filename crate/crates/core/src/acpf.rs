//! Newton-Raphson AC power flow and AC checks of topology decisions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_io::{Network, RawCase};
use crate::network::{check_decisions, NetworkError, TopologyDecision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBus {
    pub id: u32,
    pub kind: BusKind,
    /// Loads and shunts in p.u. on the system base.
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBranch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Off-nominal ratio; 1 for lines.
    pub tap: f64,
    /// Phase shift, rad.
    pub shift: f64,
    /// MVA rating in p.u.; 0 means unlimited.
    pub rate: f64,
    /// Index of the matching line in the DC network.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcGen {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub vset: f64,
    /// Generator record of the DC network this unit belongs to.
    pub record: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcNetwork {
    pub base_mva: f64,
    pub buses: Vec<AcBus>,
    pub branches: Vec<AcBranch>,
    pub gens: Vec<AcGen>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcError {
    #[error("Newton-Raphson diverged after {iterations} iterations (mismatch {mismatch:e})")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("island containing bus {bus} has no generator to act as slack")]
    NoSource { bus: u32 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl AcNetwork {
    /// AC data for `net`, which must have been validated from `raw`. Bus
    /// and branch order follow `net`; generators use their case set-points.
    pub fn from_case(raw: &RawCase, net: &Network) -> AcNetwork {
        let base = raw.base_mva;
        let mut buses: Vec<AcBus> = raw
            .buses
            .iter()
            .map(|b| AcBus {
                id: b.id,
                kind: if b.bus_type == 3 {
                    BusKind::Slack
                } else {
                    BusKind::Pq
                },
                pd: b.pd / base,
                qd: b.qd / base,
                gs: b.gs / base,
                bs: b.bs / base,
                vmin: b.vmin,
                vmax: b.vmax,
            })
            .collect();
        let branches = net
            .lines
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let br = &raw.branches[l.branch];
                AcBranch {
                    from: l.from,
                    to: l.to,
                    r: br.r,
                    x: br.x,
                    b: br.b,
                    tap: if br.tap == 0.0 { 1.0 } else { br.tap },
                    shift: br.shift.to_radians(),
                    rate: br.rate_a / base,
                    line: k,
                }
            })
            .collect();
        let mut gens = Vec::new();
        for (record, g) in net.gens.iter().enumerate() {
            for &row in &g.units {
                let u = &raw.generators[row];
                gens.push(AcGen {
                    bus: g.bus,
                    pg: u.pg / base,
                    qg: u.qg / base,
                    qmin: u.qmin / base,
                    qmax: u.qmax / base,
                    vset: u.vg,
                    record,
                });
            }
        }
        for (k, b) in raw.buses.iter().enumerate() {
            if b.bus_type == 2 && gens.iter().any(|g| g.bus == k) {
                buses[k].kind = BusKind::Pv;
            }
        }
        AcNetwork {
            base_mva: base,
            buses,
            branches,
            gens,
        }
    }

    /// Sets real outputs from a dispatch given per DC generator record,
    /// shared among a record's units in proportion to their case output
    /// (equally when that is zero).
    pub fn set_dispatch(&mut self, dispatch: &[f64]) {
        for (record, &p) in dispatch.iter().enumerate() {
            let units: Vec<usize> = (0..self.gens.len())
                .filter(|&u| self.gens[u].record == record)
                .collect();
            let total: f64 = units.iter().map(|&u| self.gens[u].pg).sum();
            for &u in &units {
                self.gens[u].pg = if total.abs() > 1e-12 {
                    p * self.gens[u].pg / total
                } else {
                    p / units.len() as f64
                };
            }
        }
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Admittance matrix stored by rows as `(column, value)` with the
    /// diagonal entry first.
    pub fn ybus(&self) -> Vec<Vec<(usize, Complex64)>> {
        let n = self.n_bus();
        let mut rows: Vec<Vec<(usize, Complex64)>> = (0..n)
            .map(|k| vec![(k, Complex64::new(self.buses[k].gs, self.buses[k].bs))])
            .collect();
        let add =
            |rows: &mut Vec<Vec<(usize, Complex64)>>, i: usize, j: usize, v: Complex64| match rows
                [i]
                .iter_mut()
                .find(|(c, _)| *c == j)
            {
                Some(e) => e.1 += v,
                None => rows[i].push((j, v)),
            };
        for br in &self.branches {
            let (yff, yft, ytf, ytt) = branch_admittance(br);
            add(&mut rows, br.from, br.from, yff);
            add(&mut rows, br.from, br.to, yft);
            add(&mut rows, br.to, br.from, ytf);
            add(&mut rows, br.to, br.to, ytt);
        }
        rows
    }

    /// Applies decisions to the AC data. Split buses copy the voltage
    /// limits; reactive load follows real load and a moved generator keeps
    /// its voltage control.
    pub fn apply_decisions(
        &self,
        net: &Network,
        decisions: &[TopologyDecision],
    ) -> Result<AcNetwork, AcError> {
        check_decisions(net, decisions)?;
        let mut out = self.clone();
        let mut next_id = self.buses.iter().map(|b| b.id).max().unwrap_or(0);
        let mut removed = vec![false; self.branches.len()];
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
                    let old = out.buses[bus].clone();
                    let mut nb = AcBus {
                        id: next_id,
                        kind: BusKind::Pq,
                        pd: 0.0,
                        qd: 0.0,
                        gs: 0.0,
                        bs: 0.0,
                        ..old
                    };
                    if scenario.moves_load() {
                        nb.pd = old.pd;
                        nb.qd = old.qd;
                        out.buses[bus].pd = 0.0;
                        out.buses[bus].qd = 0.0;
                    }
                    if scenario.moves_gen() {
                        let record = net.gen_at(bus).expect("checked above");
                        for g in out.gens.iter_mut().filter(|g| g.record == record) {
                            g.bus = new;
                        }
                        nb.kind = old.kind;
                        if old.kind == BusKind::Pv {
                            out.buses[bus].kind = BusKind::Pq;
                        }
                    }
                    out.buses.push(nb);
                    let br = out
                        .branches
                        .iter_mut()
                        .find(|b| b.line == line)
                        .expect("line exists");
                    if br.from == bus {
                        br.from = new;
                    } else {
                        br.to = new;
                    }
                }
            }
        }
        // A slack that lost its generator hands the role to the new bus.
        for k in 0..self.n_bus() {
            if out.buses[k].kind == BusKind::Slack && !out.gens.iter().any(|g| g.bus == k) {
                out.buses[k].kind = BusKind::Pq;
            }
        }
        out.branches.retain(|b| !removed[b.line]);
        Ok(out)
    }
}

/// `(Yff, Yft, Ytf, Ytt)` of the standard pi model with an ideal
/// transformer on the from side.
fn branch_admittance(br: &AcBranch) -> (Complex64, Complex64, Complex64, Complex64) {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let ytt = ys + Complex64::new(0.0, br.b / 2.0);
    let t = Complex64::from_polar(br.tap, br.shift);
    (ytt / (br.tap * br.tap), -ys / t.conj(), -ys / t, ytt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NrOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub enforce_q_limits: bool,
    /// Initial `(vm, va)`; flat start when absent.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for NrOptions {
    fn default() -> Self {
        NrOptions {
            tol: 1e-8,
            max_iter: 20,
            enforce_q_limits: true,
            start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSolution {
    pub vm: Vec<f64>,
    /// rad
    pub va: Vec<f64>,
    /// Complex power entering each branch at its from and to ends, p.u.
    pub s_from: Vec<(f64, f64)>,
    pub s_to: Vec<(f64, f64)>,
    /// Total generation per bus after slack and Q-limit adjustment, p.u.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// Final bus types, after any PV to PQ switching.
    pub kinds: Vec<BusKind>,
    pub iterations: usize,
    pub converged: bool,
    pub max_mismatch: f64,
}

impl AcSolution {
    /// Series and shunt losses of all branches, p.u.
    pub fn branch_losses(&self) -> f64 {
        self.s_from
            .iter()
            .zip(&self.s_to)
            .map(|(f, t)| f.0 + t.0)
            .sum()
    }
}

/// Complex injections `V .* conj(Ybus V)`.
pub fn injections(ybus: &[Vec<(usize, Complex64)>], v: &[Complex64]) -> Vec<Complex64> {
    ybus.iter()
        .enumerate()
        .map(|(i, row)| {
            let current: Complex64 = row.iter().map(|&(k, y)| y * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Partial derivatives of the injections with respect to angles and
/// magnitudes, as dense `(dS/dVa, dS/dVm)`.
pub fn dsbus_dv(
    ybus: &[Vec<(usize, Complex64)>],
    v: &[Complex64],
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = v.len();
    let j = Complex64::new(0.0, 1.0);
    let mut dva = DMatrix::zeros(n, n);
    let mut dvm = DMatrix::zeros(n, n);
    for (i, row) in ybus.iter().enumerate() {
        let current: Complex64 = row.iter().map(|&(k, y)| y * v[k]).sum();
        let vi = v[i];
        for &(k, y) in row {
            let vk = v[k];
            let unit = vk / vk.norm();
            dva[(i, k)] -= j * vi * (y * vk).conj();
            dvm[(i, k)] += vi * (y * unit).conj();
        }
        dva[(i, i)] += j * vi * current.conj();
        dvm[(i, i)] += current.conj() * vi / vi.norm();
    }
    (dva, dvm)
}

struct Layout {
    /// Buses whose angle is unknown, then buses whose magnitude is unknown.
    angle: Vec<usize>,
    magnitude: Vec<usize>,
}

impl Layout {
    fn new(kinds: &[BusKind]) -> Layout {
        Layout {
            angle: (0..kinds.len())
                .filter(|&k| kinds[k] != BusKind::Slack)
                .collect(),
            magnitude: (0..kinds.len())
                .filter(|&k| kinds[k] == BusKind::Pq)
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.angle.len() + self.magnitude.len()
    }
}

fn mismatch(layout: &Layout, s: &[Complex64], spec: &[Complex64]) -> DVector<f64> {
    let mut f = DVector::zeros(layout.len());
    for (r, &k) in layout.angle.iter().enumerate() {
        f[r] = s[k].re - spec[k].re;
    }
    let off = layout.angle.len();
    for (r, &k) in layout.magnitude.iter().enumerate() {
        f[off + r] = s[k].im - spec[k].im;
    }
    f
}

/// Assigns one slack per island: the case slack where present, else the
/// first bus with a generator.
fn assign_slacks(ac: &AcNetwork) -> Result<Vec<BusKind>, AcError> {
    let n = ac.n_bus();
    let mut kinds: Vec<BusKind> = ac.buses.iter().map(|b| b.kind).collect();
    let has_gen: Vec<bool> = (0..n).map(|k| ac.gens.iter().any(|g| g.bus == k)).collect();
    for k in 0..n {
        if kinds[k] == BusKind::Pv && !has_gen[k] {
            kinds[k] = BusKind::Pq;
        }
    }
    let mut adj = vec![Vec::new(); n];
    for br in &ac.branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut seen = vec![false; n];
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
                if !std::mem::replace(&mut seen[v], true) {
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        let slacks: Vec<usize> = comp
            .iter()
            .copied()
            .filter(|&k| kinds[k] == BusKind::Slack)
            .collect();
        for &k in slacks.iter().skip(1) {
            kinds[k] = if has_gen[k] { BusKind::Pv } else { BusKind::Pq };
        }
        if slacks.is_empty() {
            let passive = comp
                .iter()
                .all(|&k| !has_gen[k] && ac.buses[k].pd == 0.0 && ac.buses[k].qd == 0.0);
            match comp.iter().copied().find(|&k| has_gen[k]) {
                Some(k) => kinds[k] = BusKind::Slack,
                // A dead island: pin one bus so the equations stay square.
                None if passive => kinds[comp[0]] = BusKind::Slack,
                None => {
                    return Err(AcError::NoSource {
                        bus: ac.buses[comp[0]].id,
                    })
                }
            }
        }
    }
    Ok(kinds)
}

/// Runs Newton-Raphson on the polar mismatch equations, switching PV buses
/// to PQ at their reactive limits between solves.
pub fn solve_nr(ac: &AcNetwork, opts: &NrOptions) -> Result<AcSolution, AcError> {
    let n = ac.n_bus();
    let mut kinds = assign_slacks(ac)?;
    let ybus = ac.ybus();
    let mut pg = vec![0.0; n];
    let mut qg = vec![0.0; n];
    let mut qmin = vec![0.0; n];
    let mut qmax = vec![0.0; n];
    let mut vset = vec![None; n];
    for g in &ac.gens {
        pg[g.bus] += g.pg;
        qg[g.bus] += g.qg;
        qmin[g.bus] += g.qmin;
        qmax[g.bus] += g.qmax;
        vset[g.bus].get_or_insert(g.vset);
    }
    let (mut vm, mut va) = match &opts.start {
        Some((m, a)) => (m.clone(), a.clone()),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for k in 0..n {
        if kinds[k] != BusKind::Pq {
            if let Some(v) = vset[k] {
                vm[k] = v;
            }
        }
    }
    let mut total_iter = 0;
    loop {
        let spec: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new(pg[k] - ac.buses[k].pd, qg[k] - ac.buses[k].qd))
            .collect();
        let layout = Layout::new(&kinds);
        let (iters, mm) = newton(&ybus, &layout, &spec, &mut vm, &mut va, opts)?;
        total_iter += iters;

        let v: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(vm[k], va[k]))
            .collect();
        let s = injections(&ybus, &v);
        let mut switched = false;
        if opts.enforce_q_limits {
            for k in 0..n {
                if kinds[k] != BusKind::Pv {
                    continue;
                }
                let q = s[k].im + ac.buses[k].qd;
                let tol = 1e-6;
                if q > qmax[k] + tol {
                    qg[k] = qmax[k];
                } else if q < qmin[k] - tol {
                    qg[k] = qmin[k];
                } else {
                    continue;
                }
                log::debug!("bus {} hits a reactive limit; now PQ", ac.buses[k].id);
                kinds[k] = BusKind::Pq;
                switched = true;
            }
        }
        if switched {
            continue;
        }
        for k in 0..n {
            match kinds[k] {
                BusKind::Slack => {
                    pg[k] = s[k].re + ac.buses[k].pd;
                    qg[k] = s[k].im + ac.buses[k].qd;
                }
                BusKind::Pv => qg[k] = s[k].im + ac.buses[k].qd,
                BusKind::Pq => {}
            }
        }
        let (s_from, s_to) = branch_flows(ac, &v);
        return Ok(AcSolution {
            vm,
            va,
            s_from,
            s_to,
            pg,
            qg,
            kinds,
            iterations: total_iter,
            converged: true,
            max_mismatch: mm,
        });
    }
}

/// Inner Newton loop; returns iterations used and the final mismatch.
fn newton(
    ybus: &[Vec<(usize, Complex64)>],
    layout: &Layout,
    spec: &[Complex64],
    vm: &mut [f64],
    va: &mut [f64],
    opts: &NrOptions,
) -> Result<(usize, f64), AcError> {
    let n = vm.len();
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(vm[k], va[k]))
        .collect();
    let mut f = mismatch(layout, &injections(ybus, &v), spec);
    let mut norm = f.amax();
    let start_norm = norm;
    for iteration in 0..=opts.max_iter {
        if norm <= opts.tol {
            return Ok((iteration, norm));
        }
        if iteration == opts.max_iter || !norm.is_finite() || norm > 1e6 * start_norm.max(1.0) {
            return Err(AcError::Diverged {
                iterations: iteration,
                mismatch: norm,
            });
        }
        let jac = jacobian(ybus, layout, &v);
        let dx = jac
            .lu()
            .solve(&(-&f))
            .filter(|dx| dx.iter().all(|x| x.is_finite()))
            .ok_or(AcError::SingularJacobian { iteration })?;
        for (r, &k) in layout.angle.iter().enumerate() {
            va[k] += dx[r];
        }
        let off = layout.angle.len();
        for (r, &k) in layout.magnitude.iter().enumerate() {
            vm[k] += dx[off + r];
        }
        for k in 0..n {
            v[k] = Complex64::from_polar(vm[k], va[k]);
        }
        f = mismatch(layout, &injections(ybus, &v), spec);
        norm = f.amax();
    }
    unreachable!("loop returns by max_iter")
}

fn jacobian(ybus: &[Vec<(usize, Complex64)>], layout: &Layout, v: &[Complex64]) -> DMatrix<f64> {
    let (dva, dvm) = dsbus_dv(ybus, v);
    let m = layout.len();
    let off = layout.angle.len();
    let mut jac = DMatrix::zeros(m, m);
    for (r, &i) in layout.angle.iter().enumerate() {
        for (c, &k) in layout.angle.iter().enumerate() {
            jac[(r, c)] = dva[(i, k)].re;
        }
        for (c, &k) in layout.magnitude.iter().enumerate() {
            jac[(r, off + c)] = dvm[(i, k)].re;
        }
    }
    for (r, &i) in layout.magnitude.iter().enumerate() {
        for (c, &k) in layout.angle.iter().enumerate() {
            jac[(off + r, c)] = dva[(i, k)].im;
        }
        for (c, &k) in layout.magnitude.iter().enumerate() {
            jac[(off + r, off + c)] = dvm[(i, k)].im;
        }
    }
    jac
}

/// Real Jacobian of the mismatch for the bus types in `kinds`, ordered as
/// angles of non-slack buses then magnitudes of PQ buses.
pub fn mismatch_jacobian(
    ac: &AcNetwork,
    kinds: &[BusKind],
    vm: &[f64],
    va: &[f64],
) -> DMatrix<f64> {
    let v: Vec<Complex64> = (0..vm.len())
        .map(|k| Complex64::from_polar(vm[k], va[k]))
        .collect();
    jacobian(&ac.ybus(), &Layout::new(kinds), &v)
}

/// Mismatch vector in the same ordering as [`mismatch_jacobian`].
pub fn mismatch_vector(ac: &AcNetwork, kinds: &[BusKind], vm: &[f64], va: &[f64]) -> Vec<f64> {
    let v: Vec<Complex64> = (0..vm.len())
        .map(|k| Complex64::from_polar(vm[k], va[k]))
        .collect();
    let mut spec: Vec<Complex64> = ac
        .buses
        .iter()
        .map(|b| Complex64::new(-b.pd, -b.qd))
        .collect();
    for g in &ac.gens {
        spec[g.bus] += Complex64::new(g.pg, g.qg);
    }
    mismatch(&Layout::new(kinds), &injections(&ac.ybus(), &v), &spec)
        .iter()
        .copied()
        .collect()
}

fn branch_flows(ac: &AcNetwork, v: &[Complex64]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut from = Vec::with_capacity(ac.branches.len());
    let mut to = Vec::with_capacity(ac.branches.len());
    for br in &ac.branches {
        let (yff, yft, ytf, ytt) = branch_admittance(br);
        let (vf, vt) = (v[br.from], v[br.to]);
        let sf = vf * (yff * vf + yft * vt).conj();
        let st = vt * (ytf * vf + ytt * vt).conj();
        from.push((sf.re, sf.im));
        to.push((st.re, st.im));
    }
    (from, to)
}

// ------------------------------------------------------------------ report

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcStatus {
    Converged,
    ConvergedWithViolations,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusReport {
    pub id: u32,
    pub vm: f64,
    pub va_deg: f64,
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    /// Line index in the DC network.
    pub line: usize,
    pub from: u32,
    pub to: u32,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    /// Larger apparent power of the two ends.
    pub mva: f64,
    pub rate_mva: Option<f64>,
    pub loading_pct: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Thermal,
    VoltageHigh,
    VoltageLow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Bus id, or 1-based line number for thermal violations.
    pub element: u32,
    pub value: f64,
    pub limit: f64,
    /// Excess relative to the limit.
    pub severity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: AcStatus,
    pub iterations: usize,
    /// `None` when diverged.
    pub max_mismatch: Option<f64>,
    pub losses_mw: Option<f64>,
    pub buses: Vec<BusReport>,
    pub branches: Vec<BranchReport>,
    /// Worst first.
    pub violations: Vec<Violation>,
    /// Solver message when diverged.
    pub error: Option<String>,
}

impl FeasibilityReport {
    pub fn converged(&self) -> bool {
        self.status != AcStatus::Diverged
    }

    pub fn branch(&self, line: usize) -> Option<&BranchReport> {
        self.branches.iter().find(|b| b.line == line)
    }
}

/// Slack in the thermal and voltage checks.
const LIMIT_TOL: f64 = 1e-6;

/// Solves the AC flow of an already-built network and checks limits.
pub fn report(ac: &AcNetwork, opts: &NrOptions) -> FeasibilityReport {
    let sol = match solve_nr(ac, opts) {
        Ok(s) => s,
        Err(e) => {
            let iterations = match e {
                AcError::Diverged { iterations, .. } => iterations,
                AcError::SingularJacobian { iteration } => iteration,
                _ => 0,
            };
            return FeasibilityReport {
                status: AcStatus::Diverged,
                iterations,
                max_mismatch: None,
                losses_mw: None,
                buses: Vec::new(),
                branches: Vec::new(),
                violations: Vec::new(),
                error: Some(e.to_string()),
            };
        }
    };
    let base = ac.base_mva;
    let mut violations = Vec::new();
    let buses: Vec<BusReport> = ac
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let vm = sol.vm[k];
            if vm > b.vmax + LIMIT_TOL {
                violations.push(Violation {
                    kind: ViolationKind::VoltageHigh,
                    element: b.id,
                    value: vm,
                    limit: b.vmax,
                    severity: (vm - b.vmax) / b.vmax,
                });
            } else if vm < b.vmin - LIMIT_TOL {
                violations.push(Violation {
                    kind: ViolationKind::VoltageLow,
                    element: b.id,
                    value: vm,
                    limit: b.vmin,
                    severity: (b.vmin - vm) / b.vmin,
                });
            }
            BusReport {
                id: b.id,
                vm,
                va_deg: sol.va[k].to_degrees(),
                vmin: b.vmin,
                vmax: b.vmax,
            }
        })
        .collect();
    let branches: Vec<BranchReport> = ac
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let (pf, qf) = sol.s_from[k];
            let (pt, qt) = sol.s_to[k];
            let mva = pf.hypot(qf).max(pt.hypot(qt)) * base;
            let rate = (br.rate > 0.0).then_some(br.rate * base);
            if let Some(r) = rate {
                if mva > r * (1.0 + LIMIT_TOL) {
                    violations.push(Violation {
                        kind: ViolationKind::Thermal,
                        element: br.line as u32 + 1,
                        value: mva,
                        limit: r,
                        severity: (mva - r) / r,
                    });
                }
            }
            BranchReport {
                line: br.line,
                from: ac.buses[br.from].id,
                to: ac.buses[br.to].id,
                p_from_mw: pf * base,
                q_from_mvar: qf * base,
                p_to_mw: pt * base,
                q_to_mvar: qt * base,
                mva,
                rate_mva: rate,
                loading_pct: rate.map(|r| 100.0 * mva / r),
            }
        })
        .collect();
    violations.sort_by(|a, b| b.severity.total_cmp(&a.severity));
    FeasibilityReport {
        status: if violations.is_empty() {
            AcStatus::Converged
        } else {
            AcStatus::ConvergedWithViolations
        },
        iterations: sol.iterations,
        max_mismatch: Some(sol.max_mismatch),
        losses_mw: Some(sol.branch_losses() * base),
        buses,
        branches,
        violations,
        error: None,
    }
}

/// Builds the actual post-event AC network for `decisions` and reports its
/// power flow.
pub fn verify_decisions(
    ac: &AcNetwork,
    net: &Network,
    decisions: &[TopologyDecision],
    opts: &NrOptions,
) -> Result<FeasibilityReport, AcError> {
    let post = ac.apply_decisions(net, decisions)?;
    Ok(report(&post, opts))
}

/// Share of rated branches whose DC flow (p.u., per DC line) lies within
/// 10% of the rating of the AC real flow.
pub fn dc_ac_agreement(report: &FeasibilityReport, dc_flows: &[f64], base_mva: f64) -> Option<f64> {
    let rated: Vec<&BranchReport> = report
        .branches
        .iter()
        .filter(|b| b.rate_mva.is_some())
        .collect();
    if rated.is_empty() {
        return None;
    }
    let close = rated
        .iter()
        .filter(|b| {
            let dc = dc_flows[b.line] * base_mva;
            (dc - b.p_from_mw).abs() <= 0.1 * b.rate_mva.unwrap()
        })
        .count();
    Some(close as f64 / rated.len() as f64)
}
