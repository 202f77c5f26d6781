//! Reference solvers written independently of the crate: a dense two-phase
//! tableau simplex with Bland's rule and brute-force binary enumeration.

#![allow(dead_code)]

use gridsplit_milp::{MilpProblem, Relation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

impl Outcome {
    pub fn value(self) -> Option<f64> {
        match self {
            Outcome::Optimal(v) => Some(v),
            _ => None,
        }
    }
}

const EPS: f64 = 1e-9;

/// Dense tableau for `min c^T x, A x = b, x >= 0` with `b >= 0`.
struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f.abs() > 0.0 {
                for k in 0..self.rows[i].len() {
                    self.rows[i][k] -= f * self.rows[r][k];
                }
                self.rhs[i] -= f * self.rhs[r];
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost` over the allowed columns. Returns false when unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    d -= cost[b] * self.rows[i][j];
                }
                if d < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][q];
                if a > EPS {
                    let t = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lt)) => {
                            t < lt - EPS || (t <= lt + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, t));
                    }
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, q),
            }
        }
    }
}

/// Solves the continuous relaxation of `p` by a textbook method.
pub fn dense_lp(p: &MilpProblem) -> Outcome {
    let n = p.num_vars();
    // Shift x = lo + x' for finite lower bounds; split free variables.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new(); // per original var: (new col, factor)
    let mut ncol = 0;
    let mut shift = vec![0.0; n];
    for j in 0..n {
        if p.lower[j].is_finite() {
            shift[j] = p.lower[j];
            cols.push(vec![(ncol, 1.0)]);
            ncol += 1;
        } else if p.upper[j].is_finite() {
            shift[j] = p.upper[j];
            cols.push(vec![(ncol, -1.0)]);
            ncol += 1;
        } else {
            cols.push(vec![(ncol, 1.0), (ncol + 1, -1.0)]);
            ncol += 2;
        }
    }
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &p.constraints {
        let mut row = vec![0.0; ncol];
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            rhs -= a * shift[j];
            for &(k, f) in &cols[j] {
                row[k] += a * f;
            }
        }
        rows.push((row, c.relation, rhs));
    }
    for j in 0..n {
        if p.lower[j].is_finite() && p.upper[j].is_finite() {
            let mut row = vec![0.0; ncol];
            row[cols[j][0].0] = 1.0;
            rows.push((row, Relation::Le, p.upper[j] - p.lower[j]));
        }
    }
    let mut cost = vec![0.0; ncol];
    let mut offset = 0.0;
    for j in 0..n {
        offset += p.objective[j] * shift[j];
        for &(k, f) in &cols[j] {
            cost[k] += p.objective[j] * f;
        }
    }

    // Standard form with slacks, then artificials.
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let width = ncol + nslack + m;
    let mut t = Tableau {
        rows: vec![vec![0.0; width]; m],
        rhs: vec![0.0; m],
        basis: vec![0; m],
    };
    let mut s = ncol;
    for (i, (row, rel, rhs)) in rows.iter().enumerate() {
        t.rows[i][..ncol].copy_from_slice(row);
        match rel {
            Relation::Le => {
                t.rows[i][s] = 1.0;
                s += 1;
            }
            Relation::Ge => {
                t.rows[i][s] = -1.0;
                s += 1;
            }
            Relation::Eq => {}
        }
        t.rhs[i] = *rhs;
        if *rhs < 0.0 {
            for v in t.rows[i].iter_mut() {
                *v = -*v;
            }
            t.rhs[i] = -*rhs;
        }
        t.rows[i][ncol + nslack + i] = 1.0;
        t.basis[i] = ncol + nslack + i;
    }
    let mut phase1 = vec![0.0; width];
    for v in phase1[ncol + nslack..].iter_mut() {
        *v = 1.0;
    }
    t.optimise(&phase1, width);
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(&b, _)| b >= ncol + nslack)
        .map(|(_, &v)| v)
        .sum();
    if infeas > 1e-7 {
        return Outcome::Infeasible;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..m {
        if t.basis[i] >= ncol + nslack {
            if let Some(q) =
                (0..ncol + nslack).find(|&q| t.rows[i][q].abs() > 1e-9 && !t.basis.contains(&q))
            {
                t.pivot(i, q);
            }
        }
    }
    let mut cost2 = vec![0.0; width];
    cost2[..ncol].copy_from_slice(&cost);
    // Artificials stuck in the basis sit at zero in redundant rows; forbid re-entry.
    if !t.optimise(&cost2, ncol + nslack) {
        return Outcome::Unbounded;
    }
    let mut obj = offset;
    for (i, &b) in t.basis.iter().enumerate() {
        if b < ncol {
            obj += cost[b] * t.rhs[i];
        }
    }
    Outcome::Optimal(obj)
}

/// Enumerates every assignment of the integer variables (all binary) and
/// solves the continuous remainder with [`dense_lp`].
pub fn enumerate(p: &MilpProblem) -> Outcome {
    let ints: Vec<usize> = (0..p.num_vars()).filter(|&j| p.integer[j]).collect();
    assert!(ints.len() <= 16, "enumeration limited to 16 binaries");
    for &j in &ints {
        assert!(
            p.lower[j] >= 0.0 && p.upper[j] <= 1.0,
            "enumeration needs binaries"
        );
    }
    let mut best: Option<f64> = None;
    let mut unbounded = false;
    for mask in 0u32..(1 << ints.len()) {
        let mut q = p.clone();
        let mut skip = false;
        for (k, &j) in ints.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            if v < p.lower[j] || v > p.upper[j] {
                skip = true;
            }
            q.lower[j] = v;
            q.upper[j] = v;
        }
        if skip {
            continue;
        }
        match dense_lp(&q) {
            Outcome::Optimal(v) => best = Some(best.map_or(v, |b: f64| b.min(v))),
            Outcome::Unbounded => unbounded = true,
            Outcome::Infeasible => {}
        }
    }
    if unbounded {
        Outcome::Unbounded
    } else {
        best.map_or(Outcome::Infeasible, Outcome::Optimal)
    }
}
