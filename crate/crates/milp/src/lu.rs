//! Sparse LU factorisation of simplex bases with product-form updates.
//!
//! The factorisation is right-looking with Markowitz pivot selection and a
//! relative threshold. Singletons are taken first, which makes the many
//! logical (slack) columns of a typical basis free to factor. Basis changes
//! between refactorisations are appended as eta columns.

const ABS_PIVOT_TOL: f64 = 1e-11;
const REL_PIVOT_TOL: f64 = 0.1;
const MARKOWITZ_CANDIDATES: usize = 6;

/// Rows and basis positions left without a pivot when the basis is singular.
#[derive(Debug, Clone, PartialEq)]
pub struct Singular {
    pub rank: usize,
    pub missing_cols: Vec<usize>,
    pub missing_rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct LuFactors {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_col: Vec<usize>,
    pivot_val: Vec<f64>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    // U by column and L by row, indexed by pivot step, for the solves that
    // can then skip zero entries.
    ut_start: Vec<usize>,
    ut_row: Vec<usize>,
    ut_val: Vec<f64>,
    lt_start: Vec<usize>,
    lt_row: Vec<usize>,
    lt_val: Vec<f64>,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Factors the square matrix whose column `k` holds `(row, value)` entries.
    pub fn factorize(m: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<LuFactors, Singular> {
        assert_eq!(columns.len(), m);
        let mut cols = columns;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut row_count = vec![0usize; m];
        for (j, col) in cols.iter_mut().enumerate() {
            col.retain(|&(_, v)| v != 0.0);
            for &(i, _) in col.iter() {
                rows[i].push(j);
                row_count[i] += 1;
            }
        }
        let mut col_active = vec![true; m];
        let mut row_active = vec![true; m];
        let mut col_singletons: Vec<usize> = (0..m).rev().filter(|&j| cols[j].len() == 1).collect();
        let mut row_singletons: Vec<usize> = (0..m).rev().filter(|&i| row_count[i] == 1).collect();
        let mut pos = vec![usize::MAX; m];

        let mut f = LuFactors {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };

        for _ in 0..m {
            let mut pivot: Option<(usize, usize)> = None;

            while let Some(j) = col_singletons.pop() {
                if col_active[j] && cols[j].len() == 1 && cols[j][0].1.abs() > ABS_PIVOT_TOL {
                    pivot = Some((cols[j][0].0, j));
                    break;
                }
            }

            if pivot.is_none() {
                while let Some(i) = row_singletons.pop() {
                    if !row_active[i] || row_count[i] != 1 {
                        continue;
                    }
                    let Some(j) = rows[i]
                        .iter()
                        .copied()
                        .find(|&j| col_active[j] && cols[j].iter().any(|&(r, _)| r == i))
                    else {
                        continue;
                    };
                    let col_max = cols[j].iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
                    let v = cols[j].iter().find(|&&(r, _)| r == i).unwrap().1;
                    if v.abs() > ABS_PIVOT_TOL && v.abs() >= REL_PIVOT_TOL * col_max {
                        pivot = Some((i, j));
                        break;
                    }
                }
            }

            if pivot.is_none() {
                pivot = markowitz_pivot(&cols, &col_active, &row_count);
            }

            let Some((p, q)) = pivot else { break };

            let piv = cols[q].iter().find(|&&(r, _)| r == p).unwrap().1;
            let lk_start = f.l_idx.len();
            let col_q = std::mem::take(&mut cols[q]);
            col_active[q] = false;
            row_active[p] = false;
            for &(i, v) in &col_q {
                row_count[i] -= 1;
                if i != p {
                    f.l_idx.push(i);
                    f.l_val.push(v / piv);
                    if row_count[i] == 1 {
                        row_singletons.push(i);
                    }
                }
            }
            let lk_end = f.l_idx.len();

            let row_p = std::mem::take(&mut rows[p]);
            for &j in &row_p {
                if !col_active[j] {
                    continue;
                }
                let Some(k) = cols[j].iter().position(|&(r, _)| r == p) else {
                    continue;
                };
                let u = cols[j].swap_remove(k).1;
                f.u_idx.push(j);
                f.u_val.push(u);
                if lk_end > lk_start {
                    for (k, &(r, _)) in cols[j].iter().enumerate() {
                        pos[r] = k;
                    }
                    for t in lk_start..lk_end {
                        let i = f.l_idx[t];
                        let delta = -f.l_val[t] * u;
                        if pos[i] != usize::MAX {
                            cols[j][pos[i]].1 += delta;
                        } else {
                            pos[i] = cols[j].len();
                            cols[j].push((i, delta));
                            rows[i].push(j);
                            row_count[i] += 1;
                        }
                    }
                    for &(r, _) in cols[j].iter() {
                        pos[r] = usize::MAX;
                    }
                }
                if cols[j].len() == 1 {
                    col_singletons.push(j);
                }
            }

            f.pivot_row.push(p);
            f.pivot_col.push(q);
            f.pivot_val.push(piv);
            f.l_start.push(f.l_idx.len());
            f.u_start.push(f.u_idx.len());
        }

        let rank = f.pivot_row.len();
        if rank < m {
            let missing_cols = (0..m).filter(|&j| col_active[j]).collect();
            let missing_rows = (0..m).filter(|&i| row_active[i]).collect();
            return Err(Singular {
                rank,
                missing_cols,
                missing_rows,
            });
        }
        f.build_transposes();
        Ok(f)
    }

    fn build_transposes(&mut self) {
        let m = self.m;
        let mut step_of_col = vec![0; m];
        let mut step_of_row = vec![0; m];
        for k in 0..m {
            step_of_col[self.pivot_col[k]] = k;
            step_of_row[self.pivot_row[k]] = k;
        }
        let (ut_start, ut_row, ut_val) = transpose(
            m,
            &self.u_start,
            self.u_idx.iter().map(|&j| step_of_col[j]),
            &self.u_val,
            &self.pivot_row,
        );
        let (lt_start, lt_row, lt_val) = transpose(
            m,
            &self.l_start,
            self.l_idx.iter().map(|&i| step_of_row[i]),
            &self.l_val,
            &self.pivot_row,
        );
        self.ut_start = ut_start;
        self.ut_row = ut_row;
        self.ut_val = ut_val;
        self.lt_start = lt_start;
        self.lt_row = lt_row;
        self.lt_val = lt_val;
    }

    /// Solves `B x = b`. `rhs` is indexed by row on entry; the solution is
    /// written to `out`, indexed by basis position.
    pub fn solve(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.m {
            let t = rhs[self.pivot_row[k]];
            if t != 0.0 {
                for s in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[s]] -= self.l_val[s] * t;
                }
            }
        }
        for k in (0..self.m).rev() {
            let x = rhs[self.pivot_row[k]] / self.pivot_val[k];
            out[self.pivot_col[k]] = x;
            if x != 0.0 {
                for s in self.ut_start[k]..self.ut_start[k + 1] {
                    rhs[self.ut_row[s]] -= self.ut_val[s] * x;
                }
            }
        }
    }

    /// Solves `B^T y = c`. `rhs` is indexed by basis position on entry; the
    /// solution is written to `out`, indexed by row.
    pub fn solve_transposed(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.m {
            let z = rhs[self.pivot_col[k]] / self.pivot_val[k];
            out[self.pivot_row[k]] = z;
            if z != 0.0 {
                for s in self.u_start[k]..self.u_start[k + 1] {
                    rhs[self.u_idx[s]] -= self.u_val[s] * z;
                }
            }
        }
        for k in (0..self.m).rev() {
            let v = out[self.pivot_row[k]];
            if v != 0.0 {
                for s in self.lt_start[k]..self.lt_start[k + 1] {
                    out[self.lt_row[s]] -= self.lt_val[s] * v;
                }
            }
        }
    }
}

/// Regroups entries stored per pivot step `k` (each naming a later step) by
/// that later step, recording the pivot row of `k` against each.
fn transpose(
    m: usize,
    start: &[usize],
    target: impl Iterator<Item = usize> + Clone,
    val: &[f64],
    pivot_row: &[usize],
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut count = vec![0usize; m + 1];
    for t in target.clone() {
        count[t + 1] += 1;
    }
    for k in 0..m {
        count[k + 1] += count[k];
    }
    let out_start = count.clone();
    let mut next = count;
    let nnz = val.len();
    let mut rows = vec![0; nnz];
    let mut vals = vec![0.0; nnz];
    let mut targets = target;
    for k in 0..m {
        for s in start[k]..start[k + 1] {
            let t = targets.next().unwrap();
            rows[next[t]] = pivot_row[k];
            vals[next[t]] = val[s];
            next[t] += 1;
        }
    }
    (out_start, rows, vals)
}

fn markowitz_pivot(
    cols: &[Vec<(usize, f64)>],
    col_active: &[bool],
    row_count: &[usize],
) -> Option<(usize, usize)> {
    let min_count = (0..cols.len())
        .filter(|&j| col_active[j] && !cols[j].is_empty())
        .map(|j| cols[j].len())
        .min()?;
    let mut best: Option<(usize, usize)> = None;
    let mut best_cost = usize::MAX;
    let mut best_mag = 0.0;
    let mut seen = 0;
    for count in min_count..=min_count + 1 {
        for j in 0..cols.len() {
            if !col_active[j] || cols[j].len() != count {
                continue;
            }
            seen += 1;
            let col_max = cols[j].iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
            for &(i, v) in &cols[j] {
                let mag = v.abs();
                if mag <= ABS_PIVOT_TOL || mag < REL_PIVOT_TOL * col_max {
                    continue;
                }
                let cost = (row_count[i] - 1) * (count - 1);
                if cost < best_cost || (cost == best_cost && mag > best_mag) {
                    best = Some((i, j));
                    best_cost = cost;
                    best_mag = mag;
                }
            }
            if seen >= MARKOWITZ_CANDIDATES && best.is_some() {
                return best;
            }
        }
        if best.is_some() {
            return best;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// An LU factorisation plus a product-form eta file for the basis updates
/// applied since it was computed.
#[derive(Debug, Clone, Default)]
pub struct BasisFactor {
    lu: LuFactors,
    etas: Vec<Eta>,
    work: Vec<f64>,
}

impl BasisFactor {
    pub fn new(lu: LuFactors) -> Self {
        let m = lu.dim();
        BasisFactor {
            lu,
            etas: Vec::new(),
            work: vec![0.0; m],
        }
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// `B^{-1} a` in place: row-indexed on entry, basis-position-indexed on exit.
    pub fn ftran(&mut self, v: &mut [f64]) {
        self.lu.solve(v, &mut self.work);
        v.copy_from_slice(&self.work);
        for eta in &self.etas {
            let xr = v[eta.pos] / eta.pivot;
            v[eta.pos] = xr;
            if xr != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                    v[i] -= a * xr;
                }
            }
        }
    }

    /// `B^{-T} c` in place: basis-position-indexed on entry, row-indexed on exit.
    pub fn btran(&mut self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = v[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                s -= a * v[i];
            }
            v[eta.pos] = s / eta.pivot;
        }
        self.lu.solve_transposed(v, &mut self.work);
        v.copy_from_slice(&self.work);
    }

    /// Records that basis position `pos` was replaced by a column whose
    /// ftran'd image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > 1e-13 {
                idx.push(i);
                val.push(a);
            }
        }
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            idx,
            val,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_mul(cols: &[Vec<(usize, f64)>], x: &[f64], m: usize) -> Vec<f64> {
        let mut y = vec![0.0; m];
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                y[i] += v * x[j];
            }
        }
        y
    }

    fn random_columns(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, f64)>> {
        // Diagonally dominant so the matrix is nonsingular, scattered for fill.
        (0..m)
            .map(|j| {
                let mut col = vec![(j, 4.0 + rng.gen::<f64>())];
                for _ in 0..2 {
                    let i = rng.gen_range(0..m);
                    if i != j && !col.iter().any(|&(r, _)| r == i) {
                        col.push((i, rng.gen_range(-1.0..1.0)));
                    }
                }
                col
            })
            .collect()
    }

    #[test]
    fn solves_random_sparse_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [1, 2, 5, 30, 120] {
            let cols = random_columns(m, &mut rng);
            let lu = LuFactors::factorize(m, cols.clone()).unwrap();
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut b = dense_mul(&cols, &x, m);
            let mut out = vec![0.0; m];
            lu.solve(&mut b, &mut out);
            for k in 0..m {
                assert!((out[k] - x[k]).abs() < 1e-10, "ftran m={m}");
            }
            // Transposed: y^T B = c^T  <=>  c_j = sum_i y_i B_ij
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut c: Vec<f64> = cols
                .iter()
                .map(|col| col.iter().map(|&(i, v)| y[i] * v).sum())
                .collect();
            let mut out = vec![0.0; m];
            lu.solve_transposed(&mut c, &mut out);
            for i in 0..m {
                assert!((out[i] - y[i]).abs() < 1e-10, "btran m={m}");
            }
        }
    }

    #[test]
    fn permuted_identity_and_singular_detection() {
        let cols = vec![vec![(2, -1.0)], vec![(0, 2.0)], vec![(1, 1.0)]];
        let lu = LuFactors::factorize(3, cols).unwrap();
        let mut b = vec![2.0, 3.0, 4.0];
        let mut x = vec![0.0; 3];
        lu.solve(&mut b, &mut x);
        assert_eq!(x, vec![-4.0, 1.0, 3.0]);

        let cols = vec![
            vec![(0, 1.0), (1, 1.0)],
            vec![(0, 2.0), (1, 2.0)],
            vec![(2, 1.0)],
        ];
        let err = LuFactors::factorize(3, cols).unwrap_err();
        assert_eq!(err.rank, 2);
        assert_eq!(err.missing_cols.len(), 1);
        assert_eq!(err.missing_rows.len(), 1);
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 25;
        let mut cols = random_columns(m, &mut rng);
        let mut factor = BasisFactor::new(LuFactors::factorize(m, cols.clone()).unwrap());
        for step in 0..10 {
            let pos = (step * 7) % m;
            let mut newcol = vec![(pos, 5.0)];
            let other = (pos + 3) % m;
            newcol.push((other, rng.gen_range(-1.0..1.0)));
            let mut alpha = vec![0.0; m];
            for &(i, v) in &newcol {
                alpha[i] = v;
            }
            factor.ftran(&mut alpha);
            factor.update(pos, &alpha);
            cols[pos] = newcol;

            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b = dense_mul(&cols, &x, m);
            factor.ftran(&mut b);
            for k in 0..m {
                assert!((b[k] - x[k]).abs() < 1e-9);
            }
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c: Vec<f64> = cols
                .iter()
                .map(|col| col.iter().map(|&(i, v)| y[i] * v).sum())
                .collect();
            factor.btran(&mut c);
            for i in 0..m {
                assert!((c[i] - y[i]).abs() < 1e-9);
            }
        }
    }
}
