//! Compressed sparse rows with an ILU(0)-preconditioned BiCGSTAB solver.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Rows given as `(column, value)` lists; duplicate columns are summed and
    /// columns sorted.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Csr {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < ncols);
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { nrows: row_ptr.len() - 1, ncols, row_ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Ilu0> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::LinearSolve { iterations: 0, residual: f64::NAN });
            }
        }
        let mut iw = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                iw[lu.cols[k]] = k;
            }
            for k in start..end {
                let col = lu.cols[k];
                if col >= i {
                    break;
                }
                let piv = lu.vals[diag[col]];
                let f = lu.vals[k] / piv;
                lu.vals[k] = f;
                for kk in diag[col] + 1..lu.row_ptr[col + 1] {
                    let j = lu.cols[kk];
                    let at = iw[j];
                    if at != usize::MAX {
                        lu.vals[at] -= f * lu.vals[kk];
                    }
                }
            }
            for k in start..end {
                iw[lu.cols[k]] = usize::MAX;
            }
            let d = lu.vals[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::LinearSolve { iterations: 0, residual: f64::NAN });
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = b[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.vals[k] * x[self.lu.cols[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[k] * x[self.lu.cols[k]];
            }
            x[i] = s / self.lu.vals[self.diag[i]];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `||b - A x||_2 / ||b||_2` at exit.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB from the initial guess in `x`. When the
/// recurrence residual drifts from the true one, the iteration restarts from
/// the current iterate.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], m: &Ilu0, tol: f64, max_iter: usize) -> Result<SolveStats> {
    let mut total = 0;
    let mut last = f64::NAN;
    for _ in 0..4 {
        match bicgstab_pass(a, b, x, m, tol, max_iter - total) {
            Ok(stats) => return Ok(SolveStats { iterations: total + stats.iterations, ..stats }),
            Err(Error::LinearSolve { iterations, residual }) => {
                total += iterations;
                last = residual;
                if total >= max_iter || iterations == 0 {
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::LinearSolve { iterations: total, residual: last })
}

fn bicgstab_pass(a: &Csr, b: &[f64], x: &mut [f64], m: &Ilu0, tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.nrows;
    let bnorm = norm(b);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut res = norm(&r) / scale;
    if res <= tol || (bnorm == 0.0 && norm(&r) == 0.0) {
        return Ok(SolveStats { iterations: 0, relative_residual: res });
    }
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // Breakdown: restart the shadow residual.
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.solve(&p, &mut y);
        a.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / scale <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r.copy_from_slice(&s);
            res = norm(&r) / scale;
            break;
        }
        m.solve(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / scale;
        if res <= tol {
            break;
        }
    }
    // Recompute the true residual to guard against drift in the recurrence.
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let true_res = norm(&r) / scale;
    if true_res <= tol * 10.0 {
        Ok(SolveStats { iterations: it, relative_residual: true_res })
    } else {
        Err(Error::LinearSolve { iterations: it, residual: true_res.max(res) })
    }
}
