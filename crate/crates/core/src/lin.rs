//! Assembly and solution of `L_phi u = g` with Dirichlet data on the stencil cuts.
//!
//! At a node with complex Hessian `A`, `L_phi u = tr(adj(A) U)` where `U` is the
//! complex Hessian of `u`. Writing this as `sum_ab C_ab d_a d_b u` with a real
//! symmetric `C`, the operator splits into one coefficient per stencil line.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::grid::{DomainMask, Grid, LineKind, Target};
use crate::herm::Herm;
use crate::psh::{complex_hessian, gradient_at, linearized_apply, second_difference_weights, HermitianField};
use crate::sparse::{bicgstab, Csr, Ilu0, SolveStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StencilMode {
    /// Consistent with [`linearized_apply`] on every field.
    #[default]
    Central,
    /// Mixed terms folded onto the diagonal of matching sign; positive line
    /// coefficients whenever `C` is diagonally dominant.
    Monotone,
}

/// Real coefficient matrix `C` with `tr(B U) = sum_ab C_ab d_a d_b u`.
pub fn real_coefficients(b: &Herm) -> [[f64; 4]; 4] {
    let n = b.n();
    let mut c = [[0.0; 4]; 4];
    for i in 0..n {
        for j in 0..n {
            let v = b.get(i, j);
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            c[xi][xj] = 0.25 * v.re;
            c[yi][yj] = 0.25 * v.re;
            c[xi][yj] = 0.25 * v.im;
            c[yi][xj] = -0.25 * v.im;
        }
    }
    c
}

/// Coefficient of each stencil line's second difference.
pub fn line_coefficients(mask: &DomainMask, c: &[[f64; 4]; 4], mode: StencilMode) -> [f64; 16] {
    let dim = mask.grid().dim();
    let mut k = [0.0; 16];
    for (l, line) in mask.lines().iter().enumerate() {
        k[l] = match (line.kind, mode) {
            (LineKind::Axis(a), StencilMode::Central) => c[a][a],
            (LineKind::Axis(a), StencilMode::Monotone) => {
                c[a][a] - (0..dim).filter(|&b| b != a).map(|b| c[a][b].abs()).sum::<f64>()
            }
            (LineKind::Diagonal { a, b, sign }, StencilMode::Central) => sign as f64 * c[a][b],
            (LineKind::Diagonal { a, b, sign }, StencilMode::Monotone) => {
                if (c[a][b] > 0.0 && sign > 0) || (c[a][b] < 0.0 && sign < 0) {
                    2.0 * c[a][b].abs()
                } else {
                    0.0
                }
            }
        };
    }
    k
}

#[derive(Clone, Debug)]
pub struct LinearOperator {
    grid: Grid,
    mode: StencilMode,
    interior: Vec<usize>,
    a: Csr,
    boundary: Csr,
    dominant: Vec<bool>,
    snapshot: u64,
}

type Row = (Vec<(usize, f64)>, Vec<(usize, f64)>, bool);

fn assemble_row(mask: &DomainMask, coef: &[f64; 16], pos: usize) -> Row {
    let h = mask.grid().spacing();
    let arms = mask.arms_at(pos);
    let mut inner: Vec<(usize, f64)> = Vec::with_capacity(2 * mask.lines().len() + 1);
    let mut outer: Vec<(usize, f64)> = Vec::new();
    let mut center = 0.0;
    for (l, line) in mask.lines().iter().enumerate() {
        if coef[l] == 0.0 {
            continue;
        }
        let (ap, am) = (arms[2 * l], arms[2 * l + 1]);
        let (wp, w0, wm) = second_difference_weights(ap.frac * line.length * h, am.frac * line.length * h);
        center += coef[l] * w0;
        for (arm, w) in [(ap, wp), (am, wm)] {
            match arm.target {
                Target::Interior(q) => inner.push((q, coef[l] * w)),
                Target::Cut(c) => outer.push((c, coef[l] * w)),
            }
        }
    }
    inner.push((pos, center));
    inner.sort_by_key(|&(c, _)| c);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(inner.len());
    for (c, v) in inner {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    let diag = merged.iter().find(|&&(c, _)| c == pos).map(|&(_, v)| v).unwrap_or(0.0);
    let off: f64 = merged.iter().filter(|&&(c, _)| c != pos).map(|&(_, v)| v.abs()).sum::<f64>()
        + outer.iter().map(|&(_, v)| v.abs()).sum::<f64>();
    let dominant = diag < 0.0 && off <= diag.abs() * (1.0 + 1e-10);
    (merged, outer, dominant)
}

/// Assemble the operator for the Hessian field of `phi` on `mask`.
pub fn assemble(hess_phi: &HermitianField, mask: &DomainMask, mode: StencilMode) -> Result<LinearOperator> {
    if hess_phi.nodes() != mask.interior() {
        return Err(Error::Precondition("Hessian field and mask disagree on the interior".into()));
    }
    for (k, m) in hess_phi.mats().iter().enumerate() {
        let det = m.det();
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::SingularHessian { node: hess_phi.nodes()[k], det });
        }
    }
    let rows: Vec<Row> = (0..mask.n_interior())
        .into_par_iter()
        .map(|pos| {
            let c = real_coefficients(&hess_phi.get(pos).adjugate());
            let coef = line_coefficients(mask, &c, mode);
            assemble_row(mask, &coef, pos)
        })
        .collect();
    let mut inner = Vec::with_capacity(rows.len());
    let mut outer = Vec::with_capacity(rows.len());
    let mut dominant = Vec::with_capacity(rows.len());
    for (i, o, d) in rows {
        inner.push(i);
        outer.push(o);
        dominant.push(d);
    }
    Ok(LinearOperator {
        grid: mask.grid().clone(),
        mode,
        interior: mask.interior().to_vec(),
        a: Csr::from_rows(mask.n_interior(), inner),
        boundary: Csr::from_rows(mask.cuts().len(), outer),
        dominant,
        snapshot: hess_phi.fingerprint(),
    })
}

impl LinearOperator {
    pub fn mode(&self) -> StencilMode {
        self.mode
    }

    pub fn snapshot(&self) -> u64 {
        self.snapshot
    }

    pub fn interior_matrix(&self) -> &Csr {
        &self.a
    }

    pub fn boundary_matrix(&self) -> &Csr {
        &self.boundary
    }

    /// Per-row diagonal dominance with non-negative couplings, aligned with the interior.
    pub fn dominant(&self) -> &[bool] {
        &self.dominant
    }

    pub fn dominant_fraction(&self) -> f64 {
        self.dominant.iter().filter(|&&d| d).count() as f64 / self.dominant.len().max(1) as f64
    }

    pub fn apply(&self, u: &ScalarField, trace: &Trace) -> ScalarField {
        let x: Vec<f64> = self.interior.iter().map(|&i| u.get(i)).collect();
        let mut y = vec![0.0; x.len()];
        self.a.matvec(&x, &mut y);
        let mut yb = vec![0.0; x.len()];
        self.boundary.matvec(trace.values(), &mut yb);
        let mut out = ScalarField::nan(&self.grid);
        for (k, &i) in self.interior.iter().enumerate() {
            out.set(i, y[k] + yb[k]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSolveConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig { tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub field: ScalarField,
    pub trace: Trace,
    pub iterations: usize,
    /// `sup |L u - g| / max(1, sup |g|, sup |bc|)` on the interior.
    pub residual_sup: f64,
    pub dominant_everywhere: bool,
}

/// Interior values of `u` solving `L u = g` with `u = bc` on the cuts; NaN off the interior.
pub fn solve_linear(op: &LinearOperator, g: &ScalarField, bc: &Trace, cfg: &LinearSolveConfig) -> Result<LinearSolution> {
    let n = op.interior.len();
    let mut bb = vec![0.0; n];
    op.boundary.matvec(bc.values(), &mut bb);
    let rhs: Vec<f64> = op.interior.iter().enumerate().map(|(k, &i)| g.get(i) - bb[k]).collect();
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("right-hand side or boundary data not finite".into()));
    }
    let mut x = vec![bc.mean(); n];
    let stats = if n == 0 {
        SolveStats { iterations: 0, relative_residual: 0.0 }
    } else {
        let pre = Ilu0::new(&op.a)?;
        bicgstab(&op.a, &rhs, &mut x, &pre, cfg.tol, cfg.max_iter)?
    };
    let mut field = ScalarField::nan(&op.grid);
    for (k, &i) in op.interior.iter().enumerate() {
        field.set(i, x[k]);
    }
    let lu = op.apply(&field, bc);
    let scale = op
        .interior
        .iter()
        .map(|&i| g.get(i).abs())
        .fold(bc.values().iter().fold(1.0f64, |m, v| m.max(v.abs())), f64::max);
    let residual_sup = op.interior.iter().map(|&i| (lu.get(i) - g.get(i)).abs()).fold(0.0, f64::max) / scale;
    Ok(LinearSolution {
        field,
        trace: bc.clone(),
        iterations: stats.iterations,
        residual_sup,
        dominant_everywhere: op.dominant.iter().all(|&d| d),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub interior_min: f64,
    pub interior_max: f64,
    pub violations: usize,
    pub worst_excess: f64,
}

/// Count interior nodes outside `[min bc, max bc]` beyond `slack`.
pub fn max_principle_check(u: &ScalarField, mask: &DomainMask, bc: &Trace, slack: f64) -> MaxPrincipleReport {
    let (lo, hi) = (bc.min(), bc.max());
    let mut rep = MaxPrincipleReport {
        boundary_min: lo,
        boundary_max: hi,
        interior_min: f64::INFINITY,
        interior_max: f64::NEG_INFINITY,
        violations: 0,
        worst_excess: 0.0,
    };
    for &i in mask.interior() {
        let v = u.get(i);
        rep.interior_min = rep.interior_min.min(v);
        rep.interior_max = rep.interior_max.max(v);
        let excess = (v - hi).max(lo - v);
        if excess > slack {
            rep.violations += 1;
        }
        rep.worst_excess = rep.worst_excess.max(excess);
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuEpsilonReport {
    pub eps4: f64,
    pub nodes: usize,
    pub violations: usize,
    /// `min (lhs - rhs + slack)` over the interior.
    pub worst_margin: f64,
    pub worst_node: usize,
    pub slack: f64,
    /// Nodes where `L u > 10 h^2`, i.e. `u` fails to be a numerical supersolution.
    pub supersolution_violations: usize,
}

/// Pointwise check of `L(-u^e)(x) >= -e(e-1) u^{e-2} |du|^2 det(A) / tr(A)` where
/// `|du|^2 = sum_i |u_i|^2` is the holomorphic gradient and `A` the complex
/// Hessian of `phi`.
pub fn luepsilon_check(
    hess_phi: &HermitianField,
    mask: &DomainMask,
    u: &ScalarField,
    trace_u: &Trace,
    eps4: f64,
) -> Result<LuEpsilonReport> {
    if !(eps4 > 0.0 && eps4 < 1.0) {
        return Err(Error::Precondition(format!("exponent {eps4} outside (0, 1)")));
    }
    if let Some(&i) = mask.interior().iter().find(|&&i| !(u.get(i) > 0.0)) {
        return Err(Error::Precondition(format!("u is not positive at node {i}")));
    }
    if trace_u.values().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition("boundary values of u are not positive".into()));
    }
    let h = mask.grid().spacing();
    let n = mask.grid().n();
    let lu = linearized_apply(hess_phi, mask, u, trace_u)?;
    let v = u.map(|x| -x.powf(eps4));
    let tv = trace_u.map(|x| -x.powf(eps4));
    let lv = linearized_apply(hess_phi, mask, &v, &tv)?;
    let scale = mask.interior().iter().map(|&i| u.get(i)).fold(1.0, f64::max);
    let slack = 50.0 * h * h * scale;
    let mut rep = LuEpsilonReport {
        eps4,
        nodes: mask.n_interior(),
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_node: usize::MAX,
        slack,
        supersolution_violations: 0,
    };
    for (pos, &i) in mask.interior().iter().enumerate() {
        if lu.get(i) > 10.0 * h * h {
            rep.supersolution_violations += 1;
        }
        let a = hess_phi.get(pos);
        let grad = gradient_at(mask, u.values(), trace_u, pos);
        let holo: f64 = (0..n).map(|k| 0.25 * (grad[2 * k].powi(2) + grad[2 * k + 1].powi(2))).sum();
        let ui = u.get(i);
        let rhs = -eps4 * (eps4 - 1.0) * ui.powf(eps4 - 2.0) * holo * a.det() / a.trace();
        let margin = lv.get(i) - rhs + slack;
        if margin < 0.0 {
            rep.violations += 1;
        }
        if margin < rep.worst_margin {
            rep.worst_margin = margin;
            rep.worst_node = i;
        }
    }
    Ok(rep)
}

/// Convenience: Hessian of `phi` with its trace, then assemble.
pub fn assemble_for(phi: &ScalarField, trace: &Trace, mask: &DomainMask, mode: StencilMode) -> Result<LinearOperator> {
    let hess = complex_hessian(mask, phi, trace);
    assemble(&hess, mask, mode)
}
