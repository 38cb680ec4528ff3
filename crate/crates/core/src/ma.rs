//! Damped Newton for `det(phi_{i j-bar}) = f` with Dirichlet data, and the
//! comparison/barrier audits against the reference solution `v0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::grid::{norm_sq, DomainMask, Point};
use crate::lin::{assemble, solve_linear, LinearSolveConfig, StencilMode};
use crate::psh::{complex_hessian, psh_violation, HermitianField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_iters: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub psh_floor: f64,
    pub linear: LinearSolveConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            max_iters: 60,
            initial_step: 1.0,
            backtrack: 0.5,
            min_step: 1e-6,
            psh_floor: 1e-6,
            linear: LinearSolveConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config(format!("newton_tol {} must be positive", self.newton_tol)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!("backtracking ratio {} outside (0, 1)", self.backtrack)));
        }
        if !(self.psh_floor >= 0.0) {
            return Err(Error::Config(format!("psh_floor {} must be non-negative", self.psh_floor)));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(Error::Config(format!("initial step {} outside (0, 1]", self.initial_step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Interior values; NaN elsewhere.
    pub field: ScalarField,
    pub trace: Trace,
    pub hessian: HermitianField,
    pub residual_history: Vec<f64>,
    pub min_eigenvalue: f64,
}

impl Solution {
    pub fn iterations(&self) -> usize {
        self.residual_history.len().saturating_sub(1)
    }

    pub fn residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

fn residual_sup(hess: &HermitianField, f: &ScalarField) -> f64 {
    hess.mats()
        .iter()
        .zip(hess.nodes())
        .map(|(m, &i)| (m.det() - f.get(i)).abs())
        .fold(0.0, f64::max)
}

/// Newton from `initial` (interior values used, boundary taken from `boundary`).
pub fn solve_ma_from(
    mask: &DomainMask,
    f: &ScalarField,
    boundary: &Trace,
    initial: &ScalarField,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    if let Some(&i) = mask.interior().iter().find(|&&i| !(f.get(i) > 0.0 && f.get(i).is_finite())) {
        return Err(Error::Precondition(format!("right-hand side not positive at node {i}")));
    }
    let mut phi = initial.restricted(mask);
    let mut hess = complex_hessian(mask, &phi, boundary);
    let start = psh_violation(&hess);
    if start.min_eigenvalue < config.psh_floor {
        return Err(Error::PshViolation { node: start.worst_node, min_eig: start.min_eigenvalue });
    }
    let mut res = residual_sup(&hess, f);
    let mut history = vec![res];
    let zero_bc = Trace::zeros(mask);
    for _ in 0..config.max_iters {
        if res <= config.newton_tol {
            break;
        }
        let op = assemble(&hess, mask, StencilMode::Central)?;
        let mut rhs = ScalarField::nan(mask.grid());
        for (m, &i) in hess.mats().iter().zip(hess.nodes()) {
            rhs.set(i, f.get(i) - m.det());
        }
        let step = solve_linear(&op, &rhs, &zero_bc, &config.linear)?;
        let mut s = config.initial_step;
        let accepted = loop {
            let trial = phi.zip_with(&step.field, |p, d| p + s * d);
            let th = complex_hessian(mask, &trial, boundary);
            let tr = residual_sup(&th, f);
            let eig = psh_violation(&th).min_eigenvalue;
            if eig >= config.psh_floor && tr < res {
                break Some((trial, th, tr));
            }
            s *= config.backtrack;
            if s < config.min_step {
                break None;
            }
        };
        match accepted {
            Some((p, h, r)) => {
                phi = p;
                hess = h;
                res = r;
                history.push(res);
            }
            None => {
                return Err(Error::Stagnation { iterations: history.len() - 1, history });
            }
        }
    }
    if res > config.newton_tol {
        return Err(Error::Stagnation { iterations: history.len() - 1, history });
    }
    let min_eigenvalue = psh_violation(&hess).min_eigenvalue;
    Ok(Solution { field: phi, trace: boundary.clone(), hessian: hess, residual_history: history, min_eigenvalue })
}

/// `v0` with `det = 1` and zero boundary values, started from `|z|^2 - 1`
/// corrected by the harmonic extension of its boundary values.
pub fn solve_reference(mask: &DomainMask, config: &SolverConfig) -> Result<Solution> {
    let f = ScalarField::constant(mask.grid(), 1.0);
    let q = |p: &Point| norm_sq(p) - 1.0;
    let mut start = ScalarField::from_fn_on(mask, q);
    let misfit = Trace::from_fn(mask, |p| -q(p));
    if misfit.values().iter().any(|v| v.abs() > 1e-14) {
        let ext = harmonic_extension(mask, &misfit, &config.linear)?;
        start = start.zip_with(&ext, |a, b| a + b);
    }
    solve_ma_from(mask, &f, &Trace::zeros(mask), &start, config)
}

fn harmonic_extension(mask: &DomainMask, trace: &Trace, config: &LinearSolveConfig) -> Result<ScalarField> {
    let ident = HermitianField::from_fn(mask, |_| crate::herm::Herm::identity(mask.grid().n()));
    let op = assemble(&ident, mask, StencilMode::Central)?;
    let zero = ScalarField::constant(mask.grid(), 0.0);
    Ok(solve_linear(&op, &zero, trace, config)?.field)
}

/// Dirichlet problem for general `f`, started from `(1 + eps)^{1/n} v0` with
/// `eps = sup |f - 1|`. Non-zero boundary data is added through the harmonic
/// extension of the trace.
pub fn solve_ma(mask: &DomainMask, f: &ScalarField, boundary: &Trace, config: &SolverConfig) -> Result<Solution> {
    let v0 = solve_reference(mask, config)?;
    solve_ma_with_reference(mask, f, boundary, &v0, config)
}

pub fn solve_ma_with_reference(
    mask: &DomainMask,
    f: &ScalarField,
    boundary: &Trace,
    v0: &Solution,
    config: &SolverConfig,
) -> Result<Solution> {
    let n = mask.grid().n() as f64;
    let eps = mask.interior().iter().map(|&i| (f.get(i) - 1.0).abs()).fold(0.0, f64::max);
    let mut start = v0.field.map(|v| (1.0 + eps).powf(1.0 / n) * v);
    if boundary.values().iter().any(|&v| v != 0.0) {
        let ext = harmonic_extension(mask, boundary, &config.linear)?;
        start = start.zip_with(&ext, |a, b| a + b);
    }
    solve_ma_from(mask, f, boundary, &start, config)
}

#[derive(Clone, Debug)]
pub struct ComparisonEnvelope {
    pub lower: ScalarField,
    pub upper: ScalarField,
    pub eps: f64,
}

impl ComparisonEnvelope {
    /// `(1 + eps)^{1/n} v0 <= phi <= (1 - eps)^{1/n} v0`.
    pub fn new(v0: &ScalarField, n: usize, eps: f64) -> ComparisonEnvelope {
        let k = 1.0 / n as f64;
        ComparisonEnvelope {
            lower: v0.map(|v| (1.0 + eps).powf(k) * v),
            upper: v0.map(|v| (1.0 - eps).powf(k) * v),
            eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub eps: f64,
    pub slack: f64,
    /// `min (phi - lower)` over the interior.
    pub lower_margin: f64,
    /// `min (upper - phi)`.
    pub upper_margin: f64,
    /// `min (4 eps - |phi - v0|)`.
    pub distance_margin: f64,
    /// Interior nodes where any margin is below `-slack`.
    pub violations: usize,
    pub worst_node: usize,
}

pub fn comparison_check(phi: &ScalarField, v0: &ScalarField, mask: &DomainMask, eps: f64) -> ComparisonReport {
    let h = mask.grid().spacing();
    let slack = 10.0 * h * h;
    let env = ComparisonEnvelope::new(v0, mask.grid().n(), eps);
    let mut rep = ComparisonReport {
        eps,
        slack,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        distance_margin: f64::INFINITY,
        violations: 0,
        worst_node: usize::MAX,
    };
    let mut worst = f64::INFINITY;
    for &i in mask.interior() {
        let p = phi.get(i);
        let lo = p - env.lower.get(i);
        let up = env.upper.get(i) - p;
        let di = 4.0 * eps - (p - v0.get(i)).abs();
        rep.lower_margin = rep.lower_margin.min(lo);
        rep.upper_margin = rep.upper_margin.min(up);
        rep.distance_margin = rep.distance_margin.min(di);
        let m = lo.min(up).min(di);
        if m < -slack {
            rep.violations += 1;
        }
        if m < worst {
            worst = m;
            rep.worst_node = i;
        }
    }
    rep
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub gamma: f64,
    pub slack: f64,
    /// `min (v0 - (|z|^2 - 1 - 3 gamma))`.
    pub lower_margin: f64,
    /// `min ((|z|^2 - 1 + 3 gamma) - v0)`.
    pub upper_margin: f64,
    pub holds: bool,
}

pub fn barrier_report(v0: &ScalarField, mask: &DomainMask, gamma: f64) -> BarrierReport {
    let g = mask.grid();
    let h = g.spacing();
    let slack = 10.0 * h * h;
    let (mut lo, mut up) = (f64::INFINITY, f64::INFINITY);
    for &i in mask.interior() {
        let q = norm_sq(&g.point(i)) - 1.0;
        let v = v0.get(i);
        lo = lo.min(v - (q - 3.0 * gamma));
        up = up.min((q + 3.0 * gamma) - v);
    }
    BarrierReport { gamma, slack, lower_margin: lo, upper_margin: up, holds: lo >= -slack && up >= -slack }
}

/// `|z|^2 - 1 - 3 gamma <= v0 <= |z|^2 - 1 + 3 gamma` with slack `10 h^2`.
pub fn barrier_check(v0: &ScalarField, mask: &DomainMask, gamma: f64) -> bool {
    barrier_report(v0, mask, gamma).holds
}
