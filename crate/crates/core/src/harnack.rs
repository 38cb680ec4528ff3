//! Measurements on nonnegative solutions of `L_phi u = 0` over sections:
//! critical density, infimum propagation, level-set decay, local sup bounds,
//! Harnack ratios across scales and oscillation decay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{dist, DomainMask, MaMeasure};
use crate::psh::HermitianField;
use crate::sections::{SectionContext, SectionFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnackConfig {
    pub mu0: f64,
    pub c0: f64,
    /// Inner height as a fraction of the outer one in Harnack rows.
    pub inner_ratio: f64,
    /// Minimum node count of the inner set of a Harnack row.
    pub min_inner: usize,
    pub m_sweep: Vec<f64>,
    pub lambda_sweep: Vec<f64>,
    pub eps5: f64,
    /// Exponent for the norm of the ellipticity field.
    pub lambda_p: f64,
    /// Ball radius constant in the level-set decay: radius `mu0^2 / c_ball`.
    pub c_ball: f64,
    pub levels: usize,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        HarnackConfig {
            mu0: 0.3,
            c0: 2.0,
            inner_ratio: 0.5,
            min_inner: 9,
            m_sweep: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            lambda_sweep: vec![0.5, 0.75, 0.9],
            eps5: 0.5,
            lambda_p: 4.0,
            c_ball: 1.0,
            levels: 4,
        }
    }
}

impl HarnackConfig {
    /// `mu0^4 / c0`.
    pub fn tau(&self) -> f64 {
        self.mu0.powi(4) / self.c0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0 < 1.0 && self.c0 > 0.0) {
            return Err(Error::Config("mu0 must lie in (0, 1) and c0 be positive".into()));
        }
        if !(self.inner_ratio > 0.0 && self.inner_ratio < 1.0) {
            return Err(Error::Config(format!("inner ratio {} outside (0, 1)", self.inner_ratio)));
        }
        if self.m_sweep.iter().any(|&m| !(m > 1.0)) || self.lambda_sweep.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::Config("M sweep must exceed 1 and lambda sweep lie in (0, 1)".into()));
        }
        if !(self.eps5 > 0.0 && self.lambda_p > 0.0 && self.c_ball > 0.0 && self.levels >= 2) {
            return Err(Error::Config("eps5, lambda_p and c_ball must be positive, levels >= 2".into()));
        }
        Ok(())
    }
}

fn members_of<'a>(fam: &'a SectionFamily, t: f64) -> impl Iterator<Item = usize> + 'a {
    fam.order[..fam.count(t)].iter().map(|&(_, i)| i)
}

fn sup_inf(u: &ScalarField, nodes: impl Iterator<Item = usize>) -> (f64, f64) {
    nodes.fold((f64::NEG_INFINITY, f64::INFINITY), |(s, i), k| {
        let v = u.get(k);
        (s.max(v), i.min(v))
    })
}

fn require_inside(fam: &SectionFamily, t: f64) -> Result<()> {
    if t >= fam.escape || t > fam.t_max {
        return Err(Error::SectionEscapes { center: fam.center, height: t });
    }
    Ok(())
}

/// Weighted `(1 - lambda)`-quantile: the smallest `m` with `mu{v > m} < lambda mu(S)`.
fn upper_quantile(mut vals: Vec<(f64, f64)>, lambda: f64) -> f64 {
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    for &(v, w) in &vals {
        acc += w;
        if acc >= lambda * total {
            return v;
        }
    }
    vals.last().map_or(f64::NAN, |v| v.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalDensityTable {
    pub center: usize,
    pub t: f64,
    /// `inf u` over `S_{t/2}` before rescaling.
    pub inf_half: f64,
    /// `(M, mu{u > M} / mu(S_t))` after rescaling to `inf = 1`.
    pub sweep: Vec<(f64, f64)>,
    /// `(lambda, smallest M of the sweep with fraction < lambda)`.
    pub picks: Vec<(f64, Option<f64>)>,
    /// `(lambda, smallest real M with fraction < lambda)`.
    pub quantiles: Vec<(f64, f64)>,
}

impl CriticalDensityTable {
    pub fn pick(&self, lambda: f64) -> Option<f64> {
        self.picks.iter().find(|p| p.0 == lambda).and_then(|p| p.1)
    }

    pub fn quantile(&self, lambda: f64) -> Option<f64> {
        self.quantiles.iter().find(|p| p.0 == lambda).map(|p| p.1)
    }
}

pub fn critical_density(
    u: &ScalarField,
    fam: &SectionFamily,
    t: f64,
    mu: &MaMeasure,
    config: &HarnackConfig,
) -> Result<CriticalDensityTable> {
    require_inside(fam, t)?;
    let (_, inf_half) = sup_inf(u, members_of(fam, 0.5 * t));
    if !(inf_half > 0.0) {
        return Err(Error::Precondition(format!("inf over the half section is {inf_half}; cannot rescale")));
    }
    let dens = mu.density();
    let vals: Vec<(f64, f64)> = members_of(fam, t).map(|i| (u.get(i) / inf_half, dens[i])).collect();
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let sweep: Vec<(f64, f64)> = config
        .m_sweep
        .iter()
        .map(|&m| (m, vals.iter().filter(|v| v.0 > m).map(|v| v.1).sum::<f64>() / total))
        .collect();
    let picks = config
        .lambda_sweep
        .iter()
        .map(|&l| (l, sweep.iter().find(|s| s.1 < l).map(|s| s.0)))
        .collect();
    let quantiles = config.lambda_sweep.iter().map(|&l| (l, upper_quantile(vals.clone(), l))).collect();
    Ok(CriticalDensityTable { center: fam.center, t, inf_half, sweep, picks, quantiles })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub center: usize,
    pub t: f64,
    pub inf_t: f64,
    pub inf_2t: f64,
    /// `inf_t / inf_2t`.
    pub l: f64,
}

/// Requires `S_{4t}` inside the domain; `fam` must reach height `4t`.
pub fn inf_propagation(u: &ScalarField, fam: &SectionFamily, t: f64) -> Result<Propagation> {
    require_inside(fam, 4.0 * t)?;
    let (_, inf_t) = sup_inf(u, members_of(fam, t));
    let (_, inf_2t) = sup_inf(u, members_of(fam, 2.0 * t));
    let l = if inf_2t > 0.0 { inf_t / inf_2t } else { f64::INFINITY };
    Ok(Propagation { center: fam.center, t, inf_t, inf_2t, l })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetDecay {
    pub center: usize,
    /// `inf u` over `S_{mu0^3}` used for normalization.
    pub inf_section: f64,
    pub radius: f64,
    /// The ball of radius `radius` lies in `S_{mu0^3}`.
    pub ball_inside: bool,
    pub k: f64,
    pub m: f64,
    /// `mu(E_k intersect S_{k-1})` for `k = 1..=levels + 1`.
    pub masses: Vec<f64>,
    /// Consecutive mass ratios with a non-empty denominator.
    pub ratios: Vec<f64>,
    pub delta0: f64,
    pub p: f64,
    /// `||u||_{L^p}` over the half ball after normalization.
    pub lp_norm: f64,
    /// No level set above the first threshold.
    pub degenerate: bool,
}

impl LevelSetDecay {
    /// `M^p delta0 < 1` with `delta0 < 1`.
    pub fn holds(&self) -> bool {
        self.degenerate || (self.delta0 < 1.0 && self.p > 0.0 && self.m.powf(self.p) * self.delta0 < 1.0)
    }
}

/// Suplevel sets `E_k = {u >= K M^k}` on the shrinking balls
/// `S_k = B_{r (1/2 + 2^{-k-1})}(z0)`, `r = mu0^2 / c_ball`, after scaling
/// `u` to unit infimum on `S_{mu0^3}(z0)`. `K = 1` and `M` is chosen so the
/// thresholds reach the maximum on the outer ball after `levels + 1` steps.
pub fn level_set_decay(
    u: &ScalarField,
    mask: &DomainMask,
    fam: &SectionFamily,
    mu: &MaMeasure,
    config: &HarnackConfig,
) -> Result<LevelSetDecay> {
    let outer = config.mu0.powi(3);
    require_inside(fam, outer)?;
    let g = mask.grid();
    let (_, inf_s) = sup_inf(u, members_of(fam, outer));
    if !(inf_s > 0.0) {
        return Err(Error::Precondition(format!("inf over the section is {inf_s}; cannot normalize")));
    }
    let z0 = g.point(fam.center);
    let r = config.mu0 * config.mu0 / config.c_ball;
    let in_section: std::collections::HashSet<usize> = members_of(fam, outer).collect();
    let ball: Vec<(usize, f64)> = mask
        .interior()
        .iter()
        .map(|&i| (i, dist(&g.point(i), &z0)))
        .filter(|&(_, d)| d <= r)
        .collect();
    let ball_inside = ball.iter().all(|(i, _)| in_section.contains(i));
    let v = |i: usize| u.get(i) / inf_s;
    let vmax = ball.iter().map(|&(i, _)| v(i)).fold(1.0, f64::max);
    let k = 1.0;
    let levels = config.levels;
    let m = vmax.powf(1.0 / (levels as f64 + 1.0)).max(1.0 + 1e-9);
    let radius_k = |k: usize| if k == 0 { r } else { r * (0.5 + 0.5f64.powi(k as i32 + 1)) };
    let dens = mu.density();
    let w = mu.cell_weight();
    let masses: Vec<f64> = (1..=levels + 1)
        .map(|kk| {
            let thr = k * m.powi(kk as i32);
            let rad = radius_k(kk - 1);
            ball.iter().filter(|&&(i, d)| d <= rad && v(i) >= thr).map(|&(i, _)| dens[i] * w).sum()
        })
        .collect();
    let ratios: Vec<f64> = masses.windows(2).filter(|p| p[0] > 0.0).map(|p| p[1] / p[0]).collect();
    let degenerate = masses[0] == 0.0;
    let delta0 = ratios.iter().copied().fold(0.0, f64::max);
    let p = if degenerate {
        f64::INFINITY
    } else if delta0 > 0.0 {
        -delta0.ln() / (2.0 * m.ln())
    } else {
        // Every level beyond the first is empty; any exponent works.
        1.0
    };
    let half: Vec<usize> = ball.iter().filter(|&&(_, d)| d <= 0.5 * r).map(|&(i, _)| i).collect();
    let pe = if p.is_finite() { p } else { 1.0 };
    let lp_norm = half.iter().map(|&i| v(i).powf(pe) * w).sum::<f64>().powf(1.0 / pe);
    Ok(LevelSetDecay {
        center: fam.center,
        inf_section: inf_s,
        radius: r,
        ball_inside,
        k,
        m,
        masses,
        ratios,
        delta0,
        p,
        lp_norm,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupBound {
    pub center: usize,
    pub radius: f64,
    pub sup_half: f64,
    /// `(int_{B_r} u^{eps5})^{1/eps5}` with Lebesgue measure.
    pub norm: f64,
    pub constant: f64,
    /// `L^p` norm over `B_r` of `max(lambda_max, 1 / lambda_min)` of the complex Hessian.
    pub ellipticity_norm: f64,
}

pub fn local_sup_bound(
    u: &ScalarField,
    hess: &HermitianField,
    mask: &DomainMask,
    center: usize,
    radius: f64,
    config: &HarnackConfig,
) -> Result<SupBound> {
    let g = mask.grid();
    let z0 = g.point(center);
    let w = g.cell_volume();
    let mut norm = 0.0;
    let mut sup_half = f64::NEG_INFINITY;
    let mut ell = 0.0;
    let mut any = false;
    for &i in mask.interior() {
        let d = dist(&g.point(i), &z0);
        if d > radius {
            continue;
        }
        any = true;
        let v = u.get(i);
        if v < 0.0 {
            return Err(Error::Precondition(format!("negative value {v} at node {i}")));
        }
        norm += v.powf(config.eps5) * w;
        if d <= 0.5 * radius {
            sup_half = sup_half.max(v);
        }
        let pos = mask.position(i).expect("interior node");
        let e = hess.get(pos).eigenvalues();
        let lam = e[e.len() - 1].max(1.0 / e[0]);
        ell += lam.powf(config.lambda_p) * w;
    }
    if !any {
        return Err(Error::Precondition("ball contains no interior node".into()));
    }
    let norm = norm.powf(1.0 / config.eps5);
    Ok(SupBound {
        center,
        radius,
        sup_half,
        norm,
        constant: sup_half / norm,
        ellipticity_norm: ell.powf(1.0 / config.lambda_p),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// The solution itself.
    Positive,
    /// `sup_{S_t} u - u`.
    FromAbove,
    /// `u - inf_{S_t} u`.
    FromBelow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackRow {
    pub center: usize,
    pub t: f64,
    pub inner: f64,
    pub kind: RowKind,
    pub sup: f64,
    pub inf: f64,
    /// `None` when the infimum is not positive.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub center: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub rows: Vec<HarnackRow>,
    pub skipped: Vec<SkippedRow>,
    pub beta: f64,
    /// `(t, max ratio over rows at t)`, heights descending.
    pub beta_by_band: Vec<(f64, f64)>,
    pub inner_ratio: f64,
}

impl HarnackReport {
    /// Band maxima never grow toward small heights beyond relative `slack`.
    pub fn non_increasing(&self, slack: f64) -> bool {
        self.beta_by_band.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + slack))
    }

    /// Merge reports over several solutions.
    pub fn merge(reports: &[HarnackReport]) -> HarnackReport {
        let mut rows = Vec::new();
        let mut skipped = Vec::new();
        for r in reports {
            rows.extend(r.rows.iter().cloned());
            skipped.extend(r.skipped.iter().cloned());
        }
        let inner_ratio = reports.first().map_or(0.0, |r| r.inner_ratio);
        finish(rows, skipped, inner_ratio)
    }
}

fn finish(rows: Vec<HarnackRow>, skipped: Vec<SkippedRow>, inner_ratio: f64) -> HarnackReport {
    let mut heights: Vec<f64> = rows.iter().map(|r| r.t).collect();
    heights.sort_by(|a, b| b.total_cmp(a));
    heights.dedup();
    let beta_by_band: Vec<(f64, f64)> = heights
        .iter()
        .map(|&t| (t, rows.iter().filter(|r| r.t == t).filter_map(|r| r.ratio).fold(1.0, f64::max)))
        .collect();
    let beta = if rows.iter().any(|r| r.ratio.is_some()) {
        beta_by_band.iter().map(|b| b.1).fold(1.0, f64::max)
    } else {
        f64::NAN
    };
    HarnackReport { rows, skipped, beta, beta_by_band, inner_ratio }
}

fn ratio_of(sup: f64, inf: f64) -> Option<f64> {
    (inf > 0.0).then(|| sup / inf)
}

/// Rows `sup / inf` over `S_{inner_ratio t}` for `u` and for the nonnegative
/// shifts `sup_{S_t} u - u` and `u - inf_{S_t} u`.
pub fn harnack_all_scales(
    u: &ScalarField,
    ctx: &SectionContext,
    centers: &[usize],
    heights: &[f64],
    config: &HarnackConfig,
) -> Result<HarnackReport> {
    config.validate()?;
    let t_max = heights.iter().copied().fold(0.0, f64::max);
    let floor = ctx.floor();
    let kappa = config.inner_ratio;
    let per_center: Vec<(Vec<HarnackRow>, Vec<SkippedRow>)> = centers
        .par_iter()
        .map(|&c| {
            let fam = ctx.family(c, t_max)?;
            let mut rows = Vec::new();
            let mut skipped = Vec::new();
            for &t in heights {
                let skip = |reason: &str| SkippedRow { center: c, t, reason: reason.into() };
                if t >= fam.escape {
                    skipped.push(skip("section escapes the domain"));
                    continue;
                }
                if t <= floor {
                    skipped.push(skip("height below grid floor"));
                    continue;
                }
                let s = kappa * t;
                if fam.count(s) < config.min_inner {
                    skipped.push(skip("inner section has too few nodes"));
                    continue;
                }
                let (big_sup, big_inf) = sup_inf(u, members_of(&fam, t));
                let (sup, inf) = sup_inf(u, members_of(&fam, s));
                let mut push = |kind, sup: f64, inf: f64| {
                    rows.push(HarnackRow { center: c, t, inner: s, kind, sup, inf, ratio: ratio_of(sup, inf) });
                };
                push(RowKind::Positive, sup, inf);
                push(RowKind::FromAbove, big_sup - inf, big_sup - sup);
                push(RowKind::FromBelow, sup - big_inf, inf - big_inf);
            }
            Ok((rows, skipped))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in per_center {
        rows.extend(r);
        skipped.extend(s);
    }
    Ok(finish(rows, skipped, kappa))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub center: usize,
    pub t0: f64,
    pub tau: f64,
    pub heights: Vec<f64>,
    pub osc: Vec<f64>,
    /// Volume radii `(|S| / |B_1|)^{1/d}` of the sections.
    pub radii: Vec<f64>,
    /// Per-level decay ratio fitted from `log osc` against the level.
    pub rho: f64,
    /// Slope of `log osc` against `log radius`.
    pub alpha: f64,
    pub constant: f64,
    /// RMS residual of the `alpha` fit.
    pub residual: f64,
    /// `osc_k` nonincreasing up to `10 h |u|_inf`.
    pub monotone: bool,
    /// Harnack ratio of the shifted solutions between consecutive levels.
    pub level_beta: Vec<Option<f64>>,
}

fn unit_ball_volume(d: usize) -> f64 {
    match d {
        2 => std::f64::consts::PI,
        4 => std::f64::consts::PI.powi(2) / 2.0,
        _ => {
            // Gamma-free recursion V_d = 2 pi / d V_{d-2}.
            let (mut v, mut k) = if d.is_multiple_of(2) { (1.0, 0) } else { (2.0, 1) };
            while k < d {
                k += 2;
                v *= std::f64::consts::TAU / k as f64;
            }
            v
        }
    }
}

/// Least squares `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let res = (x.iter().zip(y).map(|(p, q)| (q - a - b * p).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, res)
}

/// Oscillation of `u` over `S_{tau^k t0}(z)` for `k = 0..levels` above the grid floor.
pub fn oscillation_decay(
    u: &ScalarField,
    ctx: &SectionContext,
    z: usize,
    t0: f64,
    tau: f64,
    levels: usize,
) -> Result<HolderFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("tau {tau} outside (0, 1)")));
    }
    let fam = ctx.family(z, t0)?;
    require_inside(&fam, t0)?;
    let g = ctx.grid();
    let floor = ctx.floor();
    let interior = ctx.mask.interior();
    let base = u.min_on(interior);
    let ubar = u.map(|v| v - base);
    let mut heights = Vec::new();
    let mut t = t0;
    while t > floor && heights.len() < levels {
        heights.push(t);
        t *= tau;
    }
    if heights.len() < 3 {
        return Err(Error::InsufficientScales { levels: heights.len() });
    }
    let vol = unit_ball_volume(g.dim());
    let mut osc = Vec::new();
    let mut radii = Vec::new();
    let mut extremes = Vec::new();
    for &t in &heights {
        let (s, i) = sup_inf(&ubar, members_of(&fam, t));
        osc.push(s - i);
        extremes.push((s, i));
        radii.push((fam.count(t) as f64 * g.cell_volume() / vol).powf(1.0 / g.dim() as f64));
    }
    let level_beta = extremes
        .windows(2)
        .map(|w| {
            let ((big_s, big_i), (s, i)) = (w[0], w[1]);
            let above = ratio_of(big_s - i, big_s - s);
            let below = ratio_of(s - big_i, i - big_i);
            match (above, below) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            }
        })
        .collect();
    let slack = 10.0 * g.spacing() * u.max_abs_on(interior);
    let monotone = osc.windows(2).all(|w| w[1] <= w[0] + slack);
    let ks: Vec<f64> = (0..osc.len()).map(|k| k as f64).collect();
    let logo: Vec<f64> = osc.iter().map(|o| o.max(f64::MIN_POSITIVE).ln()).collect();
    let (_, slope_k, _) = linear_fit(&ks, &logo);
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let (a, alpha, residual) = linear_fit(&logr, &logo);
    Ok(HolderFit {
        center: z,
        t0,
        tau,
        heights,
        osc,
        radii,
        rho: slope_k.exp(),
        alpha,
        constant: a.exp(),
        residual,
        monotone,
        level_beta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongerDensity {
    pub center: usize,
    pub t: f64,
    pub alpha: f64,
    /// `mu{u > alpha} >= lambda mu(S_t)`.
    pub hypothesis: bool,
    pub inf: f64,
    /// `alpha / (M1 L^2)`.
    pub bound: f64,
    pub holds: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn stronger_critical_density(
    u: &ScalarField,
    fam: &SectionFamily,
    t: f64,
    mu: &MaMeasure,
    alpha: f64,
    lambda: f64,
    m1: f64,
    l: f64,
) -> Result<StrongerDensity> {
    require_inside(fam, 4.0 * t)?;
    let dens = mu.density();
    let (mut above, mut total) = (0.0, 0.0);
    let mut inf = f64::INFINITY;
    for i in members_of(fam, t) {
        let v = u.get(i);
        total += dens[i];
        if v > alpha {
            above += dens[i];
        }
        inf = inf.min(v);
    }
    let hypothesis = above >= lambda * total;
    let bound = alpha / (m1 * l * l);
    Ok(StrongerDensity { center: fam.center, t, alpha, hypothesis, inf, bound, holds: !hypothesis || inf >= bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightConstants {
    pub lambda: f64,
    pub theta: f64,
    pub m0: f64,
    pub l: f64,
    /// Exponent fitted from level-set decay.
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightBound {
    pub hypothesis: bool,
    /// `theta t (M0 L / alpha)^{1/delta}`.
    pub bound: f64,
    pub h: f64,
    pub holds: bool,
}

/// `u` must satisfy `inf_{S_t(z)} u <= 1`; `y` must lie in `S_t(z)`.
#[allow(clippy::too_many_arguments)]
pub fn height_bound_check(
    u: &ScalarField,
    ctx: &SectionContext,
    mu: &MaMeasure,
    z: usize,
    t: f64,
    y: usize,
    h: f64,
    alpha: f64,
    k: &HeightConstants,
) -> Result<HeightBound> {
    let fam = ctx.family(z, t)?;
    require_inside(&fam, t)?;
    let (_, inf) = sup_inf(u, members_of(&fam, t));
    if inf > 1.0 {
        return Err(Error::Precondition(format!("inf over the section is {inf} > 1")));
    }
    if !members_of(&fam, t).any(|i| i == y) {
        return Err(Error::Precondition(format!("node {y} is not in the section")));
    }
    if !(h < k.theta * t) {
        return Err(Error::Precondition(format!("height {h} not below theta t")));
    }
    let fy = ctx.family(y, h)?;
    require_inside(&fy, h)?;
    let dens = mu.density();
    let (mut above, mut total) = (0.0, 0.0);
    for i in members_of(&fy, h) {
        total += dens[i];
        if u.get(i) > alpha {
            above += dens[i];
        }
    }
    let hypothesis = above >= k.lambda * total;
    let bound = k.theta * t * (k.m0 * k.l / alpha).powf(1.0 / k.delta);
    Ok(HeightBound { hypothesis, bound, h, holds: !hypothesis || h <= bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSixReport {
    /// Max of the renormalized potential over `S_{t/2}`.
    pub phi_max_half: f64,
    /// Min of `u + 6 phi~` over `S_{t/2}` with `u` scaled to unit infimum there.
    pub min_combination: f64,
    pub phi_ok: bool,
    pub combination_ok: bool,
}

/// With `phi~ = (phi - h - phi(x0) - t) / (t |det T|^{2/n})`, checks
/// `phi~ <= -1/3` on `S_{t/2}` and `u + 6 phi~ <= -1` somewhere there.
pub fn alpha_six_diagnostic(u: &ScalarField, ctx: &SectionContext, x0: usize, t: f64) -> Result<AlphaSixReport> {
    let fam = ctx.family(x0, t)?;
    let section = ctx.section_from_family(&fam, t)?;
    let g = ctx.grid();
    let denom = t * section.map.det_abs().powf(2.0 / g.n() as f64);
    let (_, inf) = sup_inf(u, members_of(&fam, 0.5 * t));
    if !(inf > 0.0) {
        return Err(Error::Precondition(format!("inf over the half section is {inf}")));
    }
    let mut phi_max: f64 = f64::NEG_INFINITY;
    let mut comb: f64 = f64::INFINITY;
    for i in members_of(&fam, 0.5 * t) {
        let p = g.point(i);
        let pt = (ctx.phi.get(i) - fam.poly.eval(&p) - fam.base_value - t) / denom;
        phi_max = phi_max.max(pt);
        comb = comb.min(u.get(i) / inf + 6.0 * pt);
    }
    Ok(AlphaSixReport {
        phi_max_half: phi_max,
        min_combination: comb,
        phi_ok: phi_max <= -1.0 / 3.0,
        combination_ok: comb <= -1.0,
    })
}

/// Interior nodes with `u >= threshold` inside the ball of radius `radius` about the origin.
pub fn level_set(u: &ScalarField, mask: &DomainMask, threshold: f64, radius: f64) -> Vec<bool> {
    let g = mask.grid();
    let mut out = vec![false; g.len()];
    for &i in mask.interior() {
        if u.get(i) >= threshold && crate::grid::norm_sq(&g.point(i)) <= radius * radius {
            out[i] = true;
        }
    }
    out
}

/// Constants valid across a family of solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformConstants {
    pub lambda: f64,
    /// Largest per-instance pick; `None` if some instance has no valid `M`.
    pub m1: Option<f64>,
    pub l: f64,
    /// Instances without a valid pick.
    pub missing: usize,
}

pub fn uniform_constants(tables: &[CriticalDensityTable], props: &[Propagation], lambda: f64) -> UniformConstants {
    if tables.is_empty() || props.is_empty() {
        return UniformConstants { lambda, m1: None, l: f64::NAN, missing: 0 };
    }
    let mut m1: Option<f64> = Some(1.0);
    let mut missing = 0;
    for t in tables {
        match t.pick(lambda) {
            Some(m) => m1 = m1.map(|v| v.max(m)),
            None => missing += 1,
        }
    }
    if missing > 0 {
        m1 = None;
    }
    let l = props.iter().map(|p| p.l).fold(1.0, f64::max);
    UniformConstants { lambda, m1, l, missing }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Trace;
    use crate::grid::{norm_sq, Grid};

    fn setup(res: usize) -> (DomainMask, ScalarField, Trace) {
        let g = Grid::build(1, res, 1.1).unwrap();
        let mask = DomainMask::ball(&g, 0.0, None).unwrap();
        let phi = ScalarField::from_fn_on(&mask, |p| norm_sq(p) - 1.0);
        let tr = Trace::zeros(&mask);
        (mask, phi, tr)
    }

    #[test]
    fn constant_solution_is_trivial() {
        let (mask, phi, tr) = setup(65);
        let ctx = SectionContext::new(&mask, &phi, &tr);
        let mu = MaMeasure::lebesgue(&mask);
        let u = ScalarField::constant(mask.grid(), 3.0);
        let c = mask.grid().nearest(&[0.0; 4]).unwrap().0;
        let fam = ctx.family(c, 0.4).unwrap();
        let cd = critical_density(&u, &fam, 0.1, &mu, &HarnackConfig::default()).unwrap();
        assert!(cd.sweep.iter().all(|s| s.1 == 0.0));
        let pr = inf_propagation(&u, &fam, 0.05).unwrap();
        assert_eq!(pr.l, 1.0);
        let rep = harnack_all_scales(&u, &ctx, &[c], &[0.1, 0.05], &HarnackConfig::default()).unwrap();
        assert!(rep.rows.iter().filter(|r| r.kind == RowKind::Positive).all(|r| r.ratio == Some(1.0)));
    }

    #[test]
    fn quantile_matches_sorted_count() {
        let vals = vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)];
        // mu{v > 3} = 1 < 0.5 * 4, mu{v > 2} = 2 is not.
        assert_eq!(upper_quantile(vals, 0.5), 3.0);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r) = linear_fit(&x, &y);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(6) - std::f64::consts::PI.powi(3) / 6.0).abs() < 1e-12);
    }
}
