//! Covering selection and Calderon-Zygmund decomposition of node sets by sections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_sq, DomainMask, MaMeasure, Point};
use crate::sections::{SectionContext, SectionFamily};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CzParams {
    /// Target density.
    pub delta: f64,
    pub eps2: f64,
    pub sigma: f64,
    pub mu0: f64,
    /// Constant in the inflation `1 + c sqrt(sigma)`.
    pub c: f64,
}

impl Default for CzParams {
    fn default() -> Self {
        CzParams { delta: 0.5, eps2: 0.1, sigma: 0.05, mu0: 0.4, c: 1.0 }
    }
}

impl CzParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.eps2 > 0.0 && self.eps2 <= (-1.0f64).exp()) {
            return Err(Error::Config(format!("eps2 {} outside (0, 1/e]", self.eps2)));
        }
        if !(self.mu0 > 0.0 && self.mu0 <= 0.5) {
            return Err(Error::Config(format!("mu0 {} outside (0, 1/2]", self.mu0)));
        }
        if !(self.sigma >= 0.0 && self.sigma < 1.0 && self.c >= 0.0) {
            return Err(Error::Config("sigma must lie in [0, 1) and c be non-negative".into()));
        }
        Ok(())
    }

    pub fn inflation(&self) -> f64 {
        1.0 + self.c * self.sigma.sqrt()
    }

    /// Upper end of the band where the density must stay below `delta`.
    pub fn upper(&self) -> f64 {
        self.mu0.powi(3)
    }

    /// Cap for stopping heights.
    pub fn stop_cap(&self) -> f64 {
        self.mu0.powi(4)
    }

    /// Lower bound on section densities: `(1 - c sqrt(sigma)) delta`.
    pub fn density_floor(&self) -> f64 {
        (1.0 - self.c * self.sigma.sqrt()) * self.delta
    }
}

/// Node sets described geometrically, resolved against a mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSpec {
    Nodes { nodes: Vec<usize> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Ball intersected with `{<x - center, normal> >= offset}`.
    HalfBall { center: Vec<f64>, radius: f64, normal: Vec<f64>, offset: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    Union { sets: Vec<SetSpec> },
}

fn as_point(v: &[f64]) -> Point {
    let mut p = [0.0; 4];
    for (a, b) in p.iter_mut().zip(v) {
        *a = *b;
    }
    p
}

impl SetSpec {
    fn contains(&self, p: &Point) -> bool {
        let offset = |c: &[f64]| {
            let c = as_point(c);
            [p[0] - c[0], p[1] - c[1], p[2] - c[2], p[3] - c[3]]
        };
        match self {
            SetSpec::Nodes { .. } => false,
            SetSpec::Ball { center, radius } => norm_sq(&offset(center)) <= radius * radius,
            SetSpec::HalfBall { center, radius, normal, offset: o } => {
                let d = offset(center);
                let nrm = as_point(normal);
                let s: f64 = d.iter().zip(&nrm).map(|(a, b)| a * b).sum();
                norm_sq(&d) <= radius * radius && s >= *o
            }
            SetSpec::Annulus { center, inner, outer } => {
                let r2 = norm_sq(&offset(center));
                r2 >= inner * inner && r2 <= outer * outer
            }
            SetSpec::Union { sets } => sets.iter().any(|s| s.contains(p)),
        }
    }

    fn mark(&self, mask: &DomainMask, out: &mut [bool]) {
        match self {
            SetSpec::Nodes { nodes } => {
                for &i in nodes {
                    if i < out.len() && mask.is_interior(i) {
                        out[i] = true;
                    }
                }
            }
            SetSpec::Union { sets } => sets.iter().for_each(|s| s.mark(mask, out)),
            _ => {
                let g = mask.grid();
                for &i in mask.interior() {
                    if self.contains(&g.point(i)) {
                        out[i] = true;
                    }
                }
            }
        }
    }

    /// Indicator over all grid nodes; only interior nodes can be members.
    pub fn resolve(&self, mask: &DomainMask) -> Vec<bool> {
        let mut out = vec![false; mask.grid().len()];
        self.mark(mask, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Stopping {
    Stopped { t: f64, density: f64 },
    /// Density exceeds `delta` at `height` in `(mu0^4, mu0^3]`.
    HypothesisFails { height: f64, density: f64 },
    BelowFloor { t: f64 },
    /// Density below `delta` at every height up to `mu0^4`.
    NeverDense,
    /// The section at `mu0^3` leaves the domain.
    Escapes { height: f64 },
}

impl Stopping {
    pub fn height(&self) -> Option<f64> {
        match self {
            Stopping::Stopped { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// Largest height `t <= mu0^4` with density at least `delta`, after checking
/// the density stays at most `delta` on `(mu0^4, mu0^3]`.
///
/// The density is piecewise constant between consecutive join heights, so
/// every height is examined exactly; the returned height is the last float
/// below the next join, where the density still meets the target.
pub fn stopping_height(
    ctx: &SectionContext,
    mu: &MaMeasure,
    x: usize,
    in_set: &[bool],
    params: &CzParams,
) -> Result<Stopping> {
    let upper = params.upper();
    let fam = ctx.family(x, upper)?;
    if fam.escape <= upper {
        return Ok(Stopping::Escapes { height: fam.escape });
    }
    Ok(scan_family(&fam, mu, in_set, params, ctx.floor()))
}

fn scan_family(fam: &SectionFamily, mu: &MaMeasure, in_set: &[bool], params: &CzParams, floor: f64) -> Stopping {
    let (upper, cap, delta) = (params.upper(), params.stop_cap(), params.delta);
    let dens = mu.density();
    let (mut num, mut den) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    let order = &fam.order;
    for k in 0..order.len() {
        let (j, i) = order[k];
        den += dens[i];
        if in_set[i] {
            num += dens[i];
        }
        let next = order.get(k + 1).map_or(f64::INFINITY, |e| e.0);
        if next == j {
            continue;
        }
        let d = if den > 0.0 { num / den } else { 0.0 };
        if next > cap && j <= upper && d > delta {
            return Stopping::HypothesisFails { height: j.max(cap), density: d };
        }
        if j <= cap && d >= delta {
            let t = if next <= cap { next.next_down().max(j) } else { cap };
            best = Some((t, d));
        }
    }
    match best {
        None => Stopping::NeverDense,
        Some((t, _)) if t <= floor => Stopping::BelowFloor { t },
        Some((t, density)) => Stopping::Stopped { t, density },
    }
}

/// Selected section with its member sweep truncated at `height`.
#[derive(Clone, Debug)]
pub struct Selected {
    pub center: usize,
    pub height: f64,
    pub family: SectionFamily,
}

impl Selected {
    pub fn members(&self) -> Vec<usize> {
        self.family.members(self.height)
    }

    pub fn shrunk_members(&self, eps2: f64) -> Vec<usize> {
        self.family.members((1.0 - eps2) * self.height)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapProfile {
    pub eps2: f64,
    /// `histogram[m]` counts nodes lying in exactly `m` shrunk sections.
    pub histogram: Vec<usize>,
    pub max: usize,
}

impl OverlapProfile {
    /// `max / log(1 / eps2)`.
    pub fn ratio(&self) -> f64 {
        self.max as f64 / (1.0 / self.eps2).ln()
    }
}

pub fn overlap_profile(len: usize, selected: &[Selected], eps2: f64) -> OverlapProfile {
    let mut count = vec![0usize; len];
    for s in selected {
        for i in s.shrunk_members(eps2) {
            count[i] += 1;
        }
    }
    let max = count.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0usize; max + 1];
    for c in count {
        histogram[c] += 1;
    }
    histogram[0] = 0;
    OverlapProfile { eps2, histogram, max }
}

/// Band index `k` with `t` in `(2^{-k-1}, 2^{-k}]`.
pub fn generation(t: f64) -> i32 {
    let k = (-t.log2()).floor() as i32;
    // Exact powers of two belong to the band they close.
    if (2.0f64).powi(-k) < t {
        k - 1
    } else {
        k
    }
}

#[derive(Clone, Debug)]
pub struct Subfamily {
    pub selected: Vec<Selected>,
    pub overlap: OverlapProfile,
    /// Candidate centers not covered by the union.
    pub uncovered: Vec<usize>,
    /// Candidates whose section left the domain.
    pub escaped: Vec<usize>,
}

/// Greedy selection: candidates sorted by generation, then node index; a
/// candidate is kept iff its center lies outside every section kept so far.
pub fn select_subfamily(ctx: &SectionContext, candidates: &[(usize, f64)], eps2: f64) -> Result<Subfamily> {
    if let Some(&(x, t)) = candidates.iter().find(|&&(_, t)| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Precondition(format!("height {t} at node {x} must be positive")));
    }
    let len = ctx.grid().len();
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| generation(a.1).cmp(&generation(b.1)).then(a.0.cmp(&b.0)));
    let mut covered = vec![false; len];
    let mut selected = Vec::new();
    let mut escaped = Vec::new();
    for &(x, t) in &sorted {
        if covered[x] {
            continue;
        }
        let family = ctx.family(x, t)?;
        if t >= family.escape {
            escaped.push(x);
            continue;
        }
        for i in family.members(t) {
            covered[i] = true;
        }
        selected.push(Selected { center: x, height: t, family });
    }
    let uncovered = candidates.iter().map(|c| c.0).filter(|&x| !covered[x]).collect();
    let overlap = overlap_profile(len, &selected, eps2);
    Ok(Subfamily { selected, overlap, uncovered, escaped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub id: usize,
    pub center: usize,
    pub center_point: Vec<f64>,
    /// Stopping height at the center.
    pub t_x: f64,
    /// Height used, `inflation * t_x`.
    pub height: f64,
    pub members: usize,
    pub density: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CzDiagnostics {
    pub points: usize,
    pub stopped: usize,
    pub hypothesis_fails: Vec<usize>,
    pub below_floor: usize,
    pub never_dense: usize,
    pub escapes: usize,
    pub escaped_selections: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzCover {
    pub params: CzParams,
    pub inflation: f64,
    pub sections: Vec<CoverEntry>,
    pub overlap: OverlapProfile,
    /// `mu(A) / mu(union)`; `None` for an empty cover.
    pub delta0: Option<f64>,
    /// Measure fraction of A outside the union.
    pub uncovered_fraction: f64,
    pub min_density: f64,
    pub max_density: f64,
    /// Every section density lies in `[(1 - c sqrt(sigma)) delta, delta]`.
    pub densities_in_band: bool,
    pub diagnostics: CzDiagnostics,
    #[serde(skip)]
    pub member_sets: Vec<Vec<usize>>,
}

pub fn cz_decompose(ctx: &SectionContext, mu: &MaMeasure, in_set: &[bool], params: &CzParams) -> Result<CzCover> {
    params.validate()?;
    let g = ctx.grid();
    if in_set.len() != g.len() {
        return Err(Error::Precondition("set indicator length differs from grid".into()));
    }
    let points: Vec<usize> = ctx.mask.interior().iter().copied().filter(|&i| in_set[i]).collect();
    if let Some(&i) = points.iter().find(|&&i| norm_sq(&g.point(i)) > 0.25 + 1e-12) {
        return Err(Error::Precondition(format!("node {i} of the set lies outside the ball of radius 1/2")));
    }
    let outcomes: Vec<Stopping> = points
        .par_iter()
        .map(|&x| stopping_height(ctx, mu, x, in_set, params))
        .collect::<Result<_>>()?;
    let mut diag = CzDiagnostics { points: points.len(), ..Default::default() };
    let lambda = params.inflation();
    let mut candidates = Vec::new();
    let mut stop_at = std::collections::HashMap::new();
    for (&x, o) in points.iter().zip(&outcomes) {
        match *o {
            Stopping::Stopped { t, .. } => {
                diag.stopped += 1;
                candidates.push((x, lambda * t));
                stop_at.insert(x, t);
            }
            Stopping::HypothesisFails { .. } => diag.hypothesis_fails.push(x),
            Stopping::BelowFloor { .. } => diag.below_floor += 1,
            Stopping::NeverDense => diag.never_dense += 1,
            Stopping::Escapes { .. } => diag.escapes += 1,
        }
    }
    let sub = select_subfamily(ctx, &candidates, params.eps2)?;
    diag.escaped_selections = sub.escaped.len();

    let mut union = vec![false; g.len()];
    let mut sections = Vec::with_capacity(sub.selected.len());
    let mut member_sets = Vec::with_capacity(sub.selected.len());
    for (id, s) in sub.selected.iter().enumerate() {
        let members = s.members();
        for &i in &members {
            union[i] = true;
        }
        sections.push(CoverEntry {
            id,
            center: s.center,
            center_point: g.point(s.center)[..g.dim()].to_vec(),
            t_x: stop_at[&s.center],
            height: s.height,
            members: members.len(),
            density: s.family.density_in(s.height, mu, in_set),
        });
        member_sets.push(members);
    }
    let mu_a = mu.integrate(&points);
    let mu_union = mu.integrate_where(|i| union[i]);
    let mu_out = mu.integrate_where(|i| in_set[i] && !union[i]);
    let delta0 = if sections.is_empty() { None } else { Some(mu_a / mu_union) };
    let min_density = sections.iter().map(|s| s.density).fold(f64::INFINITY, f64::min);
    let max_density = sections.iter().map(|s| s.density).fold(f64::NEG_INFINITY, f64::max);
    let floor = params.density_floor();
    let densities_in_band =
        sections.iter().all(|s| s.density >= floor * (1.0 - 1e-12) && s.density <= params.delta * (1.0 + 1e-12));
    Ok(CzCover {
        params: *params,
        inflation: lambda,
        sections,
        overlap: sub.overlap,
        delta0,
        uncovered_fraction: if mu_a > 0.0 { mu_out / mu_a } else { 0.0 },
        min_density,
        max_density,
        densities_in_band,
        diagnostics: diag,
        member_sets,
    })
}

/// Overlap profiles of the cover's sections for several shrink factors.
pub fn overlap_sweep(ctx: &SectionContext, cover: &CzCover, eps2s: &[f64]) -> Result<Vec<OverlapProfile>> {
    let selected: Vec<Selected> = cover
        .sections
        .iter()
        .map(|s| Ok(Selected { center: s.center, height: s.height, family: ctx.family(s.center, s.height)? }))
        .collect::<Result<_>>()?;
    Ok(eps2s.iter().map(|&e| overlap_profile(ctx.grid().len(), &selected, e)).collect())
}

/// Smallest `K` with `max overlap <= K log(1 / eps2)` over all profiles.
pub fn fit_overlap_constant(profiles: &[OverlapProfile]) -> f64 {
    profiles.iter().map(OverlapProfile::ratio).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityPointKind {
    /// Densities approach one.
    Density,
    /// Densities approach zero.
    Isolated,
    Intermediate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityLimitReport {
    pub center: usize,
    pub heights: Vec<f64>,
    pub densities: Vec<f64>,
    pub limit: f64,
    pub kind: DensityPointKind,
}

/// Density of the set in `S_t(x)` for `t = t_start 2^{-k}` down to the grid floor.
pub fn density_limit_check(
    ctx: &SectionContext,
    mu: &MaMeasure,
    in_set: &[bool],
    x: usize,
    t_start: f64,
) -> Result<DensityLimitReport> {
    let fam = ctx.family(x, t_start)?;
    let floor = ctx.floor();
    let mut heights = Vec::new();
    let mut densities = Vec::new();
    let mut t = t_start.min(fam.escape.next_down());
    while t > floor {
        heights.push(t);
        densities.push(fam.density_in(t, mu, in_set));
        t *= 0.5;
    }
    if heights.is_empty() {
        return Err(Error::BelowGridFloor { center: x, height: t_start, floor });
    }
    let limit = *densities.last().unwrap();
    let kind = if limit >= 0.9 {
        DensityPointKind::Density
    } else if limit <= 0.1 {
        DensityPointKind::Isolated
    } else {
        DensityPointKind::Intermediate
    };
    Ok(DensityLimitReport { center: x, heights, densities, limit, kind })
}
