//! Sections `S_t(x0)`: the connected component containing `x0` of
//! `{phi - h_{x0} <= phi(x0) + t}`, with fitted ellipsoids and normalizing maps.
//!
//! For a fixed center, each interior node joins the component at the smallest
//! height admitting a path from `x0` along which the level stays below that
//! height. Sorting nodes by join height makes every section a prefix, so all
//! heights at one center are served by a single sweep.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::grid::{dist, DomainMask, Grid, MaMeasure, Point, MAX_DIM};
use crate::herm::{to_complex, to_real, CMat, Herm, C64};
use crate::psh::{pluriharmonic_at, AffineMap, PluriharmonicPoly};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionConfig {
    /// Heights must exceed `(floor_factor * h)^2`.
    pub floor_factor: f64,
    /// Minimum member count; `None` means `5^{2n}`.
    pub min_members: Option<usize>,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig { floor_factor: 10.0, min_members: None }
    }
}

impl SectionConfig {
    pub fn floor(&self, grid: &Grid) -> f64 {
        (self.floor_factor * grid.spacing()).powi(2)
    }

    pub fn min_members(&self, grid: &Grid) -> usize {
        self.min_members.unwrap_or_else(|| 5usize.pow(grid.dim() as u32))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (height, node).
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All sections at one center up to a height cap.
#[derive(Clone, Debug)]
pub struct SectionFamily {
    pub center: usize,
    pub poly: PluriharmonicPoly,
    pub base_value: f64,
    /// `(join height, node)` in nondecreasing join order.
    pub order: Vec<(f64, usize)>,
    /// Smallest height at which the component reaches a node next to the
    /// boundary; sections at or above it escape.
    pub escape: f64,
    pub t_max: f64,
}

impl SectionFamily {
    pub fn count(&self, t: f64) -> usize {
        self.order.partition_point(|&(j, _)| j <= t)
    }

    /// Sorted member indices of `S_t`.
    pub fn members(&self, t: f64) -> Vec<usize> {
        let mut m: Vec<usize> = self.order[..self.count(t)].iter().map(|&(_, i)| i).collect();
        m.sort_unstable();
        m
    }

    pub fn measure(&self, t: f64, mu: &MaMeasure) -> f64 {
        self.order[..self.count(t)].iter().map(|&(_, i)| mu.density()[i]).sum::<f64>() * mu.cell_weight()
    }

    /// `mu(S_t intersect A) / mu(S_t)`.
    pub fn density_in(&self, t: f64, mu: &MaMeasure, in_set: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &(_, i) in &self.order[..self.count(t)] {
            let w = mu.density()[i];
            den += w;
            if in_set[i] {
                num += w;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub fn valid(&self, t: f64) -> bool {
        t < self.escape && t <= self.t_max
    }

    /// Join height of `node`, if reached.
    pub fn join_height(&self, node: usize) -> Option<f64> {
        self.order.iter().find(|&&(_, i)| i == node).map(|&(j, _)| j)
    }
}

/// Fitted ellipsoid `{x : q_a(x - x0) <= t}` with `det a = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipsoid {
    pub a: Herm,
    pub sigma: f64,
    pub outer: f64,
    pub inner: f64,
}

#[derive(Clone, Debug)]
pub struct Section {
    pub center: usize,
    pub center_point: Point,
    pub height: f64,
    pub poly: PluriharmonicPoly,
    pub base_value: f64,
    /// Sorted member indices.
    pub members: Vec<usize>,
    pub ellipsoid: Ellipsoid,
    pub map: AffineMap,
    /// Nodes satisfying the sublevel inequality outside the component.
    pub excluded: usize,
}

impl Section {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn poly(&self) -> &PluriharmonicPoly {
        &self.poly
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn sigma(&self) -> f64 {
        self.ellipsoid.sigma
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// `(1 / sqrt(t)) T^{-1} (p - x0)`.
    pub fn normalized(&self, p: &Point) -> Point {
        self.map.inverse().apply(p)
    }

    pub fn record(&self) -> SectionRecord {
        let a = self.ellipsoid.a;
        let n = a.n();
        let mut matrix = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                matrix.push([a.get(i, j).re, a.get(i, j).im]);
            }
        }
        SectionRecord {
            center: self.center,
            center_point: self.center_point[..2 * n].to_vec(),
            t: self.height,
            poly: self.poly.clone(),
            ellipsoid: matrix,
            sigma: self.ellipsoid.sigma,
            members: self.members.len(),
            excluded: self.excluded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub center: usize,
    pub center_point: Vec<f64>,
    pub t: f64,
    pub poly: PluriharmonicPoly,
    /// Row-major `(re, im)` pairs.
    pub ellipsoid: Vec<[f64; 2]>,
    pub sigma: f64,
    pub members: usize,
    pub excluded: usize,
}

/// Potential with its boundary data, ready for section queries.
pub struct SectionContext<'a> {
    pub mask: &'a DomainMask,
    pub phi: &'a ScalarField,
    pub trace: &'a Trace,
    pub config: SectionConfig,
}

impl<'a> SectionContext<'a> {
    pub fn new(mask: &'a DomainMask, phi: &'a ScalarField, trace: &'a Trace) -> SectionContext<'a> {
        SectionContext { mask, phi, trace, config: SectionConfig::default() }
    }

    pub fn with_config(mut self, config: SectionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.mask.grid()
    }

    pub fn floor(&self) -> f64 {
        self.config.floor(self.grid())
    }

    pub fn poly(&self, x0: usize) -> Result<PluriharmonicPoly> {
        pluriharmonic_at(self.mask, self.phi, self.trace, x0)
    }

    pub fn family(&self, x0: usize, t_max: f64) -> Result<SectionFamily> {
        let poly = self.poly(x0)?;
        Ok(self.family_with_poly(x0, poly, t_max))
    }

    /// Sweep with an explicit affine-pluriharmonic part (zero gives plain sublevel sets).
    pub fn family_with_poly(&self, x0: usize, poly: PluriharmonicPoly, t_max: f64) -> SectionFamily {
        let g = self.grid();
        let base = self.phi.get(x0);
        let level = |i: usize| self.phi.get(i) - poly.eval(&g.point(i)) - base;
        let mut seen = vec![false; g.len()];
        let mut heap = BinaryHeap::new();
        let mut order = Vec::new();
        let mut escape = f64::INFINITY;
        heap.push(Key(level(x0).max(0.0), x0));
        seen[x0] = true;
        while let Some(Key(j, i)) = heap.pop() {
            if j > t_max || j >= escape {
                break;
            }
            order.push((j, i));
            for nb in g.face_neighbors(i) {
                if !self.mask.is_interior(nb) {
                    escape = escape.min(j);
                    continue;
                }
                if !seen[nb] {
                    seen[nb] = true;
                    heap.push(Key(j.max(level(nb)), nb));
                }
            }
        }
        if escape.is_finite() {
            let cut = order.partition_point(|&(j, _)| j < escape);
            order.truncate(cut);
        }
        SectionFamily { center: x0, poly, base_value: base, order, escape, t_max }
    }

    pub fn build(&self, x0: usize, t: f64) -> Result<Section> {
        if !self.mask.is_interior(x0) {
            return Err(Error::Precondition(format!("center {x0} is not interior")));
        }
        let fam = self.family(x0, t)?;
        self.section_from_family(&fam, t)
    }

    pub fn section_from_family(&self, fam: &SectionFamily, t: f64) -> Result<Section> {
        let g = self.grid();
        let x0 = fam.center;
        if t >= fam.escape {
            return Err(Error::SectionEscapes { center: x0, height: t });
        }
        let floor = self.floor();
        if t <= floor {
            return Err(Error::BelowGridFloor { center: x0, height: t, floor });
        }
        let members = fam.members(t);
        if members.len() < self.config.min_members(g) {
            return Err(Error::BelowGridFloor { center: x0, height: t, floor });
        }
        let center_point = g.point(x0);
        let ellipsoid = fit_ellipsoid(g, &members, &center_point, t)?;
        let map = normalizing_map(&ellipsoid.a, &center_point, t)?;
        let excluded = self
            .mask
            .interior()
            .iter()
            .filter(|&&i| {
                self.phi.get(i) - fam.poly.eval(&g.point(i)) - fam.base_value <= t
                    && members.binary_search(&i).is_err()
            })
            .count();
        Ok(Section {
            center: x0,
            center_point,
            height: t,
            poly: fam.poly.clone(),
            base_value: fam.base_value,
            members,
            ellipsoid,
            map,
            excluded,
        })
    }
}

/// `z = sqrt(t) T zeta + x0` with `T = conj(a^{-1/2})`, mapping the ball of
/// radius `sqrt(t)` onto `{q_a <= t}`.
pub fn normalizing_map(a: &Herm, x0: &Point, t: f64) -> Result<AffineMap> {
    let r = a.inv_sqrt().ok_or(Error::DegenerateMoments)?;
    AffineMap::new(r.as_cmat().conj(), *x0, t)
}

fn real_inverse(m: &[[f64; 4]; 4], d: usize) -> Option<[[f64; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        for k in 0..d {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for i in 0..d {
            if i != col {
                let f = a[i][col];
                for k in 0..d {
                    a[i][k] -= f * a[col][k];
                    inv[i][k] -= f * inv[col][k];
                }
            }
        }
    }
    Some(inv)
}

/// Hermitian `a` whose real form is closest to the symmetric `p`.
pub fn hermitian_part(n: usize, p: &[[f64; 4]; 4]) -> Herm {
    let mut m = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..n {
        for j in 0..n {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            m[i][j] = C64::new(0.5 * (p[xi][xj] + p[yi][yj]), 0.5 * (p[xi][yj] - p[yi][xj]));
        }
    }
    Herm::from_cmat(&CMat::from_rows(n, m))
}

/// Second-moment matrix of `members` about `c`.
pub fn second_moments(grid: &Grid, members: &[usize], c: &Point) -> [[f64; 4]; 4] {
    let d = grid.dim();
    let mut m = [[0.0; 4]; 4];
    for &i in members {
        let p = grid.point(i);
        let x: [f64; 4] = std::array::from_fn(|k| p[k] - c[k]);
        for a in 0..d {
            for b in 0..d {
                m[a][b] += x[a] * x[b];
            }
        }
    }
    let k = members.len().max(1) as f64;
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v /= k;
        }
    }
    m
}

/// Normalized second-moment ellipsoid about `x0` and the achieved eccentricity
/// from an exhaustive scan of members and of non-members inside the bounding box.
pub fn fit_ellipsoid(grid: &Grid, members: &[usize], x0: &Point, t: f64) -> Result<Ellipsoid> {
    let n = grid.n();
    let d = grid.dim();
    if members.len() < 5usize.pow(d as u32) {
        return Err(Error::Precondition(format!("{} members, moment fit needs {}", members.len(), 5usize.pow(d as u32))));
    }
    let m = second_moments(grid, members, x0);
    let minv = real_inverse(&m, d).ok_or(Error::DegenerateMoments)?;
    let a_raw = hermitian_part(n, &minv);
    let det = a_raw.det();
    if !(det > 0.0 && a_raw.min_eigenvalue() > 0.0) {
        return Err(Error::DegenerateMoments);
    }
    let a = a_raw.scale(det.powf(-1.0 / n as f64));
    let (outer, inner) = eccentricity(grid, members, x0, &a, t);
    Ok(Ellipsoid { a, sigma: outer.max(inner).max(0.0), outer, inner })
}

/// `(max over members of sqrt(q/t) - 1, 1 - min over non-members of sqrt(q/t))`.
pub fn eccentricity(grid: &Grid, members: &[usize], x0: &Point, a: &Herm, t: f64) -> (f64, f64) {
    let n = grid.n();
    let q = |p: &Point| {
        let x: [f64; 4] = std::array::from_fn(|k| p[k] - x0[k]);
        (a.form(&to_complex(n, &x)) / t).max(0.0).sqrt()
    };
    let outer = members.iter().map(|&i| q(&grid.point(i))).fold(0.0, f64::max) - 1.0;
    let ainv = a.inverse().expect("positive definite");
    let c = grid.locate(x0);
    let mut lo = [0i64; MAX_DIM];
    let mut hi = [0i64; MAX_DIM];
    for k in 0..grid.dim() {
        let half = (t * ainv.get(k / 2, k / 2).re).sqrt() / grid.spacing() + 1.0;
        lo[k] = ((c[k] - half).floor() as i64).max(0);
        hi[k] = ((c[k] + half).ceil() as i64).min(grid.dims()[k] as i64 - 1);
    }
    let mut inner_min = f64::INFINITY;
    let mut mi = lo;
    'scan: loop {
        let idx = grid.index(&mi.map(|v| v as usize));
        if members.binary_search(&idx).is_err() {
            inner_min = inner_min.min(q(&grid.point(idx)));
        }
        for k in (0..grid.dim()).rev() {
            if mi[k] < hi[k] {
                mi[k] += 1;
                continue 'scan;
            }
            mi[k] = lo[k];
        }
        break;
    }
    (outer, 1.0 - inner_min.min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngulfingReport {
    pub intersect: bool,
    /// Nodes of `s1` whose contraction toward `x2` by 1/10 leaves `s2`.
    pub failures: usize,
    pub checked: usize,
}

impl EngulfingReport {
    pub fn contained(&self) -> Option<bool> {
        self.intersect.then_some(self.failures == 0)
    }
}

/// `s1 subset 10 s2` with dilation about the center of `s2`.
pub fn engulfing_check(grid: &Grid, s1: &Section, s2: &Section) -> EngulfingReport {
    let intersect = s1.members.iter().any(|&i| s2.contains(i));
    if !intersect {
        return EngulfingReport { intersect, failures: 0, checked: 0 };
    }
    let x2 = s2.center_point;
    let mut failures = 0;
    for &i in &s1.members {
        let p = grid.point(i);
        let q: Point = std::array::from_fn(|k| x2[k] + (p[k] - x2[k]) / 10.0);
        let ok = grid.nearest(&q).map(|(j, _)| s2.contains(j)).unwrap_or(false);
        if !ok {
            failures += 1;
        }
    }
    EngulfingReport { intersect, failures, checked: s1.members.len() }
}

/// Smallest `theta` with `S_t(z) subset S_{theta t}(y)` for each `y`, searching up
/// to `theta_max`; `None` where no admissible height exists before escape.
pub fn engulfing_theta(ctx: &SectionContext, z: usize, t: f64, ys: &[usize], theta_max: f64) -> Result<Vec<Option<f64>>> {
    let fz = ctx.family(z, t)?;
    if !fz.valid(t) {
        return Err(Error::SectionEscapes { center: z, height: t });
    }
    let members = fz.members(t);
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        if members.binary_search(&y).is_err() {
            return Err(Error::Precondition(format!("node {y} is not in S_t(z)")));
        }
        let fy = ctx.family(y, theta_max * t)?;
        let mut join = std::collections::HashMap::with_capacity(fy.order.len());
        for &(j, i) in &fy.order {
            join.insert(i, j);
        }
        let mut worst: f64 = 0.0;
        let mut reached = true;
        for &m in &members {
            match join.get(&m) {
                Some(&j) => worst = worst.max(j),
                None => {
                    reached = false;
                    break;
                }
            }
        }
        out.push(reached.then(|| (worst / t).max(1.0)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterReport {
    pub mu: f64,
    pub inner_required: f64,
    pub outer_allowed: f64,
    /// Distance from the center to the nearest non-member node.
    pub inner_radius: f64,
    /// Distance from the center to the farthest member.
    pub outer_radius: f64,
    pub inner_drift: f64,
    pub outer_drift: f64,
    pub holds: bool,
}

/// `B_{mu^{1/2 + d_-}/C} subset S_mu subset B_{C mu^{1/2 + d_+}}` with
/// `d_{-/+} = log_{mu0}(1 -/+ C sigma^{1/2})`.
pub fn diameter_check(grid: &Grid, section: &Section, mu0: f64, c: f64, sigma: f64) -> DiameterReport {
    let x0 = section.center_point;
    let mu = section.height;
    let s = c * sigma.sqrt();
    let inner_drift = if s < 1.0 { (1.0 - s).ln() / mu0.ln() } else { f64::INFINITY };
    let outer_drift = (1.0 + s).ln() / mu0.ln();
    let inner_required = mu.powf(0.5 + inner_drift) / c;
    let outer_allowed = c * mu.powf(0.5 + outer_drift);
    let outer_radius = section.members.iter().map(|&i| dist(&grid.point(i), &x0)).fold(0.0, f64::max);
    let inner_radius = rim(grid, &section.members)
        .into_iter()
        .map(|i| dist(&grid.point(i), &x0))
        .fold(f64::INFINITY, f64::min);
    DiameterReport {
        mu,
        inner_required,
        outer_allowed,
        inner_radius,
        outer_radius,
        inner_drift,
        outer_drift,
        holds: inner_required <= inner_radius && outer_radius <= outer_allowed,
    }
}

/// Non-member face neighbors of a sorted member set.
pub fn rim(grid: &Grid, members: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = members
        .iter()
        .flat_map(|&i| grid.face_neighbors(i).collect::<Vec<_>>())
        .filter(|j| members.binary_search(j).is_err())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureDeltaReport {
    pub t: f64,
    pub eps2: f64,
    /// `mu(S_t sym-diff S_{(1-eps2)t}) / mu(S_t)`.
    pub symmetric_fraction: f64,
    /// `|mu(S_t) - mu(S_{(1-eps2)t})| / mu(S_t)`.
    pub difference_fraction: f64,
    /// `symmetric_fraction / (sigma + eps2)`.
    pub fitted_constant: f64,
}

pub fn measure_delta(fam: &SectionFamily, t: f64, eps2: f64, sigma: f64, mu: &MaMeasure) -> MeasureDeltaReport {
    let big = fam.measure(t, mu);
    let small = fam.measure((1.0 - eps2) * t, mu);
    // Sections at one center are nested, so the symmetric difference is the shell.
    let sym = (big - small).abs() / big;
    MeasureDeltaReport {
        t,
        eps2,
        symmetric_fraction: sym,
        difference_fraction: sym,
        fitted_constant: sym / (sigma + eps2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// Distance in normalized coordinates from the image of `y` to the image of
    /// `S_{(1-eps2)t}(x)`.
    pub distance: f64,
    pub radius: f64,
    pub separated: bool,
}

/// Whether the `eps2^delta` ball about `T(y)` misses `T(S_{(1-eps2)t}(x))`, with
/// `T = t^{-1/2} T_{t,x}^{-1}`.
pub fn separation_check(ctx: &SectionContext, section: &Section, y: usize, eps2: f64, delta: f64) -> Result<SeparationReport> {
    if section.contains(y) {
        return Err(Error::Precondition(format!("node {y} lies inside the section")));
    }
    let g = ctx.grid();
    let fam = ctx.family(section.center, section.height)?;
    let inner = fam.members((1.0 - eps2) * section.height);
    let inv = section.map.inverse();
    let ty = inv.apply(&g.point(y));
    let distance = inner.iter().map(|&i| dist(&inv.apply(&g.point(i)), &ty)).fold(f64::INFINITY, f64::min);
    let radius = eps2.powf(delta);
    Ok(SeparationReport { distance, radius, separated: distance > radius })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub ratio: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Smallest `C >= 1` making both inclusions hold with exponents `1/2 +- eps1`.
    pub constant: f64,
    pub inner_exponent: f64,
    pub outer_exponent: f64,
    pub vacuous: bool,
}

/// Compare `S_t(x)` with `S_{t0}(x0)` in the coordinates normalizing the outer section.
pub fn comparability_check(grid: &Grid, outer: &Section, inner: &Section, eps1: f64) -> ComparabilityReport {
    let ratio = inner.height / outer.height;
    let intersect = inner.members.iter().any(|&i| outer.contains(i));
    if !intersect {
        return ComparabilityReport {
            ratio,
            inner_radius: f64::NAN,
            outer_radius: f64::NAN,
            constant: f64::NAN,
            inner_exponent: f64::NAN,
            outer_exponent: f64::NAN,
            vacuous: true,
        };
    }
    let inv = outer.map.inverse();
    let c = inv.apply(&inner.center_point);
    let outer_radius = inner
        .members
        .iter()
        .map(|&i| dist(&inv.apply(&grid.point(i)), &c))
        .fold(0.0, f64::max);
    let inner_radius = rim(grid, &inner.members)
        .into_iter()
        .map(|i| dist(&inv.apply(&grid.point(i)), &c))
        .fold(f64::INFINITY, f64::min);
    let lo = ratio.powf(0.5 + eps1);
    let hi = ratio.powf(0.5 - eps1);
    let constant = (lo / inner_radius).max(outer_radius / hi).max(1.0);
    let (inner_exponent, outer_exponent) = if ratio < 1.0 {
        (inner_radius.ln() / ratio.ln(), outer_radius.ln() / ratio.ln())
    } else {
        (f64::NAN, f64::NAN)
    };
    ComparabilityReport { ratio, inner_radius, outer_radius, constant, inner_exponent, outer_exponent, vacuous: false }
}

/// Ellipsoid `{x : (x - c)^T P (x - c) <= 1}` fitted to a point cloud by moments
/// about its centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEllipsoid {
    pub center: Point,
    pub p: [[f64; 4]; 4],
    pub dim: usize,
}

impl FreeEllipsoid {
    pub fn fit(grid: &Grid, members: &[usize]) -> Result<FreeEllipsoid> {
        let d = grid.dim();
        if members.len() <= d {
            return Err(Error::DegenerateMoments);
        }
        let mut c = [0.0; MAX_DIM];
        for &i in members {
            let p = grid.point(i);
            for k in 0..d {
                c[k] += p[k];
            }
        }
        for v in c.iter_mut() {
            *v /= members.len() as f64;
        }
        let m = second_moments(grid, members, &c);
        let mut p = real_inverse(&m, d).ok_or(Error::DegenerateMoments)?;
        for row in p.iter_mut() {
            for v in row.iter_mut() {
                *v /= (d + 2) as f64;
            }
        }
        Ok(FreeEllipsoid { center: c, p, dim: d })
    }

    pub fn ball(center: Point, radius: f64, dim: usize) -> FreeEllipsoid {
        let mut p = [[0.0; 4]; 4];
        for (k, row) in p.iter_mut().enumerate().take(dim) {
            row[k] = 1.0 / (radius * radius);
        }
        FreeEllipsoid { center, p, dim }
    }

    fn form(&self, x: &[f64; 4]) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                s += x[a] * self.p[a][b] * x[b];
            }
        }
        s
    }

    /// Boundary point in direction `u` (unit vector).
    fn boundary_point(&self, u: &[f64; 4]) -> Point {
        let s = 1.0 / self.form(u).sqrt();
        std::array::from_fn(|k| self.center[k] + s * u[k])
    }

    /// Largest `s` with `c + s v` inside.
    fn ray_exit(&self, c: &Point, v: &[f64; 4]) -> f64 {
        let x: [f64; 4] = std::array::from_fn(|k| c[k] - self.center[k]);
        let a = self.form(v);
        let mut b = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                b += x[i] * self.p[i][j] * v[j];
            }
        }
        let cc = self.form(&x) - 1.0;
        let disc = (b * b - a * cc).max(0.0);
        (-b + disc.sqrt()) / a
    }
}

fn sphere_directions(dim: usize) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    if dim == 2 {
        for k in 0..2048 {
            let th = k as f64 * std::f64::consts::TAU / 2048.0;
            out.push([th.cos(), th.sin(), 0.0, 0.0]);
        }
    } else {
        // Hopf-style parametrization of S^3.
        let m = 48;
        for i in 0..m {
            let eta = (i as f64 + 0.5) / m as f64 * std::f64::consts::FRAC_PI_2;
            for j in 0..m {
                let a = j as f64 * std::f64::consts::TAU / m as f64;
                for k in 0..m {
                    let b = k as f64 * std::f64::consts::TAU / m as f64;
                    out.push([eta.sin() * a.cos(), eta.sin() * a.sin(), eta.cos() * b.cos(), eta.cos() * b.sin()]);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// Smallest `c1` with `(1 - c1) E~ subset E subset (1 + c1) E~`, dilations about
    /// the center of `E~`.
    pub c1: f64,
    pub outer: f64,
    pub inner: f64,
}

/// Two-sided inclusion constant between fitted ellipsoids, from dense boundary sampling.
pub fn ellipsoid_inclusion(e: &FreeEllipsoid, e_tilde: &FreeEllipsoid) -> InclusionReport {
    let dirs = sphere_directions(e.dim);
    let mut outer: f64 = 0.0;
    let mut inner: f64 = f64::INFINITY;
    for u in &dirs {
        let y = e.boundary_point(u);
        let x: [f64; 4] = std::array::from_fn(|k| y[k] - e_tilde.center[k]);
        outer = outer.max(e_tilde.form(&x).sqrt());
        let yt = e_tilde.boundary_point(u);
        let v: [f64; 4] = std::array::from_fn(|k| yt[k] - e_tilde.center[k]);
        inner = inner.min(e.ray_exit(&e_tilde.center, &v));
    }
    let outer = outer - 1.0;
    let inner = 1.0 - inner;
    InclusionReport { c1: outer.max(inner).max(0.0), outer, inner }
}

/// Complex vector helper for callers building maps by hand.
pub fn point_to_complex(n: usize, p: &Point) -> [C64; 2] {
    to_complex(n, p)
}

pub fn complex_to_point(n: usize, z: &[C64; 2]) -> Point {
    to_real(n, z)
}
