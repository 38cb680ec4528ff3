//! Structured lattices over boxes in `R^{2n}`, star-shaped domain masks and
//! node-indicator measures.
//!
//! Coordinates are ordered `(x1, y1, x2, y2)` and node indices are row-major with
//! the last axis fastest.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// A point in `R^{2n}`; entries past `2n` are zero.
pub type Point = [f64; MAX_DIM];

pub fn norm_sq(p: &Point) -> f64 {
    p.iter().map(|v| v * v).sum()
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for k in 0..MAX_DIM {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    dims: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(n: usize, dims: Vec<usize>, origin: Vec<f64>, spacing: f64) -> Result<Grid> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("complex dimension {n} not in {{1, 2}}")));
        }
        if dims.len() != 2 * n || origin.len() != 2 * n {
            return Err(Error::InvalidGrid(format!(
                "expected {} axes, got dims {} origin {}",
                2 * n,
                dims.len(),
                origin.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 5 || d % 2 == 0) {
            return Err(Error::InvalidGrid(format!("axis size {d} must be odd and at least 5")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {spacing} must be positive")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Ok(Grid { n, dims, origin, spacing, strides })
    }

    /// Centered cube `[-halfwidth, halfwidth]^{2n}` with `resolution` nodes per axis.
    pub fn build(n: usize, resolution: usize, halfwidth: f64) -> Result<Grid> {
        if resolution < 5 || resolution.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} must be odd and at least 5"
            )));
        }
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::InvalidGrid(format!("halfwidth {halfwidth} must be positive")));
        }
        let spacing = 2.0 * halfwidth / (resolution - 1) as f64;
        let d = 2 * n.clamp(1, 2);
        Grid::new(n, vec![resolution; d], vec![-halfwidth; d], spacing)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Largest coordinate magnitude reached by the box along any axis.
    pub fn extent(&self) -> f64 {
        (0..self.dim())
            .map(|a| {
                let lo = self.origin[a];
                let hi = lo + (self.dims[a] - 1) as f64 * self.spacing;
                lo.abs().min(hi.abs())
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut mi = [0; MAX_DIM];
        let mut r = idx;
        for a in 0..self.dim() {
            mi[a] = r / self.strides[a];
            r %= self.strides[a];
        }
        mi
    }

    pub fn index(&self, mi: &[usize]) -> usize {
        (0..self.dim()).map(|a| mi[a] * self.strides[a]).sum()
    }

    pub fn point(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            p[a] = self.origin[a] + mi[a] as f64 * self.spacing;
        }
        p
    }

    /// Fractional lattice coordinates of `p`.
    pub fn locate(&self, p: &Point) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            c[a] = (p[a] - self.origin[a]) / self.spacing;
        }
        c
    }

    /// Nearest lattice node and the snap distance, or `None` outside the box.
    pub fn nearest(&self, p: &Point) -> Option<(usize, f64)> {
        let c = self.locate(p);
        let mut mi = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let r = c[a].round();
            if r < 0.0 || r > (self.dims[a] - 1) as f64 {
                return None;
            }
            mi[a] = r as usize;
        }
        let idx = self.index(&mi);
        Some((idx, dist(&self.point(idx), p)))
    }

    pub fn offset(&self, idx: usize, step: &[i64; MAX_DIM]) -> Option<usize> {
        let mi = self.multi_index(idx);
        let mut out = idx as i64;
        for a in 0..self.dim() {
            let k = mi[a] as i64 + step[a];
            if k < 0 || k >= self.dims[a] as i64 {
                return None;
            }
            out += step[a] * self.strides[a] as i64;
        }
        Some(out as usize)
    }

    pub fn on_face(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim()).any(|a| mi[a] == 0 || mi[a] == self.dims[a] - 1)
    }

    /// Face neighbors (the `2 * 2n` axis-adjacent nodes inside the box).
    pub fn face_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let mi = self.multi_index(idx);
        (0..self.dim()).flat_map(move |a| {
            let lo = (mi[a] > 0).then(|| idx - self.strides[a]);
            let hi = (mi[a] + 1 < self.dims[a]).then(|| idx + self.strides[a]);
            lo.into_iter().chain(hi)
        })
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        self == other
    }
}

pub fn build_grid(n: usize, resolution: usize, halfwidth: f64) -> Result<Grid> {
    Grid::build(n, resolution, halfwidth)
}

/// Radial deviation of a star-shaped boundary from the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `R(w) = 1 + gamma (2 w_1^2 - 1)`: an ellipsoid-like bump along the first axis.
    Ellipsoidal,
    /// `R(w) = 1 + gamma Re((w_1 + i w_2)^k)`.
    Cosine { k: u32 },
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Ball { gamma: f64, perturbation: Option<Perturbation> },
    Tabulated { dirs: Vec<Point>, radii: Vec<f64> },
    Box,
}

impl Shape {
    fn radius(&self, dir: &Point) -> f64 {
        match self {
            Shape::Ball { perturbation: None, .. } => 1.0,
            Shape::Ball { gamma, perturbation: Some(Perturbation::Ellipsoidal) } => {
                1.0 + gamma * (2.0 * dir[0] * dir[0] - 1.0)
            }
            Shape::Ball { gamma, perturbation: Some(Perturbation::Cosine { k }) } => {
                let z = num_complex::Complex64::new(dir[0], dir[1]);
                1.0 + gamma * z.powu(*k).re
            }
            Shape::Tabulated { dirs, radii } => tabulated_radius(dirs, radii, dir),
            Shape::Box => f64::INFINITY,
        }
    }

    /// Negative inside, positive outside.
    fn level(&self, p: &Point) -> f64 {
        let r = norm_sq(p).sqrt();
        if r == 0.0 {
            return -1.0;
        }
        let dir = p.map(|v| v / r);
        r - self.radius(&dir)
    }

    fn project(&self, p: &Point) -> Point {
        let r = norm_sq(p).sqrt();
        if r == 0.0 {
            return *p;
        }
        let dir = p.map(|v| v / r);
        let rad = self.radius(&dir);
        dir.map(|v| v * rad)
    }

    /// Fraction `s` in `(0, 1]` where the segment `p -> q` leaves the domain.
    fn cut_fraction(&self, p: &Point, q: &Point) -> f64 {
        if self.level(q) <= 0.0 {
            return 1.0;
        }
        let mut d = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            d[k] = q[k] - p[k];
        }
        let s = if let Shape::Ball { perturbation: None, .. } = self {
            // |p + s d|^2 = 1
            let a = norm_sq(&d);
            let b = (0..MAX_DIM).map(|k| p[k] * d[k]).sum::<f64>();
            let c = norm_sq(p) - 1.0;
            let disc = (b * b - a * c).max(0.0);
            (-b + disc.sqrt()) / a
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                let x = std::array::from_fn(|k| p[k] + mid * d[k]);
                if self.level(&x) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        s.clamp(1e-8, 1.0)
    }
}

fn tabulated_radius(dirs: &[Point], radii: &[f64], dir: &Point) -> f64 {
    const K: usize = 4;
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(K + 1);
    for (i, d) in dirs.iter().enumerate() {
        let dd = dist(d, dir);
        if best.len() < K || dd < best[best.len() - 1].0 {
            let at = best.partition_point(|&(b, _)| b <= dd);
            best.insert(at, (dd, i));
            best.truncate(K);
        }
    }
    if let Some(&(d0, i0)) = best.first() {
        if d0 < 1e-12 {
            return radii[i0];
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, i) in &best {
        let w = 1.0 / d;
        num += w * radii[i];
        den += w;
    }
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Exterior = 0,
    Interior = 1,
    Boundary = 2,
}

impl NodeKind {
    pub fn from_u8(v: u8) -> Option<NodeKind> {
        match v {
            0 => Some(NodeKind::Exterior),
            1 => Some(NodeKind::Interior),
            2 => Some(NodeKind::Boundary),
            _ => None,
        }
    }
}

/// Exterior node adjacent to the interior, with its radial projection onto the
/// boundary and the Dirichlet value stored there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub node: usize,
    pub point: Point,
    pub value: f64,
}

/// Where a stencil line crosses the boundary between an interior node and its
/// lattice neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub point: Point,
    /// Set when the cut coincides with a lattice node.
    pub node: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Interior(usize),
    Cut(usize),
}

/// One arm of a stencil line: neighbor target and the arm length as a fraction
/// of the full lattice step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub target: Target,
    pub frac: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineKind {
    Axis(usize),
    /// `e_a + sign * e_b` with `a < b`.
    Diagonal { a: usize, b: usize, sign: i8 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub kind: LineKind,
    pub step: [i64; MAX_DIM],
    /// Euclidean length of one step in units of the spacing.
    pub length: f64,
}

/// Axis lines first, then for each pair `a < b` the `+` and `-` diagonals.
pub fn stencil_lines(dim: usize) -> Vec<Line> {
    let mut lines = Vec::new();
    for a in 0..dim {
        let mut step = [0; MAX_DIM];
        step[a] = 1;
        lines.push(Line { kind: LineKind::Axis(a), step, length: 1.0 });
    }
    for a in 0..dim {
        for b in a + 1..dim {
            for sign in [1i8, -1] {
                let mut step = [0; MAX_DIM];
                step[a] = 1;
                step[b] = sign as i64;
                lines.push(Line { kind: LineKind::Diagonal { a, b, sign }, step, length: SQRT_2 });
            }
        }
    }
    lines
}

#[derive(Clone, Debug)]
pub struct DomainMask {
    grid: Grid,
    gamma: f64,
    shape: Shape,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    position: Vec<u32>,
    boundary: Vec<BoundaryRecord>,
    lines: Vec<Line>,
    arms: Vec<Arm>,
    cuts: Vec<Cut>,
}

const NOT_INTERIOR: u32 = u32::MAX;

impl DomainMask {
    /// Star-shaped domain `{ |x| < R(x / |x|) }` with `1 - gamma <= R <= 1 + gamma`.
    pub fn ball(grid: &Grid, gamma: f64, perturbation: Option<Perturbation>) -> Result<DomainMask> {
        if !(0.0..0.2).contains(&gamma) {
            return Err(Error::Domain(format!("gamma {gamma} outside [0, 0.2)")));
        }
        if perturbation.is_some() && gamma == 0.0 {
            return Err(Error::Domain("perturbation requires gamma > 0".into()));
        }
        let shape = Shape::Ball { gamma, perturbation };
        if grid.extent() <= 1.0 + gamma {
            return Err(Error::Domain(format!(
                "box half-width {} does not contain the outer ball of radius {}",
                grid.extent(),
                1.0 + gamma
            )));
        }
        let kinds: Vec<NodeKind> = (0..grid.len())
            .map(|i| {
                if !grid.on_face(i) && shape.level(&grid.point(i)) < 0.0 {
                    NodeKind::Interior
                } else {
                    NodeKind::Exterior
                }
            })
            .collect();
        let mask = DomainMask::assemble(grid.clone(), gamma, shape, kinds, None)?;
        mask.check_resolution()?;
        Ok(mask)
    }

    /// All non-face nodes are interior; face nodes carry the boundary data.
    pub fn whole_box(grid: &Grid) -> DomainMask {
        let kinds = (0..grid.len())
            .map(|i| if grid.on_face(i) { NodeKind::Exterior } else { NodeKind::Interior })
            .collect();
        DomainMask::assemble(grid.clone(), 0.0, Shape::Box, kinds, None)
            .expect("box mask on a valid grid")
    }

    /// Rebuild a mask from stored node classes and boundary records; the boundary
    /// is reconstructed from the record points.
    pub fn from_records(grid: &Grid, kinds: Vec<NodeKind>, records: Vec<BoundaryRecord>) -> Result<DomainMask> {
        if kinds.len() != grid.len() {
            return Err(Error::Format(format!(
                "mask has {} node classes, grid has {} nodes",
                kinds.len(),
                grid.len()
            )));
        }
        if records.is_empty() {
            return Err(Error::Format("mask has no boundary records".into()));
        }
        let mut dirs = Vec::with_capacity(records.len());
        let mut radii = Vec::with_capacity(records.len());
        for r in &records {
            if r.node >= grid.len() || kinds[r.node] != NodeKind::Boundary {
                return Err(Error::Format(format!("boundary record for node {} is inconsistent", r.node)));
            }
            let rad = norm_sq(&r.point).sqrt();
            if !(rad > 0.0 && rad.is_finite()) {
                return Err(Error::Format(format!("boundary record point at node {} is degenerate", r.node)));
            }
            dirs.push(r.point.map(|v| v / rad));
            radii.push(rad);
        }
        let gamma = radii.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let shape = if gamma < 1e-12 {
            Shape::Ball { gamma: 0.0, perturbation: None }
        } else {
            Shape::Tabulated { dirs, radii }
        };
        let kinds = kinds
            .into_iter()
            .map(|k| if k == NodeKind::Boundary { NodeKind::Exterior } else { k })
            .collect();
        DomainMask::assemble(grid.clone(), gamma, shape, kinds, Some(records))
    }

    fn assemble(
        grid: Grid,
        gamma: f64,
        shape: Shape,
        mut kinds: Vec<NodeKind>,
        stored: Option<Vec<BoundaryRecord>>,
    ) -> Result<DomainMask> {
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| kinds[i] == NodeKind::Interior).collect();
        if interior.is_empty() {
            return Err(Error::Domain("no interior nodes".into()));
        }
        let mut position = vec![NOT_INTERIOR; grid.len()];
        for (p, &i) in interior.iter().enumerate() {
            position[i] = p as u32;
        }
        let lines = stencil_lines(grid.dim());
        let mut arms = Vec::with_capacity(interior.len() * lines.len() * 2);
        let mut cuts = Vec::new();
        for &i in &interior {
            let p = grid.point(i);
            for line in &lines {
                for sign in [1i64, -1] {
                    let step = line.step.map(|s| s * sign);
                    let nb = grid.offset(i, &step).ok_or(Error::IncompleteStencil { node: i })?;
                    if position[nb] != NOT_INTERIOR {
                        arms.push(Arm { target: Target::Interior(position[nb] as usize), frac: 1.0 });
                        continue;
                    }
                    let q = grid.point(nb);
                    let frac = match shape {
                        Shape::Box => 1.0,
                        _ => shape.cut_fraction(&p, &q),
                    };
                    let (point, node) = if frac >= 1.0 {
                        (q, Some(nb))
                    } else {
                        (std::array::from_fn(|k| p[k] + frac * (q[k] - p[k])), None)
                    };
                    arms.push(Arm { target: Target::Cut(cuts.len()), frac });
                    cuts.push(Cut { point, node });
                }
            }
        }
        let boundary = match stored {
            Some(records) => records,
            None => {
                let mut nodes: Vec<usize> = Vec::new();
                for &i in &interior {
                    for nb in grid.face_neighbors(i) {
                        if position[nb] == NOT_INTERIOR {
                            nodes.push(nb);
                        }
                    }
                }
                nodes.sort_unstable();
                nodes.dedup();
                nodes
                    .into_iter()
                    .map(|b| {
                        let q = grid.point(b);
                        let point = match shape {
                            Shape::Box => q,
                            _ => shape.project(&q),
                        };
                        BoundaryRecord { node: b, point, value: 0.0 }
                    })
                    .collect()
            }
        };
        for r in &boundary {
            kinds[r.node] = NodeKind::Boundary;
        }
        Ok(DomainMask { grid, gamma, shape, kinds, interior, position, boundary, lines, arms, cuts })
    }

    fn check_resolution(&self) -> Result<()> {
        let g = &self.grid;
        let center = g.nearest(&[0.0; MAX_DIM]).map(|(c, _)| c).ok_or_else(|| {
            Error::Domain("box does not contain the origin".into())
        })?;
        for a in 0..g.dim() {
            for sign in [1i64, -1] {
                let mut step = [0; MAX_DIM];
                step[a] = sign;
                let mut count = 0;
                let mut at = center;
                while let Some(nb) = g.offset(at, &step) {
                    if !self.is_interior(nb) {
                        break;
                    }
                    count += 1;
                    at = nb;
                }
                if count < 2 {
                    return Err(Error::Domain(format!(
                        "grid too coarse: {count} interior nodes along half-axis {a} (need 2)"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_box(&self) -> bool {
        matches!(self.shape, Shape::Box)
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.position[idx] != NOT_INTERIOR
    }

    /// Sorted interior node indices.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Position of a node in [`DomainMask::interior`].
    pub fn position(&self, idx: usize) -> Option<usize> {
        let p = self.position[idx];
        (p != NOT_INTERIOR).then_some(p as usize)
    }

    pub fn boundary(&self) -> &[BoundaryRecord] {
        &self.boundary
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// Arm `side` (0 forward, 1 backward) of `line` at interior position `pos`.
    pub fn arm(&self, pos: usize, line: usize, side: usize) -> Arm {
        self.arms[(pos * self.lines.len() + line) * 2 + side]
    }

    /// Both arms of every line at interior position `pos`.
    pub fn arms_at(&self, pos: usize) -> &[Arm] {
        let w = self.lines.len() * 2;
        &self.arms[pos * w..(pos + 1) * w]
    }

    /// Whether `p` lies in the open domain.
    pub fn contains(&self, p: &Point) -> bool {
        match self.shape {
            Shape::Box => {
                let c = self.grid.locate(p);
                (0..self.grid.dim()).all(|a| c[a] > 0.0 && c[a] < (self.grid.dims()[a] - 1) as f64)
            }
            _ => self.shape.level(p) < 0.0,
        }
    }

    /// Radius of the boundary in direction `dir` (unit vector).
    pub fn boundary_radius(&self, dir: &Point) -> f64 {
        self.shape.radius(dir)
    }

    /// Interior nodes with every face neighbor interior.
    pub fn deep_interior(&self, idx: usize) -> bool {
        self.is_interior(idx) && self.grid.face_neighbors(idx).all(|nb| self.is_interior(nb))
    }

    /// Indicator of interior nodes as a per-node vector.
    pub fn interior_indicator(&self) -> Vec<bool> {
        (0..self.grid.len()).map(|i| self.is_interior(i)).collect()
    }

    /// Copy with boundary record values replaced by `f` evaluated at the record points.
    pub fn with_boundary_values(&self, f: impl Fn(&Point) -> f64) -> DomainMask {
        let mut out = self.clone();
        for r in &mut out.boundary {
            r.value = f(&r.point);
        }
        out
    }
}

pub fn build_ball_domain(grid: &Grid, gamma: f64, perturbation: Option<Perturbation>) -> Result<DomainMask> {
    DomainMask::ball(grid, gamma, perturbation)
}

/// Node-indicator measure `sum density(x) h^{2n}`.
#[derive(Clone, Debug)]
pub struct MaMeasure {
    grid: Grid,
    density: Vec<f64>,
    cell: f64,
}

impl MaMeasure {
    /// Density per node; must be finite and non-negative on `mask` interior.
    pub fn new(mask: &DomainMask, density: Vec<f64>) -> Result<MaMeasure> {
        let grid = mask.grid().clone();
        if density.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "density has {} entries, grid has {}",
                density.len(),
                grid.len()
            )));
        }
        for &i in mask.interior() {
            if !(density[i] >= 0.0 && density[i].is_finite()) {
                return Err(Error::Precondition(format!(
                    "density {} at interior node {i} is not a finite non-negative number",
                    density[i]
                )));
            }
        }
        let cell = grid.cell_volume();
        Ok(MaMeasure { grid, density, cell })
    }

    /// Lebesgue measure `m` on the mask interior.
    pub fn lebesgue(mask: &DomainMask) -> MaMeasure {
        let mut density = vec![0.0; mask.grid().len()];
        for &i in mask.interior() {
            density[i] = 1.0;
        }
        MaMeasure::new(mask, density).expect("unit density is valid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cell_weight(&self) -> f64 {
        self.cell
    }

    /// Weight of a single node.
    pub fn weight(&self, idx: usize) -> f64 {
        self.density[idx] * self.cell
    }

    /// Sum over `set` in the given order.
    pub fn integrate(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.density[i]).sum::<f64>() * self.cell
    }

    pub fn integrate_where(&self, pred: impl Fn(usize) -> bool) -> f64 {
        (0..self.grid.len()).filter(|&i| pred(i)).map(|i| self.density[i]).sum::<f64>() * self.cell
    }
}

pub fn integrate(measure: &MaMeasure, set: &[usize]) -> f64 {
    measure.integrate(set)
}
