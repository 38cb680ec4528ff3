//! Discrete complex-Hessian calculus on domain masks.
//!
//! Second derivatives along each stencil line use the three-point nonuniform
//! difference, so arms shortened by the boundary stay second order and quadratics
//! are reproduced exactly. Mixed derivatives come from the pair of diagonals
//! through the node.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{interpolate, ScalarField, Trace};
use crate::grid::{Arm, DomainMask, Grid, LineKind, Point, Target, MAX_DIM};
use crate::herm::{to_complex, to_real, CMat, Herm};
use crate::sections::Section;

#[inline]
fn arm_value(values: &[f64], trace: &Trace, interior: &[usize], arm: &Arm) -> f64 {
    match arm.target {
        Target::Interior(q) => values[interior[q]],
        Target::Cut(c) => trace.get(c),
    }
}

/// Weights `(w_plus, w_center, w_minus)` of the second derivative along a line
/// with arm lengths `hp` and `hm`.
#[inline]
pub fn second_difference_weights(hp: f64, hm: f64) -> (f64, f64, f64) {
    let s = 2.0 / (hp * hm * (hp + hm));
    (s * hm, -s * (hp + hm), s * hp)
}

/// Weights of the first derivative along a line with arm lengths `hp`, `hm`.
#[inline]
pub fn first_difference_weights(hp: f64, hm: f64) -> (f64, f64, f64) {
    let s = 1.0 / (hp * hm * (hp + hm));
    (s * hm * hm, s * (hp * hp - hm * hm), -s * hp * hp)
}

/// Second derivatives along every stencil line at interior position `pos`.
pub fn line_second_derivatives(mask: &DomainMask, values: &[f64], trace: &Trace, pos: usize) -> [f64; 16] {
    let h = mask.grid().spacing();
    let interior = mask.interior();
    let u0 = values[interior[pos]];
    let arms = mask.arms_at(pos);
    let mut out = [0.0; 16];
    for (l, line) in mask.lines().iter().enumerate() {
        let (ap, am) = (&arms[2 * l], &arms[2 * l + 1]);
        let hp = ap.frac * line.length * h;
        let hm = am.frac * line.length * h;
        let (wp, w0, wm) = second_difference_weights(hp, hm);
        out[l] = wp * arm_value(values, trace, interior, ap) + w0 * u0 + wm * arm_value(values, trace, interior, am);
    }
    out
}

/// Real Hessian in `(x1, y1, x2, y2)` ordering at interior position `pos`.
pub fn real_hessian_at(mask: &DomainMask, values: &[f64], trace: &Trace, pos: usize) -> [[f64; 4]; 4] {
    let d = line_second_derivatives(mask, values, trace, pos);
    let mut hess = [[0.0; 4]; 4];
    let lines = mask.lines();
    let mut l = 0;
    while l < lines.len() {
        match lines[l].kind {
            LineKind::Axis(a) => {
                hess[a][a] = d[l];
                l += 1;
            }
            LineKind::Diagonal { a, b, .. } => {
                let v = 0.5 * (d[l] - d[l + 1]);
                hess[a][b] = v;
                hess[b][a] = v;
                l += 2;
            }
        }
    }
    hess
}

/// Real gradient at interior position `pos` from the axis lines.
pub fn gradient_at(mask: &DomainMask, values: &[f64], trace: &Trace, pos: usize) -> [f64; 4] {
    let h = mask.grid().spacing();
    let interior = mask.interior();
    let u0 = values[interior[pos]];
    let arms = mask.arms_at(pos);
    let mut g = [0.0; 4];
    for (l, line) in mask.lines().iter().enumerate() {
        if let LineKind::Axis(a) = line.kind {
            let (ap, am) = (&arms[2 * l], &arms[2 * l + 1]);
            let (wp, w0, wm) = first_difference_weights(ap.frac * h, am.frac * h);
            g[a] = wp * arm_value(values, trace, interior, ap) + w0 * u0 + wm * arm_value(values, trace, interior, am);
        }
    }
    g
}

/// Complex Hessians on the interior of a mask, aligned with `mask.interior()`.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: Grid,
    nodes: Vec<usize>,
    mats: Vec<Herm>,
}

impl HermitianField {
    pub fn new(mask: &DomainMask, mats: Vec<Herm>) -> Result<HermitianField> {
        if mats.len() != mask.n_interior() {
            return Err(Error::Precondition(format!(
                "{} matrices for {} interior nodes",
                mats.len(),
                mask.n_interior()
            )));
        }
        Ok(HermitianField { grid: mask.grid().clone(), nodes: mask.interior().to_vec(), mats })
    }

    /// Pointwise prescribed matrices, e.g. the exact Hessian of a quadratic.
    pub fn from_fn(mask: &DomainMask, f: impl Fn(&Point) -> Herm) -> HermitianField {
        let g = mask.grid();
        let mats = mask.interior().iter().map(|&i| f(&g.point(i))).collect();
        HermitianField { grid: g.clone(), nodes: mask.interior().to_vec(), mats }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn mats(&self) -> &[Herm] {
        &self.mats
    }

    pub fn get(&self, pos: usize) -> &Herm {
        &self.mats[pos]
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Stable 64-bit digest of the matrix entries, used to tag operator snapshots.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in &self.mats {
            for i in 0..m.n() {
                for j in 0..m.n() {
                    for v in [m.get(i, j).re, m.get(i, j).im] {
                        h ^= v.to_bits();
                        h = h.wrapping_mul(0x0100_0000_01b3);
                    }
                }
            }
        }
        h
    }
}

pub fn complex_hessian(mask: &DomainMask, phi: &ScalarField, trace: &Trace) -> HermitianField {
    let n = mask.grid().n();
    let values = phi.values();
    let mats = (0..mask.n_interior())
        .into_par_iter()
        .map(|pos| Herm::from_real_hessian(n, &real_hessian_at(mask, values, trace, pos)))
        .collect();
    HermitianField { grid: mask.grid().clone(), nodes: mask.interior().to_vec(), mats }
}

/// Complex Hessian of a field sampled on the whole grid, on all non-face nodes.
pub fn complex_hessian_box(phi: &ScalarField) -> (DomainMask, HermitianField) {
    let mask = DomainMask::whole_box(phi.grid());
    let trace = Trace::from_field(&mask, phi).expect("face values are read at lattice nodes");
    let hess = complex_hessian(&mask, phi, &trace);
    (mask, hess)
}

/// Node-wise `det(phi_{i j-bar})`; NaN off the interior. Negative values are kept.
pub fn ma_density(hess: &HermitianField) -> ScalarField {
    let mut out = ScalarField::nan(&hess.grid);
    for (k, &i) in hess.nodes.iter().enumerate() {
        out.set(i, hess.mats[k].det());
    }
    out
}

/// Number of interior nodes with negative density.
pub fn negative_density_count(hess: &HermitianField) -> usize {
    hess.mats.iter().filter(|m| m.det() < 0.0).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PshReport {
    pub min_eigenvalue: f64,
    pub worst_node: usize,
}

pub fn psh_violation(hess: &HermitianField) -> PshReport {
    let mut best = PshReport { min_eigenvalue: f64::INFINITY, worst_node: usize::MAX };
    for (k, m) in hess.mats.iter().enumerate() {
        let e = m.min_eigenvalue();
        if e < best.min_eigenvalue {
            best = PshReport { min_eigenvalue: e, worst_node: hess.nodes[k] };
        }
    }
    best
}

/// `const + Re(sum b_i w_i) + Re(sum c_ij w_i w_j)` with `w = z - base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluriharmonicPoly {
    pub n: usize,
    pub base: Point,
    pub b: [[f64; 2]; 2],
    pub c: [[[f64; 2]; 2]; 2],
    pub constant: f64,
}

impl PluriharmonicPoly {
    pub fn zero(n: usize, base: Point) -> PluriharmonicPoly {
        PluriharmonicPoly { n, base, b: [[0.0; 2]; 2], c: [[[0.0; 2]; 2]; 2], constant: 0.0 }
    }

    pub fn new(n: usize, base: Point, b: [C64; 2], c: [[C64; 2]; 2], constant: f64) -> PluriharmonicPoly {
        let mut p = PluriharmonicPoly::zero(n, base);
        for i in 0..n {
            p.b[i] = [b[i].re, b[i].im];
            for j in 0..n {
                // Only the symmetric part contributes.
                let s = 0.5 * (c[i][j] + c[j][i]);
                p.c[i][j] = [s.re, s.im];
            }
        }
        p.constant = constant;
        p
    }

    pub fn linear(&self, i: usize) -> C64 {
        C64::new(self.b[i][0], self.b[i][1])
    }

    pub fn quadratic(&self, i: usize, j: usize) -> C64 {
        C64::new(self.c[i][j][0], self.c[i][j][1])
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let mut d = [0.0; MAX_DIM];
        for k in 0..2 * self.n {
            d[k] = p[k] - self.base[k];
        }
        let w = to_complex(self.n, &d);
        let mut s = self.constant;
        for i in 0..self.n {
            s += (self.linear(i) * w[i]).re;
            for j in 0..self.n {
                s += (self.quadratic(i, j) * w[i] * w[j]).re;
            }
        }
        s
    }

    pub fn coefficient_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.quadratic(i, j).norm_sqr();
            }
        }
        s.sqrt()
    }
}

/// Degree-two pluriharmonic part of the Taylor expansion of `phi` at `x0`:
/// `b_i = 2 phi_i(x0)`, `c_ij = phi_ij(x0)`, constant zero.
pub fn pluriharmonic_at(mask: &DomainMask, phi: &ScalarField, trace: &Trace, x0: usize) -> Result<PluriharmonicPoly> {
    let pos = mask.position(x0).ok_or(Error::IncompleteStencil { node: x0 })?;
    let n = mask.grid().n();
    let g = gradient_at(mask, phi.values(), trace, pos);
    let h = real_hessian_at(mask, phi.values(), trace, pos);
    let mut b = [C64::new(0.0, 0.0); 2];
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..n {
        let (xi, yi) = (2 * i, 2 * i + 1);
        b[i] = C64::new(g[xi], -g[yi]);
        for j in 0..n {
            let (xj, yj) = (2 * j, 2 * j + 1);
            c[i][j] = 0.25 * C64::new(h[xi][xj] - h[yi][yj], -(h[xi][yj] + h[yi][xj]));
        }
    }
    Ok(PluriharmonicPoly::new(n, mask.grid().point(x0), b, c, 0.0))
}

/// `det(A) tr(A^{-1} U)` at one node, written with the adjugate.
#[inline]
pub fn linearized_at(a: &Herm, u: &Herm) -> f64 {
    a.adjugate().trace_product(u)
}

/// `L_phi u = det(phi_{k l-bar}) phi^{i j-bar} u_{i j-bar}` on the interior, NaN elsewhere.
pub fn linearized_apply(hess_phi: &HermitianField, mask: &DomainMask, u: &ScalarField, trace_u: &Trace) -> Result<ScalarField> {
    if hess_phi.nodes != mask.interior() {
        return Err(Error::Precondition("Hessian field and mask disagree on the interior".into()));
    }
    for (k, m) in hess_phi.mats.iter().enumerate() {
        let det = m.det();
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::SingularHessian { node: hess_phi.nodes[k], det });
        }
    }
    let hu = complex_hessian(mask, u, trace_u);
    let mut out = ScalarField::nan(mask.grid());
    for (k, &i) in mask.interior().iter().enumerate() {
        out.set(i, linearized_at(&hess_phi.mats[k], &hu.mats[k]));
    }
    Ok(out)
}

/// `z = sqrt(lambda) T w + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    t: CMat,
    translation: Point,
    lambda: f64,
    det_abs: f64,
}

impl AffineMap {
    pub fn new(t: CMat, translation: Point, lambda: f64) -> Result<AffineMap> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Precondition(format!("scale {lambda} must be positive")));
        }
        let det_abs = t.det().norm();
        if det_abs == 0.0 || !det_abs.is_finite() {
            return Err(Error::Precondition("singular linear part".into()));
        }
        Ok(AffineMap { t, translation, lambda, det_abs })
    }

    pub fn identity(n: usize) -> AffineMap {
        AffineMap::new(CMat::identity(n), [0.0; MAX_DIM], 1.0).unwrap()
    }

    pub fn n(&self) -> usize {
        self.t.n
    }

    pub fn linear(&self) -> &CMat {
        &self.t
    }

    pub fn translation(&self) -> &Point {
        &self.translation
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    pub fn apply(&self, w: &Point) -> Point {
        let n = self.n();
        let z = self.t.apply(&to_complex(n, w));
        let s = self.lambda.sqrt();
        let mut out = to_real(n, &[z[0] * s, z[1] * s]);
        for k in 0..2 * n {
            out[k] += self.translation[k];
        }
        out
    }

    pub fn inverse(&self) -> AffineMap {
        let n = self.n();
        let tinv = self.t.inverse().expect("nonsingular by construction");
        let x = tinv.apply(&to_complex(n, &self.translation));
        let s = -1.0 / self.lambda.sqrt();
        let translation = to_real(n, &[x[0] * s, x[1] * s]);
        AffineMap::new(tinv, translation, 1.0 / self.lambda).unwrap()
    }

    /// `self o other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let translation = self.apply(&other.translation);
        AffineMap::new(self.t.mul(&other.t), translation, self.lambda * other.lambda).unwrap()
    }

    /// Factor `lambda |det T|^{2/n}` relating `L` before and after normalization.
    pub fn operator_factor(&self) -> f64 {
        self.lambda * self.det_abs.powf(2.0 / self.n() as f64)
    }
}

/// Pull `(phi, u)` back to `target`: `phi~(w) = phi(M w) / (lambda |det T|^{2/n}) + h(w)`,
/// `u~(w) = u(M w)`.
pub fn normalize_pair(
    phi: &ScalarField,
    u: &ScalarField,
    map: &AffineMap,
    h: &PluriharmonicPoly,
    target: &Grid,
) -> Result<(ScalarField, ScalarField)> {
    let scale = 1.0 / map.operator_factor();
    let mut pv = vec![0.0; target.len()];
    let mut uv = vec![0.0; target.len()];
    for w in 0..target.len() {
        let pw = target.point(w);
        let z = map.apply(&pw);
        let (Some(a), Some(b)) = (interpolate(phi, &z), interpolate(u, &z)) else {
            return Err(Error::ImageEscapes { node: w });
        };
        pv[w] = a * scale + h.eval(&pw);
        uv[w] = b;
    }
    Ok((ScalarField::new(target.clone(), pv)?, ScalarField::new(target.clone(), uv)?))
}

/// `(phi - h - phi(x0) - t)(x0 + T sqrt(t) zeta) / (t |det T|^{2/n})` on `target`.
pub fn renormalize_section(phi: &ScalarField, section: &Section, target: &Grid) -> Result<ScalarField> {
    let map = section.map();
    let t = section.height();
    let base = phi.get(section.center());
    let denom = t * map.det_abs().powf(2.0 / map.n() as f64);
    let mut out = vec![0.0; target.len()];
    for w in 0..target.len() {
        let z = map.apply(&target.point(w));
        let v = interpolate(phi, &z).ok_or(Error::ImageEscapes { node: w })?;
        out[w] = (v - section.poly().eval(&z) - base - t) / denom;
    }
    ScalarField::new(target.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_field(grid: &Grid, f: impl Fn(&Point) -> f64) -> (DomainMask, ScalarField, Trace) {
        let mask = DomainMask::ball(grid, 0.0, None).unwrap();
        let field = ScalarField::from_fn(grid, &f);
        let trace = Trace::from_fn(&mask, &f);
        (mask, field, trace)
    }

    #[test]
    fn weights_exact_on_quadratics() {
        let (hp, hm) = (0.3, 0.07);
        let (wp, w0, wm) = second_difference_weights(hp, hm);
        let q = |x: f64| 2.0 + 3.0 * x - 1.5 * x * x;
        let d = wp * q(hp) + w0 * q(0.0) + wm * q(-hm);
        assert!((d + 3.0).abs() < 1e-11);
        let (wp, w0, wm) = first_difference_weights(hp, hm);
        let d = wp * q(hp) + w0 * q(0.0) + wm * q(-hm);
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_modulus_squared() {
        let g = Grid::build(1, 21, 1.1).unwrap();
        let (mask, f, tr) = quad_field(&g, |p| p[0] * p[0] + p[1] * p[1]);
        let hess = complex_hessian(&mask, &f, &tr);
        for m in hess.mats() {
            assert!((m.det() - 1.0).abs() < 1e-10);
        }
        let (mask, f, tr) = quad_field(&g, |p| p[0] * p[0] - p[1] * p[1]);
        let hess = complex_hessian(&mask, &f, &tr);
        for m in hess.mats() {
            assert!(m.frobenius() < 1e-10);
        }
        let _ = mask;
    }

    #[test]
    fn pluriharmonic_taylor_at_shifted_center() {
        let g = Grid::build(1, 21, 1.1).unwrap();
        let (mask, f, tr) = quad_field(&g, |p| p[0] * p[0] + p[1] * p[1]);
        let x0 = g.nearest(&[0.22, -0.33, 0.0, 0.0]).unwrap().0;
        let a = g.point(x0);
        let poly = pluriharmonic_at(&mask, &f, &tr, x0).unwrap();
        assert!((poly.linear(0) - 2.0 * C64::new(a[0], -a[1])).norm() < 1e-10);
        assert!(poly.quadratic(0, 0).norm() < 1e-10);
    }

    #[test]
    fn affine_inverse_and_compose() {
        let t = CMat::from_rows(2, [[C64::new(1.0, 0.5), C64::new(0.2, 0.0)], [C64::new(0.0, -0.3), C64::new(0.8, 0.1)]]);
        let m = AffineMap::new(t, [0.1, -0.2, 0.3, 0.05], 0.25).unwrap();
        let id = m.compose(&m.inverse());
        let p = [0.3, 0.1, -0.4, 0.7];
        let q = id.apply(&p);
        for k in 0..4 {
            assert!((q[k] - p[k]).abs() < 1e-13);
        }
        assert!((id.det_abs() - 1.0).abs() < 1e-12);
        assert!((id.lambda() - 1.0).abs() < 1e-15);
    }
}
