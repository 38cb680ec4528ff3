//! Built-in density formulas and families of boundary data for `L_phi u = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::grid::{dist, norm_sq, DomainMask, Point};
use crate::herm::C64;
use crate::lin::{solve_linear, LinearOperator, LinearSolution, LinearSolveConfig};
use crate::psh::PluriharmonicPoly;

/// Catalog of perturbation shapes `g` with `|g| <= 1` on the unit box.
pub const FORMULAS: &[&str] = &["const", "radial", "cosine", "saddle", "bump"];

pub fn formula(id: &str, p: &Point) -> Result<f64> {
    let v = match id {
        "const" => 0.0,
        "radial" => (2.0 * norm_sq(p) - 1.0).clamp(-1.0, 1.0),
        "cosine" => (3.0 * p[0]).cos() * (2.0 * p[1] + p[2]).cos(),
        "saddle" => (p[0] * p[0] - p[1] * p[1]).clamp(-1.0, 1.0),
        "bump" => 2.0 * (-4.0 * dist(p, &[0.3, 0.2, 0.0, 0.0]).powi(2)).exp() - 1.0,
        _ => return Err(Error::Config(format!("unknown formula id `{id}`"))),
    };
    Ok(v)
}

pub fn check_formula(id: &str) -> Result<()> {
    if FORMULAS.contains(&id) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown formula id `{id}`; known: {}", FORMULAS.join(", "))))
    }
}

/// Right-hand side `f = 1 + eps g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensitySpec {
    pub formula: String,
    pub eps: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec { formula: "const".into(), eps: 0.0 }
    }
}

impl DensitySpec {
    pub fn new(formula: &str, eps: f64) -> DensitySpec {
        DensitySpec { formula: formula.into(), eps }
    }

    pub fn validate(&self) -> Result<()> {
        check_formula(&self.formula)?;
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps {} outside [0, 1)", self.eps)));
        }
        Ok(())
    }

    pub fn field(&self, mask: &DomainMask) -> Result<ScalarField> {
        self.validate()?;
        let g = mask.grid();
        let mut f = ScalarField::constant(g, 1.0);
        for &i in mask.interior() {
            f.set(i, 1.0 + self.eps * formula(&self.formula, &g.point(i))?);
        }
        Ok(f)
    }
}

/// `base + sum a_k sin(<k, x> + phase_k)` with `sum |a_k| <= base / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothPositive {
    pub base: f64,
    pub terms: Vec<(f64, [f64; 4], f64)>,
}

impl SmoothPositive {
    pub fn random(rng: &mut impl Rng, dim: usize, terms: usize) -> SmoothPositive {
        let base = 1.5;
        let mut raw: Vec<(f64, [f64; 4], f64)> = (0..terms)
            .map(|_| {
                let mut k = [0.0; 4];
                for kk in k.iter_mut().take(dim) {
                    *kk = rng.gen_range(-3.0..3.0);
                }
                (rng.gen_range(0.1..1.0), k, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let total: f64 = raw.iter().map(|t| t.0).sum();
        let scale = rng.gen_range(0.3..1.0) * 0.5 * base / total;
        for t in &mut raw {
            t.0 *= scale;
        }
        SmoothPositive { base, terms: raw }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.base
            + self
                .terms
                .iter()
                .map(|(a, k, ph)| a * (k.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() + ph).sin())
                .sum::<f64>()
    }
}

/// `(|pole|^2 - |x|^2) / |x - pole|^d`, harmonic away from the pole and
/// positive inside the ball of radius `|pole|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonKernel {
    pub pole: Point,
    pub dim: usize,
}

impl PoissonKernel {
    pub fn eval(&self, p: &Point) -> f64 {
        (norm_sq(&self.pole) - norm_sq(p)) / dist(p, &self.pole).powi(self.dim as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Smooth(SmoothPositive),
    Poisson(PoissonKernel),
    Pluriharmonic(PluriharmonicPoly),
    Constant { value: f64 },
}

impl BoundarySpec {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            BoundarySpec::Smooth(s) => s.eval(p),
            BoundarySpec::Poisson(k) => k.eval(p),
            BoundarySpec::Pluriharmonic(h) => h.eval(p),
            BoundarySpec::Constant { value } => *value,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BoundarySpec::Smooth(_) => "smooth",
            BoundarySpec::Poisson(_) => "poisson",
            BoundarySpec::Pluriharmonic(_) => "pluriharmonic",
            BoundarySpec::Constant { .. } => "constant",
        }
    }

    /// Exact solution for every potential.
    pub fn is_exact(&self) -> bool {
        matches!(self, BoundarySpec::Pluriharmonic(_) | BoundarySpec::Constant { .. })
    }
}

pub fn random_smooth(n: usize, count: usize, seed: u64) -> Vec<BoundarySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| BoundarySpec::Smooth(SmoothPositive::random(&mut rng, 2 * n, 3))).collect()
}

/// Kernels with poles at radius `r` spread over the first coordinate circle.
pub fn poisson_kernels(n: usize, count: usize, r: f64) -> Vec<BoundarySpec> {
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            let mut pole = [0.0; 4];
            pole[0] = r * a.cos();
            pole[1] = r * a.sin();
            BoundarySpec::Poisson(PoissonKernel { pole, dim: 2 * n })
        })
        .collect()
}

/// Positive pluriharmonic polynomials on the unit ball.
pub fn pluriharmonic_family(n: usize) -> Vec<BoundarySpec> {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let mut out = vec![
        PluriharmonicPoly::new(n, [0.0; 4], [one, z], [[z; 2]; 2], 2.0),
        PluriharmonicPoly::new(n, [0.0; 4], [C64::new(0.6, -0.8), z], [[z; 2]; 2], 2.0),
        PluriharmonicPoly::new(n, [0.0; 4], [one, z], [[C64::new(0.3, 0.0), z], [z, z]], 2.0),
    ];
    if n == 2 {
        out.push(PluriharmonicPoly::new(n, [0.0; 4], [z, one], [[z, C64::new(0.0, 0.25)], [z, z]], 2.0));
    }
    out.into_iter().map(BoundarySpec::Pluriharmonic).collect()
}

/// The standard family: `count` random smooth data, then Poisson kernels and
/// pluriharmonic polynomials.
pub fn standard_family(n: usize, count: usize, seed: u64) -> Vec<BoundarySpec> {
    let mut v = random_smooth(n, count, seed);
    v.extend(poisson_kernels(n, 4, 1.3));
    v.extend(pluriharmonic_family(n));
    v
}

/// Solve `L u = 0` with the given boundary data.
pub fn solve_boundary_problem(
    op: &LinearOperator,
    mask: &DomainMask,
    spec: &BoundarySpec,
    cfg: &LinearSolveConfig,
) -> Result<LinearSolution> {
    let bc = Trace::from_fn(mask, |p| spec.eval(p));
    let g = ScalarField::constant(mask.grid(), 0.0);
    solve_linear(op, &g, &bc, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_formula_rejected() {
        assert!(DensitySpec::new("nope", 0.1).validate().is_err());
        assert!(DensitySpec::new("cosine", 0.1).validate().is_ok());
    }

    #[test]
    fn smooth_data_positive_and_seeded() {
        let a = random_smooth(1, 5, 7);
        let b = random_smooth(1, 5, 7);
        assert_eq!(a, b);
        for s in &a {
            for k in 0..64 {
                let t = k as f64 * 0.1;
                let v = s.eval(&[t.cos(), t.sin(), 0.0, 0.0]);
                assert!(v >= 0.5 * 1.5 - 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn poisson_kernel_is_harmonic() {
        let k = PoissonKernel { pole: [1.3, 0.2, 0.0, 0.0], dim: 2 };
        let p = [0.2, -0.1, 0.0, 0.0];
        let e = 1e-3;
        let mut lap = -4.0 * k.eval(&p);
        for (dx, dy) in [(e, 0.0), (-e, 0.0), (0.0, e), (0.0, -e)] {
            lap += k.eval(&[p[0] + dx, p[1] + dy, 0.0, 0.0]);
        }
        assert!((lap / (e * e)).abs() < 1e-4);
    }
}
