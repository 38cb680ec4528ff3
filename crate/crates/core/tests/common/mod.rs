#![allow(dead_code)]

use std::collections::VecDeque;

use cma_lab::grid::norm_sq;
use cma_lab::psh::PluriharmonicPoly;
use cma_lab::{DomainMask, Grid, Point, ScalarField};

/// Sublevel component `{phi - h - phi(x0) <= t}` containing `x0`, by
/// breadth-first search over face neighbors. `None` when a node of the
/// component has a non-interior face neighbor.
pub fn flood_section(mask: &DomainMask, phi: &ScalarField, poly: &PluriharmonicPoly, x0: usize, t: f64) -> Option<Vec<usize>> {
    let g = mask.grid();
    let base = phi.get(x0);
    let level = |i: usize| phi.get(i) - poly.eval(&g.point(i)) - base;
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([x0]);
    seen[x0] = true;
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for nb in g.face_neighbors(i) {
            if seen[nb] {
                continue;
            }
            // Touching the non-interior set is an escape whatever the value there.
            if !mask.is_interior(nb) {
                return None;
            }
            if level(nb) > t {
                continue;
            }
            seen[nb] = true;
            queue.push_back(nb);
        }
    }
    out.sort_unstable();
    Some(out)
}

/// Interior nodes with `|x - c|^2 <= t`.
pub fn disc_nodes(mask: &DomainMask, c: &Point, t: f64) -> Vec<usize> {
    let g = mask.grid();
    mask.interior()
        .iter()
        .copied()
        .filter(|&i| {
            let p = g.point(i);
            let d: Point = std::array::from_fn(|k| p[k] - c[k]);
            norm_sq(&d) <= t
        })
        .collect()
}

/// Poisson kernel of the ball of radius `|pole|` in `R^d`.
pub fn poisson(p: &Point, pole: &Point, d: usize) -> f64 {
    let diff: Point = std::array::from_fn(|k| p[k] - pole[k]);
    (norm_sq(pole) - norm_sq(p)) / norm_sq(&diff).sqrt().powi(d as i32)
}

/// Smallest value `m` among `vals` with `#{v > m} < lambda * len`,
/// computed by counting rather than accumulation.
pub fn upper_quantile(vals: &[f64], lambda: f64) -> f64 {
    let mut s = vals.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    for &m in &s {
        let above = (s.len() - s.partition_point(|&v| v <= m)) as f64;
        if above < lambda * n {
            return m;
        }
    }
    f64::NAN
}

pub fn center_node(g: &Grid) -> usize {
    g.nearest(&[0.0; 4]).unwrap().0
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
