//! Parsers for the small command-line mini-languages: field sources,
//! boundary data, center sets and height lists.

use std::path::Path;

use cma_lab::experiment::sample_centers;
use cma_lab::families::{formula, check_formula};
use cma_lab::field::load_mask;
use cma_lab::{DomainMask, Error, Grid, Result, ScalarField, Trace};

fn num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("{what}: `{s}` is not a number")))
}

fn count(s: &str, what: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| Error::Config(format!("{what}: `{s}` is not a count")))
}

/// `const:C`, `formula:ID:EPS` (giving `1 + EPS g`) or a `.cmaf` path
/// (optionally prefixed with `field:`).
pub fn field(spec: &str, grid: &Grid, mask: &DomainMask) -> Result<ScalarField> {
    if let Some(c) = spec.strip_prefix("const:") {
        return Ok(ScalarField::constant(grid, num(c, "const")?));
    }
    if let Some(rest) = spec.strip_prefix("formula:") {
        let (id, eps) = rest.split_once(':').unwrap_or((rest, "1"));
        check_formula(id)?;
        let eps = num(eps, "formula eps")?;
        let mut f = ScalarField::constant(grid, 1.0);
        for &i in mask.interior() {
            f.set(i, 1.0 + eps * formula(id, &grid.point(i))?);
        }
        return Ok(f);
    }
    let path = spec.strip_prefix("field:").unwrap_or(spec);
    let f = ScalarField::load(path)?;
    if !f.grid().same_lattice(grid) {
        return Err(Error::Config(format!("{path}: lattice differs from the domain")));
    }
    Ok(f)
}

/// `zero`, `const:C` or `field:PATH` (boundary values read off the field by
/// interpolation at the cut points).
pub fn boundary(spec: &str, mask: &DomainMask) -> Result<Trace> {
    if spec == "zero" {
        return Ok(Trace::zeros(mask));
    }
    if let Some(c) = spec.strip_prefix("const:") {
        return Ok(Trace::constant(mask, num(c, "const")?));
    }
    if let Some(path) = spec.strip_prefix("field:") {
        let f = ScalarField::load(path)?;
        return Trace::from_field(mask, &f);
    }
    Err(Error::Config(format!("boundary spec `{spec}`: expected zero, const:C or field:PATH")))
}

/// Mask from a file, or the unit ball on the lattice of `grid`.
pub fn domain(path: Option<&Path>, grid: &Grid) -> Result<DomainMask> {
    match path {
        Some(p) => {
            let m = load_mask(p)?;
            if !m.grid().same_lattice(grid) {
                return Err(Error::Config(format!("{}: lattice differs from the field", p.display())));
            }
            Ok(m)
        }
        None => DomainMask::ball(grid, 0.0, None),
    }
}

/// `grid:stride=K[,radius=R]`, `spiral:COUNT[,RADIUS]` or `nodes:I,J,...`.
pub fn centers(spec: &str, mask: &DomainMask) -> Result<Vec<usize>> {
    let g = mask.grid();
    if let Some(rest) = spec.strip_prefix("grid:") {
        let mut stride = 8;
        let mut radius = 0.5;
        for kv in rest.split(',') {
            match kv.split_once('=') {
                Some(("stride", v)) => stride = count(v, "stride")?.max(1),
                Some(("radius", v)) => radius = num(v, "radius")?,
                _ => return Err(Error::Config(format!("centers: unknown key in `{kv}`"))),
            }
        }
        return Ok(mask
            .interior()
            .iter()
            .copied()
            .filter(|&i| {
                let mi = g.multi_index(i);
                (0..g.dim()).all(|d| mi[d] % stride == g.dims()[d] / 2 % stride)
                    && cma_lab::grid::norm_sq(&g.point(i)) <= radius * radius
            })
            .collect());
    }
    if let Some(rest) = spec.strip_prefix("spiral:") {
        let (c, r) = rest.split_once(',').unwrap_or((rest, "0.45"));
        return Ok(sample_centers(mask, count(c, "spiral count")?, num(r, "spiral radius")?));
    }
    if let Some(rest) = spec.strip_prefix("nodes:") {
        let nodes = rest.split(',').map(|s| count(s, "node")).collect::<Result<Vec<_>>>()?;
        if let Some(&bad) = nodes.iter().find(|&&i| i >= g.len() || !mask.is_interior(i)) {
            return Err(Error::Config(format!("node {bad} is not an interior node")));
        }
        return Ok(nodes);
    }
    Err(Error::Config(format!("centers spec `{spec}`: expected grid:, spiral: or nodes:")))
}

/// `geometric:T0,RATIO,COUNT` or a comma-separated list.
pub fn heights(spec: &str) -> Result<Vec<f64>> {
    let hs = if let Some(rest) = spec.strip_prefix("geometric:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Config("geometric heights need T0,RATIO,COUNT".into()));
        }
        let (t0, r, k) = (num(parts[0], "t0")?, num(parts[1], "ratio")?, count(parts[2], "count")?);
        (0..k).map(|j| t0 * r.powi(j as i32)).collect()
    } else {
        spec.split(',').map(|s| num(s, "height")).collect::<Result<Vec<_>>>()?
    };
    if hs.is_empty() || hs.iter().any(|&t| t.is_nan() || t <= 0.0) {
        return Err(Error::Config(format!("heights `{spec}` must be a non-empty list of positive numbers")));
    }
    Ok(hs)
}
