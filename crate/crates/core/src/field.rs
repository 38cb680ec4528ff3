//! Scalar fields on grids, boundary traces on stencil cuts, tensor-cubic
//! interpolation and the CMAF binary format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundaryRecord, DomainMask, Grid, NodeKind, Point, MAX_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    /// `f` on interior nodes, NaN elsewhere.
    pub fn from_fn_on(mask: &DomainMask, f: impl Fn(&Point) -> f64) -> ScalarField {
        let grid = mask.grid();
        let mut values = vec![f64::NAN; grid.len()];
        for &i in mask.interior() {
            values[i] = f(&grid.point(i));
        }
        ScalarField { grid: grid.clone(), values }
    }

    pub fn constant(grid: &Grid, c: f64) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn nan(grid: &Grid) -> ScalarField {
        ScalarField::constant(grid, f64::NAN)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert!(self.grid.same_lattice(&other.grid), "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Copy keeping interior values and setting everything else to NaN.
    pub fn restricted(&self, mask: &DomainMask) -> ScalarField {
        let mut values = vec![f64::NAN; self.values.len()];
        for &i in mask.interior() {
            values[i] = self.values[i];
        }
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Largest `|self - other|` over `nodes`.
    pub fn max_abs_diff_on(&self, other: &ScalarField, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| (self.values[i] - other.values[i]).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i].abs()).fold(0.0, f64::max)
    }

    pub fn min_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Tensor-product cubic interpolation at `p`; `None` when the support leaves
    /// the grid or touches an undefined value.
    pub fn interpolate(&self, p: &Point) -> Option<f64> {
        interpolate(self, p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_field(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScalarField> {
        let mut r = BufReader::new(File::open(path)?);
        read_field(&mut r)
    }
}

/// Dirichlet data, one value per stencil cut of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    values: Vec<f64>,
}

impl Trace {
    pub fn new(mask: &DomainMask, values: Vec<f64>) -> Result<Trace> {
        if values.len() != mask.cuts().len() {
            return Err(Error::Precondition(format!(
                "trace has {} values, mask has {} cuts",
                values.len(),
                mask.cuts().len()
            )));
        }
        Ok(Trace { values })
    }

    pub fn from_fn(mask: &DomainMask, f: impl Fn(&Point) -> f64) -> Trace {
        Trace { values: mask.cuts().iter().map(|c| f(&c.point)).collect() }
    }

    pub fn constant(mask: &DomainMask, c: f64) -> Trace {
        Trace { values: vec![c; mask.cuts().len()] }
    }

    pub fn zeros(mask: &DomainMask) -> Trace {
        Trace::constant(mask, 0.0)
    }

    /// Values of `field` at the cuts: read directly at lattice nodes, interpolated
    /// elsewhere.
    pub fn from_field(mask: &DomainMask, field: &ScalarField) -> Result<Trace> {
        let mut values = Vec::with_capacity(mask.cuts().len());
        for c in mask.cuts() {
            let v = match c.node {
                Some(i) if field.values[i].is_finite() => field.values[i],
                _ => interpolate(field, &c.point).ok_or_else(|| {
                    Error::Precondition(format!("field undefined near boundary point {:?}", c.point))
                })?,
            };
            values.push(v);
        }
        Ok(Trace { values })
    }

    /// Values carried by the mask's boundary records, spread to the cuts by
    /// inverse-distance weighting of the nearest records.
    pub fn from_records(mask: &DomainMask) -> Trace {
        let recs = mask.boundary();
        let values = mask
            .cuts()
            .iter()
            .map(|c| {
                let mut best: Vec<(f64, f64)> = Vec::with_capacity(5);
                for r in recs {
                    let d = crate::grid::dist(&r.point, &c.point);
                    if best.len() < 4 || d < best[best.len() - 1].0 {
                        let at = best.partition_point(|&(b, _)| b <= d);
                        best.insert(at, (d, r.value));
                        best.truncate(4);
                    }
                }
                if best[0].0 < 1e-12 {
                    return best[0].1;
                }
                let (num, den) = best.iter().fold((0.0, 0.0), |(n, d), &(dd, v)| (n + v / dd, d + 1.0 / dd));
                num / den
            })
            .collect();
        Trace { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cut: usize) -> f64 {
        self.values[cut]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Trace {
        Trace { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Trace, f: impl Fn(f64, f64) -> f64) -> Trace {
        Trace { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

fn cubic_weights(t: f64) -> [f64; 4] {
    // Lagrange basis on nodes -1, 0, 1, 2.
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

pub fn interpolate(field: &ScalarField, p: &Point) -> Option<f64> {
    let g = field.grid();
    let d = g.dim();
    let c = g.locate(p);
    let mut base = [0i64; MAX_DIM];
    let mut w = [[0.0; 4]; MAX_DIM];
    let mut exact = [None; MAX_DIM];
    for a in 0..d {
        let max = (g.dims()[a] - 1) as f64;
        if !(c[a] >= -1e-9 && c[a] <= max + 1e-9) {
            return None;
        }
        let r = c[a].round();
        if (c[a] - r).abs() < 1e-9 {
            exact[a] = Some(r as i64);
            continue;
        }
        let mut b = c[a].floor() as i64 - 1;
        b = b.clamp(0, g.dims()[a] as i64 - 4);
        base[a] = b;
        w[a] = cubic_weights(c[a] - (b + 1) as f64);
    }
    let free: Vec<usize> = (0..d).filter(|&a| exact[a].is_none()).collect();
    let total = 4usize.pow(free.len() as u32);
    let mut sum = 0.0;
    let mut mi = [0usize; MAX_DIM];
    for a in 0..d {
        if let Some(k) = exact[a] {
            mi[a] = k as usize;
        }
    }
    for combo in 0..total {
        let mut weight = 1.0;
        let mut r = combo;
        for &a in &free {
            let k = r % 4;
            r /= 4;
            mi[a] = (base[a] + k as i64) as usize;
            weight *= w[a][k];
        }
        let v = field.values[g.index(&mi)];
        if !v.is_finite() {
            return None;
        }
        sum += weight * v;
    }
    Some(sum)
}

const MAGIC: &[u8; 4] = b"CMAF";
const VERSION: u32 = 1;

fn write_header(w: &mut impl Write, g: &Grid) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[g.n() as u8])?;
    for &d in g.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &o in g.origin() {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&g.spacing().to_le_bytes())?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated CMAF stream: {e}")))?;
    Ok(buf)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

pub fn read_header(r: &mut impl Read) -> Result<Grid> {
    let magic = read_exact::<4>(r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_exact::<4>(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_exact::<1>(r)?[0] as usize;
    if n != 1 && n != 2 {
        return Err(Error::Format(format!("complex dimension {n} not in {{1, 2}}")));
    }
    let mut dims = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        dims.push(u32::from_le_bytes(read_exact::<4>(r)?) as usize);
    }
    let mut origin = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        origin.push(read_f64(r)?);
    }
    let spacing = read_f64(r)?;
    Grid::new(n, dims, origin, spacing).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field(w: &mut impl Write, field: &ScalarField) -> Result<()> {
    write_header(w, field.grid())?;
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<ScalarField> {
    let grid = read_header(r)?;
    let mut bytes = vec![0u8; grid.len() * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated field payload: {e}")))?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::new(grid, values)
}

/// Node classes as `u8`, then a `u64` record count and the records.
pub fn write_mask(w: &mut impl Write, mask: &DomainMask) -> Result<()> {
    let g = mask.grid();
    write_header(w, g)?;
    let kinds: Vec<u8> = mask.kinds().iter().map(|&k| k as u8).collect();
    w.write_all(&kinds)?;
    w.write_all(&(mask.boundary().len() as u64).to_le_bytes())?;
    for rec in mask.boundary() {
        w.write_all(&(rec.node as u64).to_le_bytes())?;
        for a in 0..g.dim() {
            w.write_all(&rec.point[a].to_le_bytes())?;
        }
        w.write_all(&rec.value.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mask(r: &mut impl Read) -> Result<DomainMask> {
    let grid = read_header(r)?;
    let mut bytes = vec![0u8; grid.len()];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated mask payload: {e}")))?;
    let kinds = bytes
        .iter()
        .map(|&b| NodeKind::from_u8(b).ok_or_else(|| Error::Format(format!("bad node class {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let count = read_u64(r)? as usize;
    if count > grid.len() {
        return Err(Error::Format(format!("record count {count} exceeds node count")));
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let node = read_u64(r)? as usize;
        let mut point = [0.0; MAX_DIM];
        for p in point.iter_mut().take(grid.dim()) {
            *p = read_f64(r)?;
        }
        let value = read_f64(r)?;
        records.push(BoundaryRecord { node, point, value });
    }
    DomainMask::from_records(&grid, kinds, records)
}

pub fn save_mask(path: impl AsRef<Path>, mask: &DomainMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mask(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<DomainMask> {
    let mut r = BufReader::new(File::open(path)?);
    read_mask(&mut r)
}
