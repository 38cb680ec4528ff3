//! Closed-form complex matrix algebra for `n <= 2`.

use num_complex::Complex64;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// General complex `n x n` matrix, `n` in `{1, 2}`, stored in a fixed 2x2 block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat {
    pub n: usize,
    pub m: [[C64; 2]; 2],
}

impl CMat {
    pub fn zeros(n: usize) -> CMat {
        CMat { n, m: [[ZERO; 2]; 2] }
    }

    pub fn identity(n: usize) -> CMat {
        let mut out = CMat::zeros(n);
        for i in 0..n {
            out.m[i][i] = ONE;
        }
        out
    }

    pub fn from_rows(n: usize, rows: [[C64; 2]; 2]) -> CMat {
        let mut out = CMat { n, m: rows };
        out.clear_padding();
        out
    }

    pub fn diag(d: &[f64]) -> CMat {
        let mut out = CMat::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            out.m[i][i] = C64::new(v, 0.0);
        }
        out
    }

    fn clear_padding(&mut self) {
        if self.n == 1 {
            self.m[0][1] = ZERO;
            self.m[1][0] = ZERO;
            self.m[1][1] = ZERO;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[i][j]
    }

    pub fn det(&self) -> C64 {
        match self.n {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    pub fn inverse(&self) -> Option<CMat> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let mut out = CMat::zeros(self.n);
        match self.n {
            1 => out.m[0][0] = ONE / d,
            _ => {
                out.m[0][0] = self.m[1][1] / d;
                out.m[0][1] = -self.m[0][1] / d;
                out.m[1][0] = -self.m[1][0] / d;
                out.m[1][1] = self.m[0][0] / d;
            }
        }
        Some(out)
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] = (0..self.n).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMat {
        let mut out = CMat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] = self.m[j][i].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> CMat {
        let mut out = *self;
        for row in &mut out.m {
            for v in row {
                *v *= s;
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64; 2]) -> [C64; 2] {
        let mut out = [ZERO; 2];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|k| self.m[i][k] * v[k]).sum();
        }
        out
    }

    pub fn transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn conj(&self) -> CMat {
        let mut out = *self;
        for row in &mut out.m {
            for v in row {
                *v = v.conj();
            }
        }
        out
    }

    /// Complex Hessian of `w -> phi(A w)` given the complex Hessian `h` of `phi`:
    /// `A^T h conj(A)`.
    pub fn pullback(&self, h: &Herm) -> Herm {
        let full = self.transpose().mul(&h.as_cmat()).mul(&self.conj());
        Herm::from_cmat(&full)
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    /// Real-linear action on `R^{2n}` in `(x1, y1, x2, y2)` ordering.
    pub fn to_real(&self) -> [[f64; 4]; 4] {
        let mut r = [[0.0; 4]; 4];
        for i in 0..self.n {
            for j in 0..self.n {
                let c = self.m[i][j];
                r[2 * i][2 * j] = c.re;
                r[2 * i][2 * j + 1] = -c.im;
                r[2 * i + 1][2 * j] = c.im;
                r[2 * i + 1][2 * j + 1] = c.re;
            }
        }
        r
    }
}

/// Hermitian `n x n` matrix, `n` in `{1, 2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Herm {
    n: usize,
    m: [[C64; 2]; 2],
}

impl Herm {
    pub fn zeros(n: usize) -> Herm {
        Herm { n, m: [[ZERO; 2]; 2] }
    }

    pub fn identity(n: usize) -> Herm {
        let mut out = Herm::zeros(n);
        for i in 0..n {
            out.m[i][i] = ONE;
        }
        out
    }

    pub fn diag(d: &[f64]) -> Herm {
        let mut out = Herm::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            out.m[i][i] = C64::new(v, 0.0);
        }
        out
    }

    /// `n = 1`: `[[a]]`; `n = 2`: `[[a, b], [conj b, d]]`.
    pub fn new2(a: f64, b: C64, d: f64) -> Herm {
        Herm { n: 2, m: [[C64::new(a, 0.0), b], [b.conj(), C64::new(d, 0.0)]] }
    }

    pub fn scalar(a: f64) -> Herm {
        Herm::diag(&[a])
    }

    /// Hermitian part `(M + M^H) / 2` of a general matrix.
    pub fn from_cmat(c: &CMat) -> Herm {
        let mut out = Herm::zeros(c.n);
        for i in 0..c.n {
            for j in 0..c.n {
                out.m[i][j] = 0.5 * (c.m[i][j] + c.m[j][i].conj());
            }
        }
        out
    }

    /// Complex Hessian `1/4 [(H_{xi xj} + H_{yi yj}) + i (H_{xi yj} - H_{yi xj})]` of a
    /// real Hessian in `(x1, y1, x2, y2)` ordering.
    pub fn from_real_hessian(n: usize, h: &[[f64; 4]; 4]) -> Herm {
        let mut out = Herm::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
                let re = 0.25 * (h[xi][xj] + h[yi][yj]);
                let im = 0.25 * (h[xi][yj] - h[yi][xj]);
                out.m[i][j] = C64::new(re, if i == j { 0.0 } else { im });
            }
        }
        if n == 2 {
            // Enforce exact symmetry of the off-diagonal pair.
            let b = 0.5 * (out.m[0][1] + out.m[1][0].conj());
            out.m[0][1] = b;
            out.m[1][0] = b.conj();
        }
        out
    }

    /// Symmetric `R` with `x^T R x = sum_ij H_ij w_i conj(w_j)` for `w = to_complex(x)`.
    pub fn to_real_form(&self) -> [[f64; 4]; 4] {
        let mut r = [[0.0; 4]; 4];
        for i in 0..self.n {
            for j in 0..self.n {
                let c = self.m[i][j];
                r[2 * i][2 * j] = c.re;
                r[2 * i + 1][2 * j + 1] = c.re;
                r[2 * i][2 * j + 1] = c.im;
                r[2 * i + 1][2 * j] = -c.im;
            }
        }
        r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[i][j]
    }

    pub fn as_cmat(&self) -> CMat {
        CMat { n: self.n, m: self.m }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i].re).sum()
    }

    pub fn det(&self) -> f64 {
        match self.n {
            1 => self.m[0][0].re,
            _ => self.m[0][0].re * self.m[1][1].re - self.m[0][1].norm_sqr(),
        }
    }

    pub fn adjugate(&self) -> Herm {
        match self.n {
            1 => Herm::scalar(1.0),
            _ => Herm::new2(self.m[1][1].re, -self.m[0][1], self.m[0][0].re),
        }
    }

    pub fn inverse(&self) -> Option<Herm> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / d))
    }

    pub fn scale(&self, s: f64) -> Herm {
        let mut out = *self;
        for row in &mut out.m {
            for v in row {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &Herm) -> Herm {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Herm) -> Herm {
        self.add(&other.scale(-1.0))
    }

    /// `Re tr(A B)`; for Hermitian arguments the trace is real.
    pub fn trace_product(&self, other: &Herm) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += (self.m[i][j] * other.m[j][i]).re;
            }
        }
        s
    }

    /// Eigenvalues in ascending order; for `n = 1` both entries equal the single value.
    pub fn eigenvalues(&self) -> [f64; 2] {
        match self.n {
            1 => [self.m[0][0].re; 2],
            _ => {
                let a = self.m[0][0].re;
                let d = self.m[1][1].re;
                let mean = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + self.m[0][1].norm_sqr()).sqrt();
                [mean - r, mean + r]
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[1]
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.m[i][j].norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn max_abs_diff(&self, other: &Herm) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    /// Hermitian form `sum_ij H_ij w_i conj(w_j)`.
    pub fn form(&self, w: &[C64; 2]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += (self.m[i][j] * w[i] * w[j].conj()).re;
            }
        }
        s
    }

    /// Positive square root of a positive definite matrix.
    pub fn sqrt(&self) -> Option<Herm> {
        if self.min_eigenvalue() <= 0.0 {
            return None;
        }
        match self.n {
            1 => Some(Herm::scalar(self.m[0][0].re.sqrt())),
            _ => {
                let s = self.det().sqrt();
                let t = (self.trace() + 2.0 * s).sqrt();
                Some(self.add(&Herm::identity(2).scale(s)).scale(1.0 / t))
            }
        }
    }

    /// `H^{-1/2}` of a positive definite matrix.
    pub fn inv_sqrt(&self) -> Option<Herm> {
        self.sqrt()?.inverse()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

/// Complex vector from real coordinates `(x1, y1, x2, y2)`.
pub fn to_complex(n: usize, p: &[f64; 4]) -> [C64; 2] {
    let mut out = [ZERO; 2];
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = C64::new(p[2 * i], p[2 * i + 1]);
    }
    out
}

pub fn to_real(n: usize, z: &[C64; 2]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..n {
        out[2 * i] = z[i].re;
        out[2 * i + 1] = z[i].im;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse() {
        let h = Herm::new2(2.0, C64::new(0.3, -0.4), 1.5);
        assert!((h.det() - (3.0 - 0.25)).abs() < 1e-15);
        let inv = h.inverse().unwrap();
        let prod = h.as_cmat().mul(&inv.as_cmat());
        assert!(prod.max_abs_diff(&CMat::identity(2)) < 1e-14);
        let e = h.eigenvalues();
        assert!((e[0] * e[1] - h.det()).abs() < 1e-13);
        assert!((e[0] + e[1] - h.trace()).abs() < 1e-13);
    }

    #[test]
    fn sqrt_squares_back() {
        let h = Herm::new2(2.0, C64::new(0.3, -0.4), 1.5);
        let s = h.sqrt().unwrap();
        let sq = s.as_cmat().mul(&s.as_cmat());
        assert!(sq.max_abs_diff(&h.as_cmat()) < 1e-14);
        assert!(Herm::scalar(-1.0).sqrt().is_none());
    }

    #[test]
    fn real_embedding_matches_complex_product() {
        let a = CMat::from_rows(2, [[C64::new(1.0, 2.0), C64::new(0.5, 0.0)], [C64::new(0.0, -1.0), C64::new(3.0, 0.5)]]);
        let z = [C64::new(0.2, -0.7), C64::new(1.1, 0.4)];
        let w = a.apply(&z);
        let r = a.to_real();
        let x = to_real(2, &z);
        let mut y = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                y[i] += r[i][j] * x[j];
            }
        }
        let back = to_complex(2, &y);
        assert!((back[0] - w[0]).norm() < 1e-14 && (back[1] - w[1]).norm() < 1e-14);
    }

    #[test]
    fn real_form_matches_hermitian_form() {
        let h = Herm::new2(2.0, C64::new(0.3, -0.4), 1.5);
        let z = [C64::new(0.2, -0.7), C64::new(1.1, 0.4)];
        let r = h.to_real_form();
        let x = to_real(2, &z);
        let mut q = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                q += x[i] * r[i][j] * x[j];
            }
        }
        assert!((q - h.form(&z)).abs() < 1e-14);
    }
}
