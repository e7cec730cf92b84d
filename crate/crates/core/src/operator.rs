//! Matrix-free real linear operators.
//!
//! Besides `A·v` and `Aᵀ·u`, GAMP needs the element-wise squared matrix
//! `A∘A` applied to variance vectors, so every operator exposes all four
//! products. The lifted Kronecker backing represents
//!
//! ```text
//! A = [ Re(Ã)  -Im(Ã) ]      Ã = Bᵀ ⊗ I_{M_r}
//!     [ Im(Ã)   Re(Ã) ]
//! ```
//!
//! acting on `x = [Re vec(H̃); Im vec(H̃)]` (column-major vec) without ever
//! forming the `2·M_r·K × 2·M_r·M_t` matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_len, Error, Result};

/// Largest `rows·cols` for which [`LinearOperator::to_dense`] will build a matrix.
pub const MAX_DENSE_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct LinearOperator {
    rows: usize,
    cols: usize,
    backing: Backing,
}

#[derive(Debug, Clone)]
pub enum Backing {
    DenseReal {
        matrix: DMatrix<f64>,
        squared: DMatrix<f64>,
    },
    RealLiftedKron(LiftedKron),
}

/// Pilot matrix split into real/imaginary planes (column-major `M_t × K`),
/// plus their element-wise squares.
#[derive(Debug, Clone)]
pub struct LiftedKron {
    mt: usize,
    k: usize,
    mr: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    re2: Vec<f64>,
    im2: Vec<f64>,
}

impl LinearOperator {
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        let squared = matrix.map(|a| a * a);
        Self {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            backing: Backing::DenseReal { matrix, squared },
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::dense(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.apply_adjoint_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_abs2(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.apply_abs2_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_abs2_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.apply_abs2_adjoint_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("operator input", self.cols, v.len())?;
        check_len("operator output", self.rows, out.len())?;
        match &self.backing {
            Backing::DenseReal { matrix, .. } => dense_mul(matrix, v, out),
            Backing::RealLiftedKron(k) => k.forward(v, out, false),
        }
        Ok(())
    }

    pub fn apply_adjoint_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("adjoint input", self.rows, u.len())?;
        check_len("adjoint output", self.cols, out.len())?;
        match &self.backing {
            Backing::DenseReal { matrix, .. } => dense_mul_t(matrix, u, out),
            Backing::RealLiftedKron(k) => k.backward(u, out, false),
        }
        Ok(())
    }

    pub fn apply_abs2_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("abs2 input", self.cols, v.len())?;
        check_len("abs2 output", self.rows, out.len())?;
        check_nonnegative(v)?;
        match &self.backing {
            Backing::DenseReal { squared, .. } => dense_mul(squared, v, out),
            Backing::RealLiftedKron(k) => k.forward(v, out, true),
        }
        Ok(())
    }

    pub fn apply_abs2_adjoint_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("abs2 adjoint input", self.rows, u.len())?;
        check_len("abs2 adjoint output", self.cols, out.len())?;
        check_nonnegative(u)?;
        match &self.backing {
            Backing::DenseReal { squared, .. } => dense_mul_t(squared, u, out),
            Backing::RealLiftedKron(k) => k.backward(u, out, true),
        }
        Ok(())
    }

    /// Squared Frobenius norm of the real operator.
    pub fn frobenius_norm_sq(&self) -> f64 {
        match &self.backing {
            Backing::DenseReal { squared, .. } => squared.iter().sum(),
            Backing::RealLiftedKron(k) => {
                let b_sq: f64 = k.re2.iter().zip(&k.im2).map(|(a, b)| a + b).sum();
                2.0 * k.mr as f64 * b_sq
            }
        }
    }

    /// Explicit matrix, for oracle comparisons on small instances only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.rows.saturating_mul(self.cols) > MAX_DENSE_ENTRIES {
            return Err(Error::domain(format!(
                "refusing to materialize a {}x{} operator",
                self.rows, self.cols
            )));
        }
        if let Backing::DenseReal { matrix, .. } = &self.backing {
            return Ok(matrix.clone());
        }
        let mut dense = DMatrix::zeros(self.rows, self.cols);
        let mut e = vec![0.0; self.cols];
        let mut col = vec![0.0; self.rows];
        for j in 0..self.cols {
            e[j] = 1.0;
            self.apply_into(&e, &mut col)?;
            dense.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(dense)
    }
}

/// Real lifting of `Bᵀ ⊗ I_{M_r}` for a complex pilot matrix `B` (`M_t × K`).
pub fn build_real_lifted_operator(
    pilots: &DMatrix<Complex64>,
    mr: usize,
) -> Result<LinearOperator> {
    let (mt, k) = pilots.shape();
    if mt == 0 || k == 0 || mr == 0 {
        return Err(Error::domain(format!(
            "lifted operator needs M_t, K, M_r >= 1 (got {mt}, {k}, {mr})"
        )));
    }
    let re: Vec<f64> = pilots.iter().map(|z| z.re).collect();
    let im: Vec<f64> = pilots.iter().map(|z| z.im).collect();
    let re2 = re.iter().map(|a| a * a).collect();
    let im2 = im.iter().map(|a| a * a).collect();
    Ok(LinearOperator {
        rows: 2 * mr * k,
        cols: 2 * mr * mt,
        backing: Backing::RealLiftedKron(LiftedKron {
            mt,
            k,
            mr,
            re,
            im,
            re2,
            im2,
        }),
    })
}

impl LiftedKron {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.mt, self.k, self.mr)
    }

    /// `out = [X_r P - X_i Q ; X_r Q + X_i P]` (or with `+` in the first
    /// block when `squared`), where `X` is `M_r × M_t` and `P, Q` are the
    /// real/imaginary pilot planes or their squares.
    fn forward(&self, v: &[f64], out: &mut [f64], squared: bool) {
        let (mr, mt, k) = (self.mr, self.mt, self.k);
        let (xr, xi) = v.split_at(mr * mt);
        let (yr, yi) = out.split_at_mut(mr * k);
        let (p, q, sign) = if squared {
            (&self.re2, &self.im2, 1.0)
        } else {
            (&self.re, &self.im, -1.0)
        };
        yr.fill(0.0);
        yi.fill(0.0);
        for kk in 0..k {
            let yr_col = &mut yr[kk * mr..(kk + 1) * mr];
            let yi_col = &mut yi[kk * mr..(kk + 1) * mr];
            for j in 0..mt {
                let pj = p[j + mt * kk];
                let qj = q[j + mt * kk];
                let xr_col = &xr[j * mr..(j + 1) * mr];
                let xi_col = &xi[j * mr..(j + 1) * mr];
                for i in 0..mr {
                    yr_col[i] += xr_col[i] * pj + sign * xi_col[i] * qj;
                    yi_col[i] += xr_col[i] * qj + xi_col[i] * pj;
                }
            }
        }
    }

    /// Transpose of [`Self::forward`]: `U` is `M_r × K` and the result is
    /// `[U_r Pᵀ + U_i Qᵀ ; U_i Pᵀ - U_r Qᵀ]` (all `+` when `squared`).
    fn backward(&self, u: &[f64], out: &mut [f64], squared: bool) {
        let (mr, mt, k) = (self.mr, self.mt, self.k);
        let (ur, ui) = u.split_at(mr * k);
        let (gr, gi) = out.split_at_mut(mr * mt);
        let (p, q, sign) = if squared {
            (&self.re2, &self.im2, 1.0)
        } else {
            (&self.re, &self.im, -1.0)
        };
        for j in 0..mt {
            let gr_col = &mut gr[j * mr..(j + 1) * mr];
            let gi_col = &mut gi[j * mr..(j + 1) * mr];
            gr_col.fill(0.0);
            gi_col.fill(0.0);
            for kk in 0..k {
                let pj = p[j + mt * kk];
                let qj = q[j + mt * kk];
                let ur_col = &ur[kk * mr..(kk + 1) * mr];
                let ui_col = &ui[kk * mr..(kk + 1) * mr];
                for i in 0..mr {
                    gr_col[i] += ur_col[i] * pj + ui_col[i] * qj;
                    gi_col[i] += ui_col[i] * pj + sign * ur_col[i] * qj;
                }
            }
        }
    }
}

fn dense_mul(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
            *o += a * vj;
        }
    }
}

fn dense_mul_t(m: &DMatrix<f64>, u: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = m.column(j).iter().zip(u).map(|(a, b)| a * b).sum();
    }
}

fn check_nonnegative(v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| !(x >= 0.0)) {
        None => Ok(()),
        Some(i) => Err(Error::domain(format!(
            "variance vector entry {i} is negative or NaN ({})",
            v[i]
        ))),
    }
}
