//! Dense linear-algebra kernels: numerical rank, pseudo-inverse, left kernels,
//! the matrix exponential and Frobenius distances.
//!
//! Matrices are plain `nalgebra` dynamic matrices. Every rank decision uses the
//! same rule: a singular value counts iff it exceeds
//! `rtol * sigma_max * max(rows, cols)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Outcome of a numerical rank decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    /// Full singular spectrum, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Absolute threshold the spectrum was compared against.
    pub tolerance_used: f64,
}

impl RankReport {
    pub fn is_full(&self, target: usize) -> bool {
        self.rank == target
    }

    /// Smallest singular value that was counted toward the rank, if any.
    pub fn smallest_counted(&self) -> Option<f64> {
        self.rank
            .checked_sub(1)
            .map(|i| self.singular_values[i])
    }
}

/// Builds a matrix from row slices, rejecting ragged or non-finite input.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims("ragged rows"));
    }
    let m = Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

pub fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// `[top; bottom]`.
pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::dims(format!(
            "vstack: {} vs {} columns",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    Ok(out)
}

/// `[left, right]`.
pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Matrix> {
    if left.nrows() != right.nrows() {
        return Err(Error::dims(format!(
            "hstack: {} vs {} rows",
            left.nrows(),
            right.nrows()
        )));
    }
    let mut out = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    Ok(out)
}

/// Thin SVD with singular values in descending order.
pub(crate) struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v_t: Matrix,
}

/// One-sided Jacobi SVD.
///
/// nalgebra's bidiagonal SVD can return singular vectors that reconstruct an
/// ill-conditioned input to only 1e-4. Jacobi rotations orthogonalize the
/// columns to relative precision, so every triplet is accurate even for the
/// smallest singular values. Sizes here are tiny, so the cost is irrelevant.
pub(crate) fn svd(m: &Matrix, vectors: bool) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose(), vectors)?;
        return Ok(Svd {
            u: t.v_t.transpose(),
            sigma: t.sigma,
            v_t: t.u.transpose(),
        });
    }
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    // Below this the computed inner product is rounding noise.
    let tol = rows as f64 * f64::EPSILON;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical("Jacobi SVD did not converge"));
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    if !vectors {
        return Ok(Svd {
            u: Matrix::zeros(0, 0),
            sigma,
            v_t: Matrix::zeros(0, 0),
        });
    }
    let mut u = Matrix::zeros(rows, cols);
    let mut v_sorted = Matrix::zeros(cols, cols);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        v_sorted.set_column(k, &v.column(j));
    }
    // Exactly zero columns carry no direction; complete them orthonormally.
    for k in 0..cols {
        if sigma[k] == 0.0 {
            let col = orthogonal_completion(&u, k)?;
            u.set_column(k, &col);
        }
    }
    Ok(Svd {
        u,
        sigma,
        v_t: v_sorted.transpose(),
    })
}

const JACOBI_MAX_SWEEPS: usize = 60;

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// A unit vector orthogonal to the first `k` columns of `u`, projected from
/// the coordinate axis with the largest residual.
fn orthogonal_completion(u: &Matrix, k: usize) -> Result<Vector> {
    let basis = u.columns(0, k);
    let mut best = Vector::zeros(u.nrows());
    for e in 0..u.nrows() {
        let mut w = Vector::zeros(u.nrows());
        w[e] = 1.0;
        // Two Gram-Schmidt passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            w -= &basis * (basis.transpose() * &w);
        }
        if w.norm() > best.norm() {
            best = w;
        }
    }
    let norm = best.norm();
    if norm <= f64::EPSILON {
        return Err(Error::numerical("cannot complete an orthonormal basis"));
    }
    Ok(best / norm)
}

fn threshold(sigma: &[f64], rows: usize, cols: usize, rtol: f64) -> f64 {
    let smax = sigma.first().copied().unwrap_or(0.0);
    rtol * smax * rows.max(cols) as f64
}

fn check_rtol(rtol: f64) -> Result<()> {
    if rtol.is_finite() && rtol > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("rtol must be positive, got {rtol}")))
    }
}

pub fn svd_rank(m: &Matrix, rtol: f64) -> Result<RankReport> {
    check_rtol(rtol)?;
    if m.is_empty() {
        return Err(Error::invalid("rank of an empty matrix"));
    }
    ensure_finite(m, "rank input")?;
    let singular_values = svd(m, false)?.sigma;
    let tol = threshold(&singular_values, m.nrows(), m.ncols(), rtol);
    let rank = singular_values.iter().filter(|&&v| v > tol).count();
    Ok(RankReport {
        rank,
        singular_values,
        tolerance_used: tol,
    })
}

/// Moore-Penrose pseudo-inverse, truncated at the [`svd_rank`] threshold.
pub fn pinv(m: &Matrix, rtol: f64) -> Result<Matrix> {
    check_rtol(rtol)?;
    if m.is_empty() {
        return Ok(Matrix::zeros(m.ncols(), m.nrows()));
    }
    ensure_finite(m, "pinv input")?;
    let s = svd(m, true)?;
    let u = &s.u;
    let vt = &s.v_t;
    let sigma = &s.sigma;
    let tol = threshold(sigma, m.nrows(), m.ncols(), rtol);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (k, &sv) in sigma.iter().enumerate() {
        if sv > tol {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / sv;
        }
    }
    Ok(out)
}

/// Orthonormal basis, one vector per row, of `{ v : v^T M = 0 }`.
///
/// Returns a `0 x rows` matrix when `M` has full row rank.
pub fn left_kernel_basis(m: &Matrix, rtol: f64) -> Result<Matrix> {
    check_rtol(rtol)?;
    let rows = m.nrows();
    if m.ncols() == 0 {
        return Ok(Matrix::identity(rows, rows));
    }
    ensure_finite(m, "kernel input")?;
    // Pad with zero columns so the SVD returns a full set of left vectors.
    let padded = if m.ncols() < rows {
        hstack(m, &Matrix::zeros(rows, rows - m.ncols()))?
    } else {
        m.clone()
    };
    let s = svd(&padded, true)?;
    let u = &s.u;
    let sigma = &s.sigma;
    let tol = threshold(sigma, m.nrows(), m.ncols(), rtol);
    let rank = sigma.iter().filter(|&&v| v > tol).count();
    let dim = rows - rank;
    let mut basis = Matrix::zeros(dim, rows);
    for (i, k) in (rank..rows).enumerate() {
        basis.row_mut(i).copy_from(&u.column(k).transpose());
    }
    Ok(basis)
}

/// Orthonormal basis, one vector per column, of the column space of `M`.
pub fn range_basis(m: &Matrix, rtol: f64) -> Result<Matrix> {
    check_rtol(rtol)?;
    if m.is_empty() {
        return Ok(Matrix::zeros(m.nrows(), 0));
    }
    let s = svd(m, true)?;
    let u = &s.u;
    let sigma = &s.sigma;
    let tol = threshold(sigma, m.nrows(), m.ncols(), rtol);
    let rank = sigma.iter().filter(|&&v| v > tol).count();
    Ok(u.columns(0, rank).into_owned())
}

/// Orthonormal basis, one vector per column, of `{ v : M v = 0 }`.
pub fn null_space_basis(m: &Matrix, rtol: f64) -> Result<Matrix> {
    let left = left_kernel_basis(&m.transpose(), rtol)?;
    Ok(left.transpose())
}

pub fn frobenius_distance(m1: &Matrix, m2: &Matrix) -> Result<f64> {
    if m1.shape() != m2.shape() {
        return Err(Error::dims(format!(
            "frobenius_distance: {:?} vs {:?}",
            m1.shape(),
            m2.shape()
        )));
    }
    Ok((m1 - m2).norm())
}

fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Pade coefficients and the 1-norm bounds below which each degree meets unit
// roundoff (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a Pade core of degree
/// 3, 5, 7, 9 or 13, chosen from the 1-norm.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dims(format!("expm of a {:?} matrix", a.shape())));
    }
    ensure_finite(a, "expm input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let ident = Matrix::identity(n, n);
    let norm = norm1(a);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(deg, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs, &ident);
        }
    }

    let s = (norm / THETA13).log2().ceil().max(0.0);
    if s > 1000.0 {
        return Err(Error::numerical(format!("expm: norm {norm:e} too large")));
    }
    let s = s as i32;
    let scaled = a / 2f64.powi(s);
    let mut r = pade13(&scaled, &ident)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("expm overflow"));
    }
    Ok(r)
}

fn pade_low(a: &Matrix, c: &[f64], ident: &Matrix) -> Result<Matrix> {
    let a2 = a * a;
    let mut powers = vec![ident.clone()];
    for k in 1..c.len() / 2 {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let mut u = Matrix::zeros(a.nrows(), a.ncols());
    let mut v = Matrix::zeros(a.nrows(), a.ncols());
    for (k, p) in powers.iter().enumerate() {
        u += p * c[2 * k + 1];
        v += p * c[2 * k];
    }
    let u = a * u;
    solve_pade(&u, &v)
}

fn pade13(a: &Matrix, ident: &Matrix) -> Result<Matrix> {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + ident * b[0];
    solve_pade(&u, &v)
}

fn solve_pade(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::numerical("expm: singular Pade denominator"))
}
