//! Dense complex linear algebra used by every construction in the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Ranks and null spaces come
//! from a sorted SVD, so basis ordering is a pure function of the input.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Thresholds that turn the exact-rank arguments into numerical decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Singular values at or below `relative_rank_tol * sigma_max` count as zero.
    pub relative_rank_tol: f64,
    /// Bound on relative residuals (`‖A x‖ / ‖A‖`) accepted as exact.
    pub residual_tol: f64,
}

impl TolerancePolicy {
    pub fn new(relative_rank_tol: f64, residual_tol: f64) -> Result<Self> {
        for (name, v) in [
            ("relative_rank_tol", relative_rank_tol),
            ("residual_tol", residual_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidTolerance(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(Self {
            relative_rank_tol,
            residual_tol,
        })
    }
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            relative_rank_tol: 1e-8,
            residual_tol: 1e-8,
        }
    }
}

/// Draws a `rows x cols` matrix of i.i.d. CN(0, 1) entries from `rng`, filled
/// in row-major order.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries: Vec<Complex64> = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ComplexMatrix::from_row_slice(rows, cols, &entries)
}

/// Seeded circularly-symmetric complex Gaussian matrix with unit-variance entries.
pub fn sample_complex_gaussian(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complex_gaussian(rows, cols, &mut rng)
}

/// Singular values in descending order. Empty for a matrix with a zero dimension.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    SVD::new(a.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Ratio of the largest to the smallest singular value (infinite when singular).
pub fn condition_number(a: &ComplexMatrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn numerical_rank(a: &ComplexMatrix, tol: &TolerancePolicy) -> usize {
    let s = singular_values(a);
    let Some(&sigma_max) = s.first() else {
        return 0;
    };
    rank_above(&s, tol.relative_rank_tol * sigma_max)
}

/// Rank counted against an absolute threshold instead of one relative to
/// the matrix's own largest singular value. Needed when a matrix is expected
/// to vanish (leakage terms), where a relative test would see noise as signal.
pub fn rank_with_threshold(a: &ComplexMatrix, threshold: f64) -> usize {
    rank_above(&singular_values(a), threshold)
}

fn rank_above(s: &[f64], threshold: f64) -> usize {
    if s.first().is_none_or(|&m| m == 0.0) {
        return 0;
    }
    s.iter().filter(|&&v| v > threshold).count()
}

/// Orthonormal basis of the right null space, one basis vector per column.
///
/// Columns are the trailing right singular vectors in singular-value order,
/// so the result is reproducible for a fixed input. A trivial null space
/// yields a matrix with zero columns.
pub fn null_space_basis(a: &ComplexMatrix, tol: &TolerancePolicy) -> ComplexMatrix {
    null_space_impl(a, |sigma_max| tol.relative_rank_tol * sigma_max)
}

/// Null space with singular values below `threshold` treated as zero.
pub fn null_space_with_threshold(a: &ComplexMatrix, threshold: f64) -> ComplexMatrix {
    null_space_impl(a, |_| threshold)
}

fn null_space_impl(a: &ComplexMatrix, threshold: impl Fn(f64) -> f64) -> ComplexMatrix {
    let cols = a.ncols();
    if cols == 0 {
        return ComplexMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return ComplexMatrix::identity(cols, cols);
    }
    // The thin SVD only yields min(rows, cols) right singular vectors; pad
    // with zero rows so the full right basis is available.
    let square = if a.nrows() < cols {
        a.clone().resize_vertically(cols, ZERO)
    } else {
        a.clone()
    };
    let svd = SVD::new(square, false, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return ComplexMatrix::identity(cols, cols);
    }
    let cut = threshold(sigma_max);
    let rank = sigma.iter().filter(|&&v| v > cut).count();
    let v_t = svd.v_t.expect("right singular vectors requested");
    v_t.rows(rank, cols - rank).adjoint()
}

/// Basis of the left null space under the plain transpose: each returned
/// column `z` satisfies `zᵀ·A = 0`.
pub fn left_null_space_basis(a: &ComplexMatrix, tol: &TolerancePolicy) -> ComplexMatrix {
    null_space_basis(&a.transpose(), tol)
}

/// Concatenates blocks left to right. All blocks must share a row count.
pub fn hstack<'a, I>(blocks: I) -> Result<ComplexMatrix>
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    let blocks: Vec<&ComplexMatrix> = blocks.into_iter().collect();
    let first = blocks.first().ok_or(Error::EmptyStack)?;
    let rows = first.nrows();
    for (index, b) in blocks.iter().enumerate() {
        if b.nrows() != rows {
            return Err(Error::DimensionMismatch {
                index,
                rows: b.nrows(),
                cols: b.ncols(),
                expected: format!("{rows} rows"),
            });
        }
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), b.shape()).copy_from(b);
        offset += b.ncols();
    }
    Ok(out)
}

/// Concatenates blocks top to bottom. All blocks must share a column count.
pub fn vstack<'a, I>(blocks: I) -> Result<ComplexMatrix>
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    let blocks: Vec<&ComplexMatrix> = blocks.into_iter().collect();
    let first = blocks.first().ok_or(Error::EmptyStack)?;
    let cols = first.ncols();
    for (index, b) in blocks.iter().enumerate() {
        if b.ncols() != cols {
            return Err(Error::DimensionMismatch {
                index,
                rows: b.nrows(),
                cols: b.ncols(),
                expected: format!("{cols} columns"),
            });
        }
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((offset, 0), b.shape()).copy_from(b);
        offset += b.nrows();
    }
    Ok(out)
}

pub fn block_diagonal<'a, I>(blocks: I) -> ComplexMatrix
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    let blocks: Vec<&ComplexMatrix> = blocks.into_iter().collect();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Picks a `count`-dimensional subspace of the column span of an
/// orthonormal `basis`.
///
/// When the basis already has exactly `count` columns it is returned as is;
/// otherwise the columns are combined through a seeded Gaussian matrix
/// orthonormalised by QR. Structured channels (symbol extensions) have null
/// spaces whose SVD basis vectors align with the structure, and taking a
/// leading subset of them can collapse the rank of the final design.
pub fn select_subspace<R: Rng + ?Sized>(
    basis: &ComplexMatrix,
    count: usize,
    rng: &mut R,
) -> ComplexMatrix {
    let available = basis.ncols();
    assert!(count <= available, "select_subspace: {count} > {available}");
    if count == available {
        return basis.clone();
    }
    if count == 0 {
        return ComplexMatrix::zeros(basis.nrows(), 0);
    }
    let mix = complex_gaussian(available, count, rng);
    let q = mix.qr().q();
    basis * q
}

/// Least-squares solution of `A x = b` through the SVD pseudo-inverse.
pub fn least_squares(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    tol: &TolerancePolicy,
) -> Result<ComplexMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::LengthMismatch {
            what: "least-squares right-hand side".into(),
            got: b.nrows(),
            expected: a.nrows(),
        });
    }
    if a.ncols() == 0 {
        return Ok(ComplexMatrix::zeros(0, b.ncols()));
    }
    let svd = SVD::new(a.clone(), true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = tol.relative_rank_tol * sigma_max;
    svd.solve(b, eps)
        .map_err(|e| Error::InvalidConfig(format!("least squares failed: {e}")))
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Serde helpers encoding a matrix as nested row arrays of `[re, im]` pairs.
pub mod matrix_json {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn to_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> std::result::Result<ComplexMatrix, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(format!("row {bad} has {} entries, expected {ncols}", rows[bad].len()));
        }
        let entries: Vec<Complex64> = rows
            .iter()
            .flatten()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        let m = ComplexMatrix::from_row_slice(nrows, ncols, &entries);
        if !is_finite(&m) {
            return Err("matrix contains non-finite entries".into());
        }
        Ok(m)
    }

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ComplexMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}
