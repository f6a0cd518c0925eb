//! Reference implementations used only by tests. They share no code with the
//! library so that agreement is meaningful.

#![allow(dead_code)]

use gsa_core::ComplexMatrix;
use num_complex::Complex64;

/// Rank by Gaussian elimination with partial pivoting. Pivots at or below
/// `rel_tol * max|a_ij|` count as zero.
pub fn oracle_rank(a: &ComplexMatrix, rel_tol: f64) -> usize {
    let (rows, cols) = a.shape();
    let mut m: Vec<Vec<Complex64>> = (0..rows).map(|i| (0..cols).map(|j| a[(i, j)]).collect()).collect();
    let scale = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let cut = rel_tol * scale;
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot, best) = (rank..rows)
            .map(|r| (r, m[r][col].norm()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= cut {
            continue;
        }
        m.swap(rank, pivot);
        let pivot_row = m[rank].clone();
        for row in m.iter_mut().skip(rank + 1) {
            let f = row[col] / pivot_row[col];
            if f.norm() == 0.0 {
                continue;
            }
            for (dst, v) in row[col..cols].iter_mut().zip(&pivot_row[col..cols]) {
                *dst -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// `C(n, k)` as a float, by the multiplicative formula.
pub fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Corner points recomputed in floating point, `(ratio, dof/M)`.
pub fn oracle_points(model: &str, k: usize) -> Vec<(f64, f64)> {
    let kf = k as f64;
    let mut pts = Vec::new();
    match model {
        "y" => {
            let kk = kf * (kf - 1.0);
            pts.push((2.0 * kk / (kk + 2.0), 4.0 * kk / (kk + 2.0)));
            for b in 2..=k - 2 {
                let bf = b as f64;
                let den = 2.0 + kk - bf * (bf - 1.0);
                pts.push((bf + 2.0 * kk / (den * binom(k, b)), 4.0 * kk / den));
            }
        }
        "pairwise" => {
            pts.push((2.0 * kf / (kf + 2.0), 4.0 * kf / (kf + 2.0)));
            for b in (2..=k - 2).step_by(2) {
                let bf = b as f64;
                let den = 2.0 + kf - bf;
                pts.push((bf + 2.0 * kf / (den * binom(k / 2, b / 2)), 4.0 * kf / den));
            }
        }
        "x" => {
            let k2 = kf * kf;
            pts.push((2.0 * k2 / (k2 + 4.0), 4.0 * k2 / (k2 + 4.0)));
            for b in (2..=k - 2).step_by(2) {
                let bf = b as f64;
                let den = 4.0 + k2 - bf * bf;
                pts.push((bf + 2.0 * k2 / (den * binom(k / 2, b / 2).powi(2)), 4.0 * k2 / den));
            }
        }
        other => panic!("unknown model {other}"),
    }
    pts
}

/// Union of single-sided trapezoids, per source antenna.
pub fn oracle_achievable(points: &[(f64, f64)], r: f64) -> f64 {
    points
        .iter()
        .map(|&(a, d)| if r >= a { d } else { d * r / a })
        .fold(0.0, f64::max)
}
