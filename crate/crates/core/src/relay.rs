//! Broadcast phase: relay precoder `U` and per-user decoding with side
//! information.
//!
//! The relay sends `x_R = γ·U·c`, where `c` stacks the network-coded sums in
//! pair order and `γ = 1/‖U‖_F`. User `k` projects out every pair it does not
//! belong to, solves for the sums of its own pairs and subtracts what it sent.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, DataSwitchMatrix, Pair};
use crate::error::{Error, Result};
use crate::gsa::GsaDesign;
use crate::linalg::{
    frobenius_norm, hstack, least_squares, matrix_json, null_space_basis,
    null_space_with_threshold, numerical_rank, select_subspace, spectral_norm, vstack,
    ComplexMatrix, ComplexVector, TolerancePolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcStrategy {
    /// Each block of `U` lies in the null space of every non-member downlink.
    Nulling,
    /// `U = P̂ᵀ·B̂⁻ᵀ` from an uplink design on the transposed downlinks.
    Dual,
}

impl std::fmt::Display for BcStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BcStrategy::Nulling => "nulling",
            BcStrategy::Dual => "dual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcPrecoder {
    /// `N x J`, one column block per pair in `pair_order`.
    #[serde(with = "matrix_json")]
    pub u: ComplexMatrix,
    pub pair_order: Vec<Pair>,
    /// Width of each block, aligned with `pair_order`.
    pub widths: Vec<usize>,
    pub strategy: BcStrategy,
    /// `1/‖U‖_F`: unit average transmit power for unit-variance inputs.
    pub gain: f64,
}

impl BcPrecoder {
    fn new(u: ComplexMatrix, d: &DataSwitchMatrix, strategy: BcStrategy, tol: &TolerancePolicy) -> Result<Self> {
        let pair_order = d.pair_order();
        let widths: Vec<usize> = pair_order.iter().map(|p| d.streams(p.i, p.j)).collect();
        let j_rows: usize = widths.iter().sum();
        let rank = numerical_rank(&u, tol);
        if rank < j_rows {
            return Err(Error::RankDeficient {
                what: "relay precoder U".into(),
                rank,
                expected: j_rows,
            });
        }
        let gain = 1.0 / frobenius_norm(&u);
        Ok(Self {
            u,
            pair_order,
            widths,
            strategy,
            gain,
        })
    }

    pub fn offset(&self, pair: Pair) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for (p, &w) in self.pair_order.iter().zip(&self.widths) {
            if *p == pair {
                return Some(start..start + w);
            }
            start += w;
        }
        None
    }

    /// Block `U_{(i,j)}`.
    pub fn block(&self, pair: Pair) -> Option<ComplexMatrix> {
        self.offset(pair)
            .map(|r| self.u.columns(r.start, r.len()).into_owned())
    }

    /// Largest `‖G_k·U_{(i,j)}‖ / (‖G_k‖·‖U‖)` over pairs and non-member users.
    pub fn max_leakage(&self, ch: &ChannelRealization) -> f64 {
        let un = spectral_norm(&self.u);
        let mut worst: f64 = 0.0;
        for &pair in &self.pair_order {
            let block = self.block(pair).expect("pair in order");
            for k in (1..=ch.k()).filter(|&k| !pair.contains(k)) {
                let g = ch.g(k);
                let leak = spectral_norm(&(g * &block)) / (spectral_norm(g) * un);
                worst = worst.max(leak);
            }
        }
        worst
    }
}

/// Interference-nulling precoder: block `(i,j)` spans `d_{i,j}` directions of
/// the right null space of the stacked `G_k`, `k ∉ {i,j}`. Exists iff
/// `N - (K-2)·M >= d_{i,j}` for every active pair.
pub fn build_u<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    tol: &TolerancePolicy,
    rng: &mut R,
) -> Result<BcPrecoder> {
    let k = d.k();
    let n = ch.n();
    let mut blocks = Vec::new();
    for pair in d.pair_order() {
        let others: Vec<&ComplexMatrix> = (1..=k).filter(|&x| !pair.contains(x)).map(|x| ch.g(x)).collect();
        let basis = if others.is_empty() {
            ComplexMatrix::identity(n, n)
        } else {
            null_space_basis(&vstack(others)?, tol)
        };
        let required = d.streams(pair.i, pair.j);
        if basis.ncols() < required {
            return Err(Error::InsufficientNullSpace {
                pair,
                available: basis.ncols(),
                required,
            });
        }
        blocks.push(select_subspace(&basis, required, rng));
    }
    BcPrecoder::new(hstack(&blocks)?, d, BcStrategy::Nulling, tol)
}

/// Precoder from an uplink design `dual` built on
/// [`ChannelRealization::transposed_downlink`]. User `k` sees
/// `G_k·U = (P̂·Ĥ_k)ᵀ·B̂⁻ᵀ`, so the receive filter `V̂_{k,j}ᵀ` isolates
/// exactly the sum of pair `(k,j)`.
pub fn build_u_dual(dual: &GsaDesign, d: &DataSwitchMatrix, tol: &TolerancePolicy) -> Result<BcPrecoder> {
    let j_rows = dual.b.nrows();
    let b_t = dual.b.transpose();
    let inv = b_t.try_inverse().ok_or_else(|| Error::RankDeficient {
        what: "dual effective matrix".into(),
        rank: numerical_rank(&dual.b, tol),
        expected: j_rows,
    })?;
    let u = dual.p.transpose() * inv;
    BcPrecoder::new(u, d, BcStrategy::Dual, tol)
}

/// `x_R = γ·U·c`.
pub fn relay_transmit(bc: &BcPrecoder, s_plus: &ComplexVector) -> Result<ComplexVector> {
    if s_plus.len() != bc.u.ncols() {
        return Err(Error::LengthMismatch {
            what: "network-coded symbols".into(),
            got: s_plus.len(),
            expected: bc.u.ncols(),
        });
    }
    Ok(&bc.u * s_plus * Complex64::from(bc.gain))
}

/// Recovers `s_{j,k}` for every partner `j` of user `k` from its received
/// vector and its own symbols `s_{k,j}`, keyed by pair.
pub fn user_decode(
    k: usize,
    ch: &ChannelRealization,
    bc: &BcPrecoder,
    d: &DataSwitchMatrix,
    received: &ComplexVector,
    own_symbols: &BTreeMap<Pair, ComplexVector>,
    tol: &TolerancePolicy,
) -> Result<BTreeMap<Pair, ComplexVector>> {
    let g = ch.g(k);
    if received.len() != g.nrows() {
        return Err(Error::LengthMismatch {
            what: format!("received vector at node {k}"),
            got: received.len(),
            expected: g.nrows(),
        });
    }
    let required = d.node_streams(k);
    if required > g.nrows() {
        return Err(Error::Undecodable {
            node: k,
            required,
            available: g.nrows(),
        });
    }
    let effective = g * &bc.u * Complex64::from(bc.gain);
    let (mine, theirs): (Vec<Pair>, Vec<Pair>) = bc.pair_order.iter().partition(|p| p.contains(k));
    let cols = |pairs: &[Pair]| -> Vec<ComplexMatrix> {
        pairs
            .iter()
            .map(|&p| {
                let r = bc.offset(p).expect("pair in order");
                effective.columns(r.start, r.len()).into_owned()
            })
            .collect()
    };
    // Receive filter: left null space of the interference, under an absolute
    // threshold so nulled blocks count as zero rather than as weak signal.
    let filter = if theirs.is_empty() {
        ComplexMatrix::identity(g.nrows(), g.nrows())
    } else {
        let interference = hstack(&cols(&theirs))?;
        let threshold =
            tol.relative_rank_tol * spectral_norm(g) * spectral_norm(&bc.u) * bc.gain;
        null_space_with_threshold(&interference.transpose(), threshold)
    };
    if mine.is_empty() {
        return Ok(BTreeMap::new());
    }
    let e = filter.transpose() * hstack(&cols(&mine))?;
    let rank = numerical_rank(&e, tol);
    if rank < required {
        return Err(Error::Undecodable {
            node: k,
            required,
            available: rank,
        });
    }
    let z = filter.transpose() * received;
    let sums = least_squares(&e, &ComplexMatrix::from_column_slice(z.len(), 1, z.as_slice()), tol)?;
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for pair in mine {
        let w = d.streams(pair.i, pair.j);
        let sum: ComplexVector = sums.column(0).rows(offset, w).into_owned();
        let own = own_symbols.get(&pair).ok_or_else(|| Error::LengthMismatch {
            what: format!("own symbols of node {k} for pair {pair}"),
            got: 0,
            expected: w,
        })?;
        if own.len() != w {
            return Err(Error::LengthMismatch {
                what: format!("own symbols of node {k} for pair {pair}"),
                got: own.len(),
                expected: w,
            });
        }
        out.insert(pair, sum - own);
        offset += w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_pattern, sample_channels, Pattern, SystemConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64) -> (ChannelRealization, DataSwitchMatrix, BcPrecoder) {
        let ch = sample_channels(&SystemConfig::new(4, 3, 7).unwrap(), seed);
        let d = make_pattern(Pattern::Y, 4, 1, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bc = build_u(&ch, &d, &TolerancePolicy::default(), &mut rng).unwrap();
        (ch, d, bc)
    }

    fn zeros_for(k: usize, d: &DataSwitchMatrix) -> BTreeMap<Pair, ComplexVector> {
        d.pair_order()
            .into_iter()
            .filter(|p| p.contains(k))
            .map(|p| (p, ComplexVector::zeros(d.streams(p.i, p.j))))
            .collect()
    }

    #[test]
    fn nulling_precoder_shape_and_leakage() {
        let (ch, _, bc) = instance(1);
        assert_eq!(bc.u.shape(), (7, 6));
        assert!(bc.max_leakage(&ch) < 1e-10);
        let u12 = bc.block(Pair::new(1, 2)).unwrap();
        assert!(frobenius_norm(&(ch.g(3) * &u12)) < 1e-10);
        assert!(frobenius_norm(&(ch.g(4) * &u12)) < 1e-10);
    }

    #[test]
    fn nulling_needs_room() {
        let ch = sample_channels(&SystemConfig::new(4, 3, 6).unwrap(), 0);
        let d = make_pattern(Pattern::Y, 4, 1, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = build_u(&ch, &d, &TolerancePolicy::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::InsufficientNullSpace { available: 0, required: 1, .. }));
    }

    #[test]
    fn transmit_checks_length_and_is_linear() {
        let (_, _, bc) = instance(2);
        assert!(relay_transmit(&bc, &ComplexVector::zeros(5)).is_err());
        let zero = relay_transmit(&bc, &ComplexVector::zeros(6)).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
        let mut e1 = ComplexVector::zeros(6);
        e1[0] = Complex64::new(1.0, 0.0);
        let x = relay_transmit(&bc, &e1).unwrap();
        let col = bc.u.column(0) * Complex64::from(bc.gain);
        assert!((x - col).norm() < 1e-15);
    }

    #[test]
    fn single_stream_reaches_only_its_pair() {
        let (ch, d, bc) = instance(3);
        let tol = TolerancePolicy::default();
        let mut e1 = ComplexVector::zeros(6);
        e1[0] = Complex64::new(1.0, 0.0);
        let x = relay_transmit(&bc, &e1).unwrap();
        let got = user_decode(1, &ch, &bc, &d, &(ch.g(1) * &x), &zeros_for(1, &d), &tol).unwrap();
        assert!((got[&Pair::new(1, 2)][0] - Complex64::new(1.0, 0.0)).norm() < 1e-8);
        assert!(got[&Pair::new(1, 3)][0].norm() < 1e-8);
        assert!(got[&Pair::new(1, 4)][0].norm() < 1e-8);
        let at3 = user_decode(3, &ch, &bc, &d, &(ch.g(3) * &x), &zeros_for(3, &d), &tol).unwrap();
        assert!(at3.values().all(|v| v[0].norm() < 1e-8));
    }

    #[test]
    fn missing_own_symbols_is_an_error() {
        let (ch, d, bc) = instance(4);
        let x = relay_transmit(&bc, &ComplexVector::zeros(6)).unwrap();
        let err = user_decode(2, &ch, &bc, &d, &(ch.g(2) * &x), &BTreeMap::new(), &TolerancePolicy::default());
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }
}
