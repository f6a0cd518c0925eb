//! Uplink signal alignment: relay compression matrix `P` and source
//! precoders `V_{i,j}`.
//!
//! After compression the relay sees `P·y_R = B·c + P·n`, where `c` stacks the
//! network-coded sums `s_{i,j} + s_{j,i}` in pair order and `B` collects the
//! aligned directions `P·H_i·V_{i,j}`. Every construction here ends with a
//! square `B` that must be invertible.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, DataSwitchMatrix, Model, Pair};
use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_norm, hstack, left_null_space_basis, matrix_json, null_space_basis,
    numerical_rank, select_subspace, vstack, ComplexMatrix, TolerancePolicy,
};

pub use crate::channel::symbol_extend;

/// Left null basis (as rows) of the stacked uplinks of `nodes`.
fn annihilator_rows(ch: &ChannelRealization, nodes: &[usize], tol: &TolerancePolicy) -> Result<ComplexMatrix> {
    let n = ch.n();
    if nodes.is_empty() {
        return Ok(ComplexMatrix::identity(n, n));
    }
    let stack = hstack(nodes.iter().map(|&k| ch.h(k)))?;
    Ok(left_null_space_basis(&stack, tol).transpose())
}

fn check_channels(ch: &ChannelRealization, d: &DataSwitchMatrix) -> Result<()> {
    if ch.k() != d.k() {
        return Err(Error::LengthMismatch {
            what: "channel count".into(),
            got: ch.k(),
            expected: d.k(),
        });
    }
    for (index, h) in ch.uplink.iter().enumerate() {
        if h.shape() != (ch.n(), ch.m()) {
            return Err(Error::DimensionMismatch {
                index,
                rows: h.nrows(),
                cols: h.ncols(),
                expected: format!("{}x{}", ch.n(), ch.m()),
            });
        }
    }
    Ok(())
}

/// Compression matrix for an arbitrary switch matrix: the block of pair
/// `(i,j)` has `d_{i,j}` rows annihilating every uplink except `H_i`, `H_j`.
/// Rows are `J = d_total/2`, blocks in pair order.
pub fn build_p_generic<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    tol: &TolerancePolicy,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_channels(ch, d)?;
    let k = d.k();
    let mut blocks = Vec::new();
    for pair in d.pair_order() {
        let others: Vec<usize> = (1..=k).filter(|&x| !pair.contains(x)).collect();
        let rows = annihilator_rows(ch, &others, tol)?;
        let required = d.streams(pair.i, pair.j);
        if rows.nrows() < required {
            return Err(Error::InsufficientNullSpace {
                pair,
                available: rows.nrows(),
                required,
            });
        }
        blocks.push(select_subspace(&rows.transpose(), required, rng).transpose());
    }
    if blocks.is_empty() {
        return Err(Error::InvalidSwitchMatrix("no active pairs".into()));
    }
    vstack(&blocks)
}

/// Node sets each compression block annihilates on the `β` route.
///
/// Y: all `β`-subsets. Pairwise: unions of `β/2` exchanging pairs
/// `{a, K+1-a}`. X: `β/2` nodes from each half. Sets are sorted and listed in
/// lexicographic order.
pub fn combining_sets(model: Model, k: usize, beta: usize) -> Result<Vec<Vec<usize>>> {
    if beta == 0 || beta > k {
        return Err(Error::InvalidConfig(format!("beta={beta} out of range for K={k}")));
    }
    if model != Model::Y && (!k.is_multiple_of(2) || !beta.is_multiple_of(2)) {
        return Err(Error::InvalidConfig(format!(
            "{model} combining needs even K and even beta, got K={k}, beta={beta}"
        )));
    }
    let half = k / 2;
    let mut sets = match model {
        Model::Y => subsets(&(1..=k).collect::<Vec<_>>(), beta),
        Model::Pairwise => subsets(&(1..=half).collect::<Vec<_>>(), beta / 2)
            .into_iter()
            .map(|chosen| chosen.iter().flat_map(|&a| [a, k + 1 - a]).collect())
            .collect(),
        Model::X => {
            let left = subsets(&(1..=half).collect::<Vec<_>>(), beta / 2);
            let right = subsets(&(half + 1..=k).collect::<Vec<_>>(), beta / 2);
            left.iter()
                .flat_map(|l| right.iter().map(move |r| [l.as_slice(), r].concat()))
                .collect()
        }
    };
    for s in &mut sets {
        s.sort_unstable();
    }
    sets.sort();
    Ok(sets)
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    if items.len() < size {
        return Vec::new();
    }
    let mut with: Vec<Vec<usize>> = subsets(&items[1..], size - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, items[0]);
            s
        })
        .collect();
    with.extend(subsets(&items[1..], size));
    with
}

/// Compression matrix of the `β` route: `q` rows per combining set, each
/// annihilating the uplinks of that set. Requires `count·q = J`.
pub fn build_p_beta<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    model: Model,
    beta: usize,
    q: usize,
    tol: &TolerancePolicy,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_channels(ch, d)?;
    let sets = combining_sets(model, d.k(), beta)?;
    let required = d.d_total() / 2;
    if sets.len() * q != required {
        return Err(Error::CountMismatch {
            combinations: sets.len(),
            q,
            required,
        });
    }
    let mut blocks = Vec::with_capacity(sets.len());
    for set in sets {
        let rows = annihilator_rows(ch, &set, tol)?;
        if rows.nrows() < q {
            return Err(Error::InsufficientCombiningNullSpace {
                set,
                available: rows.nrows(),
                required: q,
            });
        }
        blocks.push(select_subspace(&rows.transpose(), q, rng).transpose());
    }
    vstack(&blocks)
}

/// Alignment state of one pair under a compression matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub pair: Pair,
    /// Rank of `P·[H_i, -H_j]`.
    pub rank: usize,
    /// `2M - d_{i,j}`.
    pub max_rank: i64,
    /// Dimension of the null space of `P·[H_i, -H_j]`.
    pub null_dim: usize,
    /// Rows of `P` annihilating both `H_i` and `H_j`.
    pub annihilating_rows: usize,
    pub satisfied: bool,
}

/// Per-pair alignment check: `rank(P·[H_i, -H_j]) <= 2M - d_{i,j}`, i.e.
/// room for `d_{i,j}` aligned directions.
pub fn check_alignment(
    p: &ComplexMatrix,
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    tol: &TolerancePolicy,
) -> Result<Vec<AlignmentReport>> {
    check_channels(ch, d)?;
    let m = ch.m();
    let mut out = Vec::new();
    for pair in d.pair_order() {
        let (hi, hj) = (ch.h(pair.i), ch.h(pair.j));
        let a = hstack([hi, &(-hj)])?;
        let pa = p * &a;
        let rank = numerical_rank(&pa, tol);
        let max_rank = 2 * m as i64 - d.streams(pair.i, pair.j) as i64;
        let scale = frobenius_norm(p).max(f64::MIN_POSITIVE) * frobenius_norm(&a);
        let annihilating_rows = pa
            .row_iter()
            .zip(p.row_iter())
            .filter(|(r, prow)| {
                let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let pn = prow.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                pn > 0.0 && rn <= tol.residual_tol * scale
            })
            .count();
        out.push(AlignmentReport {
            pair,
            rank,
            max_rank,
            null_dim: 2 * m - rank,
            annihilating_rows,
            satisfied: rank as i64 <= max_rank,
        });
    }
    Ok(out)
}

/// Complete uplink design.
#[derive(Debug, Clone, PartialEq)]
pub struct GsaDesign {
    pub p: ComplexMatrix,
    /// `V_{i,j}` (`M x d_{i,j}`) keyed by `(i, j)`, 1-based.
    pub precoders: BTreeMap<(usize, usize), ComplexMatrix>,
    /// `J x J` effective matrix, columns `P·H_i·V_{i,j}` in pair order.
    pub b: ComplexMatrix,
    pub pair_order: Vec<Pair>,
}

impl GsaDesign {
    pub fn precoder(&self, i: usize, j: usize) -> Option<&ComplexMatrix> {
        self.precoders.get(&(i, j))
    }

    /// Relative residual `‖P·H_i·V_{i,j} - P·H_j·V_{j,i}‖ / ‖P·H_i·V_{i,j}‖` per pair.
    pub fn alignment_residuals(&self, ch: &ChannelRealization) -> Vec<(Pair, f64)> {
        self.pair_order
            .iter()
            .map(|&pair| {
                let a = &self.p * ch.h(pair.i) * &self.precoders[&(pair.i, pair.j)];
                let b = &self.p * ch.h(pair.j) * &self.precoders[&(pair.j, pair.i)];
                let denom = frobenius_norm(&a).max(f64::MIN_POSITIVE);
                (pair, frobenius_norm(&(a - b)) / denom)
            })
            .collect()
    }

    /// Columns of `B` occupied by each pair, in pair order.
    pub fn column_ranges(&self) -> Vec<(Pair, std::ops::Range<usize>)> {
        let mut offset = 0;
        self.pair_order
            .iter()
            .map(|&pair| {
                let w = self.precoders[&(pair.i, pair.j)].ncols();
                let r = offset..offset + w;
                offset += w;
                (pair, r)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("design JSON: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct PrecoderEntry {
    from: usize,
    to: usize,
    #[serde(with = "matrix_json")]
    matrix: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct DesignDto {
    #[serde(with = "matrix_json")]
    p: ComplexMatrix,
    precoders: Vec<PrecoderEntry>,
    #[serde(with = "matrix_json")]
    b: ComplexMatrix,
    pair_order: Vec<Pair>,
}

impl Serialize for GsaDesign {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DesignDto {
            p: self.p.clone(),
            precoders: self
                .precoders
                .iter()
                .map(|(&(from, to), m)| PrecoderEntry {
                    from,
                    to,
                    matrix: m.clone(),
                })
                .collect(),
            b: self.b.clone(),
            pair_order: self.pair_order.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GsaDesign {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let dto = DesignDto::deserialize(d)?;
        Ok(GsaDesign {
            p: dto.p,
            precoders: dto
                .precoders
                .into_iter()
                .map(|e| ((e.from, e.to), e.matrix))
                .collect(),
            b: dto.b,
            pair_order: dto.pair_order,
        })
    }
}

/// Precoders for a given `P`: `[V_{i,j}; V_{j,i}]` spans `d_{i,j}` directions
/// of the null space of `[P·H_i, -P·H_j]`, so both ends land on the same
/// compressed direction. Fails unless every pair fits and `B` has full rank.
pub fn build_precoders<R: Rng + ?Sized>(
    p: &ComplexMatrix,
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    tol: &TolerancePolicy,
    rng: &mut R,
) -> Result<GsaDesign> {
    check_channels(ch, d)?;
    let j_rows = d.d_total() / 2;
    if p.nrows() != j_rows || p.ncols() != ch.n() {
        return Err(Error::DimensionMismatch {
            index: 0,
            rows: p.nrows(),
            cols: p.ncols(),
            expected: format!("{j_rows}x{}", ch.n()),
        });
    }
    let p_rank = numerical_rank(p, tol);
    if p_rank < j_rows {
        return Err(Error::RankDeficient {
            what: "compression matrix P".into(),
            rank: p_rank,
            expected: j_rows,
        });
    }
    let m = ch.m();
    let pair_order = d.pair_order();
    let mut precoders = BTreeMap::new();
    let mut columns = Vec::with_capacity(pair_order.len());
    for &pair in &pair_order {
        let required = d.streams(pair.i, pair.j);
        let phi = p * ch.h(pair.i);
        let phj = p * ch.h(pair.j);
        let basis = null_space_basis(&hstack([&phi, &(-&phj)])?, tol);
        if basis.ncols() < required {
            let rank = 2 * m - basis.ncols();
            return Err(Error::AlignmentViolated {
                pair,
                rank,
                max_rank: 2 * m as i64 - required as i64,
            });
        }
        // Stacked columns are orthonormal; one shared scale keeps both
        // halves on the same compressed direction.
        let v = select_subspace(&basis, required, rng) * num_complex::Complex64::from(2f64.sqrt());
        let vij = v.rows(0, m).into_owned();
        let vji = v.rows(m, m).into_owned();
        columns.push(&phi * &vij);
        precoders.insert((pair.i, pair.j), vij);
        precoders.insert((pair.j, pair.i), vji);
    }
    let p_norm = frobenius_norm(p);
    for &pair in &pair_order {
        let gap = p * (ch.h(pair.i) * &precoders[&(pair.i, pair.j)] - ch.h(pair.j) * &precoders[&(pair.j, pair.i)]);
        let bound = tol.residual_tol * p_norm * frobenius_norm(ch.h(pair.i));
        let residual = frobenius_norm(&gap);
        if residual > bound {
            return Err(Error::ResidualExceeded {
                what: format!("alignment of pair {pair}"),
                residual,
                bound,
            });
        }
    }
    for node in 1..=d.k() {
        let own: Vec<&ComplexMatrix> = d.partners(node).iter().map(|&j| &precoders[&(node, j)]).collect();
        if own.is_empty() {
            continue;
        }
        let stacked = hstack(own)?;
        let rank = numerical_rank(&stacked, tol);
        if rank < stacked.ncols() {
            return Err(Error::RankDeficient {
                what: format!("precoders of node {node}"),
                rank,
                expected: stacked.ncols(),
            });
        }
    }
    let b = hstack(&columns)?;
    let rank = numerical_rank(&b, tol);
    if rank < j_rows {
        return Err(Error::RankDeficient {
            what: "effective matrix B".into(),
            rank,
            expected: j_rows,
        });
    }
    Ok(GsaDesign {
        p: p.clone(),
        precoders,
        b,
        pair_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_pattern, sample_channels, Pattern, SystemConfig};
    use crate::linalg::{condition_number, numerical_rank};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(pattern: Pattern, k: usize, m: usize, n: usize, streams: usize, seed: u64)
        -> (ChannelRealization, DataSwitchMatrix) {
        let cfg = SystemConfig::new(k, m, n).unwrap();
        (sample_channels(&cfg, seed), make_pattern(pattern, k, streams, None).unwrap())
    }

    #[test]
    fn generic_p_annihilates_other_users() {
        let (ch, d) = setup(Pattern::Y, 4, 3, 7, 1, 3);
        let tol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = build_p_generic(&ch, &d, &tol, &mut rng).unwrap();
        assert_eq!(p.shape(), (6, 7));
        for (row, pair) in d.pair_order().into_iter().enumerate() {
            for k in (1..=4).filter(|&k| !pair.contains(k)) {
                let leak = frobenius_norm(&(p.rows(row, 1) * ch.h(k)));
                assert!(leak < 1e-10, "pair {pair} leaks node {k}: {leak}");
            }
        }
        let reports = check_alignment(&p, &ch, &d, &tol).unwrap();
        assert!(reports.iter().all(|r| r.satisfied && r.rank == 5));
        // pair rows not touching i or j: J - rank
        assert!(reports.iter().all(|r| r.annihilating_rows == 1));
    }

    #[test]
    fn generic_p_reports_small_null_space() {
        let (ch, d) = setup(Pattern::Y, 4, 3, 6, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = build_p_generic(&ch, &d, &TolerancePolicy::default(), &mut rng).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientNullSpace { available: 0, required: 1, .. }
        ));
    }

    #[test]
    fn precoders_align_and_b_is_invertible() {
        let (ch, d) = setup(Pattern::X, 4, 2, 6, 1, 11);
        let tol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = build_p_generic(&ch, &d, &tol, &mut rng).unwrap();
        let design = build_precoders(&p, &ch, &d, &tol, &mut rng).unwrap();
        assert_eq!(design.b.shape(), (4, 4));
        assert_eq!(numerical_rank(&design.b, &tol), 4);
        assert!(condition_number(&design.b).is_finite());
        for (_, r) in design.alignment_residuals(&ch) {
            assert!(r < 1e-10);
        }
        // an aligned column vanishes on rows missing either end of its pair,
        // so the generic route gives a block diagonal B
        for (pair, cols) in design.column_ranges() {
            for (row, other) in design.pair_order.iter().enumerate() {
                let block = design.b.view((row, cols.start), (1, cols.len()));
                let norm = block.iter().map(|z| z.norm()).sum::<f64>();
                assert_eq!(norm > 1e-10, *other == pair, "row {other} column {pair}");
            }
        }
    }

    #[test]
    fn combining_set_counts() {
        assert_eq!(combining_sets(Model::Y, 5, 3).unwrap().len(), 10);
        let pw = combining_sets(Model::Pairwise, 6, 4).unwrap();
        assert_eq!(pw, vec![vec![1, 2, 5, 6], vec![1, 3, 4, 6], vec![2, 3, 4, 5]]);
        let x = combining_sets(Model::X, 6, 2).unwrap();
        assert_eq!(x.len(), 9);
        assert!(x.contains(&vec![2, 6]));
        assert!(combining_sets(Model::X, 6, 3).is_err());
    }

    #[test]
    fn beta_route_at_corner() {
        // y, K=5, beta=3: corner (13/4, 5); M=4, N=13 gives J=10, q=1.
        let (ch, d) = setup(Pattern::Y, 5, 4, 13, 1, 5);
        let tol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = build_p_beta(&ch, &d, Model::Y, 3, 1, &tol, &mut rng).unwrap();
        assert!(check_alignment(&p, &ch, &d, &tol).unwrap().iter().all(|r| r.satisfied));
        let design = build_precoders(&p, &ch, &d, &tol, &mut rng).unwrap();
        assert_eq!(numerical_rank(&design.b, &tol), 10);
        let err = build_p_beta(&ch, &d, Model::Y, 3, 2, &tol, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { .. }));
    }

    #[test]
    fn design_json_round_trip() {
        let (ch, d) = setup(Pattern::Pairwise, 4, 2, 6, 2, 9);
        let tol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = build_p_generic(&ch, &d, &tol, &mut rng).unwrap();
        let design = build_precoders(&p, &ch, &d, &tol, &mut rng).unwrap();
        let back = GsaDesign::from_json(&design.to_json()).unwrap();
        assert_eq!(back, design);
    }
}
