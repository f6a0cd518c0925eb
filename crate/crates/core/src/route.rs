//! Picks a construction for a target switch matrix and realizes it.
//!
//! Routes, in the order they are tried:
//! 1. generic: `M >= max_i Σ_j d_{i,j}` and `N >= (K-2)·M + max d`;
//! 2. β-combining with `β = ⌊N/M⌋` and `q` from the counting identity;
//! 3. direct alignment: `P = I_N` when `N = d_total/2`;
//! 4. fallback: antenna deactivation and/or `t`-fold symbol extension onto a
//!    configuration where one of the above applies, maximizing streams per
//!    channel use.
//!
//! The broadcast phase uses interference nulling when
//! `N >= (K-2)·M + max d`, and otherwise the dual construction on the
//! transposed downlinks with the same route.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{deactivate_antennas, symbol_extend, ChannelRealization, DataSwitchMatrix, Model};
use crate::error::{Error, Result};
use crate::gsa::{build_p_beta, build_p_generic, build_precoders, check_alignment, combining_sets, AlignmentReport, GsaDesign};
use crate::linalg::{ComplexMatrix, TolerancePolicy};
use crate::rational::binomial;
use crate::relay::{build_u, build_u_dual, BcPrecoder, BcStrategy};

const MAX_EXTENSION: usize = 12;
const MAX_ATTEMPTS: usize = 8;

const RNG_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteKind {
    Generic,
    Beta,
    Direct,
}

impl fmt::Display for RouteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RouteKind::Generic => "generic",
            RouteKind::Beta => "beta",
            RouteKind::Direct => "direct",
        })
    }
}

impl std::str::FromStr for RouteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(RouteKind::Generic),
            "beta" | "β" => Ok(RouteKind::Beta),
            "direct" => Ok(RouteKind::Direct),
            other => Err(Error::InvalidConfig(format!(
                "unknown route '{other}' (expected generic, beta or direct)"
            ))),
        }
    }
}

/// A construction choice, before any channel is drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: RouteKind,
    pub beta: Option<usize>,
    pub q: Option<usize>,
    /// Symbol extension factor `t`.
    pub extension: usize,
    /// Active source antennas per slot.
    pub m_used: usize,
    /// Active relay antennas per slot.
    pub n_used: usize,
    /// Streams over the `t`-slot extended channel.
    pub d: DataSwitchMatrix,
    pub bc: BcStrategy,
    /// Model used to enumerate β-combining sets.
    pub model: Option<Model>,
    /// Set when this plan replaces an infeasible request.
    pub fallback: bool,
}

impl Plan {
    pub fn streams(&self) -> usize {
        self.d.d_total()
    }

    pub fn streams_per_use(&self) -> f64 {
        self.streams() as f64 / self.extension as f64
    }

    pub fn deactivated(&self, m: usize, n: usize) -> bool {
        self.m_used < m || self.n_used < n
    }

    /// Human-readable route, e.g. `beta(2,q=2)+extension(t=3)`.
    pub fn label(&self, m: usize, n: usize) -> String {
        let mut s = match self.kind {
            RouteKind::Beta => format!("beta({},q={})", self.beta.unwrap_or(0), self.q.unwrap_or(0)),
            other => other.to_string(),
        };
        if self.deactivated(m, n) {
            s.push_str(&format!("+deactivation(M={},N={})", self.m_used, self.n_used));
        }
        if self.extension > 1 {
            s.push_str(&format!("+extension(t={})", self.extension));
        }
        s.push_str(&format!("/bc={}", self.bc));
        s
    }
}

fn generic_ok(d: &DataSwitchMatrix, m: usize, n: usize) -> bool {
    crate::achievable::generic_route_feasible(d, m, n)
}

fn nulling_ok(d: &DataSwitchMatrix, m: usize, n: usize) -> bool {
    n >= (d.k().saturating_sub(2)) * m + d.max_streams()
}

/// `(β, q)` for the β-combining route, when its counting conditions and the
/// structural rank bound for every pair hold.
fn beta_params(d: &DataSwitchMatrix, model: Model, m: usize, n: usize) -> Option<(usize, usize)> {
    let k = d.k();
    if k < 4 || m == 0 || d.max_node_streams() > m {
        return None;
    }
    let beta = n / m;
    if beta < 2 || beta > k - 2 || (model != Model::Y && !beta.is_multiple_of(2)) {
        return None;
    }
    let count = match model {
        Model::Y => binomial(k as u32, beta as u32),
        Model::Pairwise => binomial((k / 2) as u32, (beta / 2) as u32),
        Model::X => binomial((k / 2) as u32, (beta / 2) as u32).pow(2),
    } as usize;
    let j = d.d_total() / 2;
    if count == 0 || !j.is_multiple_of(count) {
        return None;
    }
    let q = j / count;
    if q == 0 || q > n - beta * m {
        return None;
    }
    let sets = combining_sets(model, k, beta).ok()?;
    for pair in d.pair_order() {
        let (mut only_i, mut only_j, mut neither) = (0, 0, 0);
        for s in &sets {
            match (s.contains(&pair.i), s.contains(&pair.j)) {
                (true, false) => only_i += q,
                (false, true) => only_j += q,
                (false, false) => neither += q,
                (true, true) => {}
            }
        }
        // rows nulling H_i only see H_j and vice versa
        let bound = (only_i.min(m) + only_j.min(m) + neither).min(2 * m);
        if bound + d.streams(pair.i, pair.j) > 2 * m {
            return None;
        }
    }
    Some((beta, q))
}

fn direct_ok(d: &DataSwitchMatrix, m: usize, n: usize) -> bool {
    d.d_total() / 2 == n
        && d.max_node_streams() <= m
        && d.pair_order()
            .iter()
            .all(|p| 2 * m >= n.min(2 * m) + d.streams(p.i, p.j))
}

/// First applicable route for `d` on an `m`/`n` antenna channel (already
/// extended if `extension > 1`), or the one in `force` without checking.
#[allow(clippy::too_many_arguments)]
fn exact_plan(
    d: &DataSwitchMatrix,
    model: Option<Model>,
    m: usize,
    n: usize,
    extension: usize,
    m_used: usize,
    n_used: usize,
    force: Option<RouteKind>,
) -> Option<Plan> {
    let kind_params = match force {
        Some(RouteKind::Beta) => {
            let model = model?;
            let beta = n / m;
            let count = combining_sets(model, d.k(), beta).ok()?.len();
            Some((RouteKind::Beta, Some(beta), Some((d.d_total() / 2).div_ceil(count.max(1)))))
        }
        Some(kind) => Some((kind, None, None)),
        None => {
            if generic_ok(d, m, n) {
                Some((RouteKind::Generic, None, None))
            } else if let Some((b, q)) = model.and_then(|md| beta_params(d, md, m, n)) {
                Some((RouteKind::Beta, Some(b), Some(q)))
            } else if direct_ok(d, m, n) {
                Some((RouteKind::Direct, None, None))
            } else {
                None
            }
        }
    }?;
    Some(Plan {
        kind: kind_params.0,
        beta: kind_params.1,
        q: kind_params.2,
        extension,
        m_used,
        n_used,
        d: d.clone(),
        bc: if nulling_ok(d, m, n) { BcStrategy::Nulling } else { BcStrategy::Dual },
        model,
        fallback: false,
    })
}

/// The route for `d` itself at full antenna use and no extension, or the
/// forced route without checking its conditions.
pub fn exact_route(
    d: &DataSwitchMatrix,
    model: Option<Model>,
    m: usize,
    n: usize,
    force: Option<RouteKind>,
) -> Option<Plan> {
    exact_plan(d, model, m, n, 1, m, n, force)
}

/// Replacement plans for an infeasible request, best first: most streams
/// per channel use, then shorter extension, then fewer switched-off antennas.
///
/// Uniform patterns of a known model search extensions `t <= 12`, antenna
/// subsets and per-pair stream counts. Other switch matrices keep `d` and
/// only switch off source antennas.
pub fn fallback_plans(d: &DataSwitchMatrix, model: Option<Model>, m: usize, n: usize) -> Vec<Plan> {
    let mut fallbacks: Vec<Plan> = Vec::new();
    match d.uniform_streams().and(model) {
        Some(model) => {
            let unit = d.with_uniform_streams(1);
            let degree = unit.max_node_streams().max(1);
            let k = d.k();
            for t in 1..=MAX_EXTENSION {
                for m_used in 1..=m {
                    for n_used in 1..=n {
                        // cut-set cap on streams per use
                        let cap = (k * m_used).min(2 * n_used);
                        if let Some(b) = fallbacks.first() {
                            if cap * b.extension < b.streams() {
                                continue;
                            }
                        }
                        let (me, ne) = (t * m_used, t * n_used);
                        for streams in (1..=me / degree).rev() {
                            let de = d.with_uniform_streams(streams);
                            if let Some(mut p) = exact_plan(&de, Some(model), me, ne, t, m_used, n_used, None) {
                                p.fallback = true;
                                keep_best(&mut fallbacks, p);
                                break;
                            }
                        }
                    }
                }
            }
        }
        None => {
            for m_used in (1..=m).rev() {
                if let Some(mut p) = exact_plan(d, model, m_used, n, 1, m_used, n, None) {
                    p.fallback = true;
                    fallbacks.push(p);
                }
            }
        }
    }
    fallbacks.sort_by(|a, b| {
        let lhs = b.streams() * a.extension;
        let rhs = a.streams() * b.extension;
        lhs.cmp(&rhs)
            .then(a.extension.cmp(&b.extension))
            .then((b.m_used + b.n_used).cmp(&(a.m_used + a.n_used)))
            .then(a.kind.cmp(&b.kind))
    });
    fallbacks.truncate(MAX_ATTEMPTS);
    fallbacks
}

/// Plans in the order [`design_for_target`] tries them: the request itself
/// first, then [`fallback_plans`] unless a route is forced.
pub fn candidate_plans(
    d: &DataSwitchMatrix,
    model: Option<Model>,
    m: usize,
    n: usize,
    force: Option<RouteKind>,
) -> Vec<Plan> {
    let mut out: Vec<Plan> = exact_route(d, model, m, n, force).into_iter().collect();
    if force.is_none() {
        out.extend(fallback_plans(d, model, m, n));
    }
    out
}

/// Keeps only plans tied for the most streams per channel use.
fn keep_best(best: &mut Vec<Plan>, p: Plan) {
    match best.first() {
        Some(b) if p.streams() * b.extension < b.streams() * p.extension => {}
        Some(b) if p.streams() * b.extension > b.streams() * p.extension => {
            best.clear();
            best.push(p);
        }
        _ => best.push(p),
    }
}

/// A realized two-phase design on the channel it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub plan: Plan,
    pub route: String,
    /// Deactivated and extended channel the design operates on.
    #[serde(skip)]
    pub channel: Option<ChannelRealization>,
    pub uplink: GsaDesign,
    pub alignment: Vec<AlignmentReport>,
    pub bc: BcPrecoder,
}

impl Design {
    pub fn channel(&self) -> &ChannelRealization {
        self.channel.as_ref().expect("realized design keeps its channel")
    }
}

fn build_uplink(
    plan: &Plan,
    ch: &ChannelRealization,
    tol: &TolerancePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(ComplexMatrix, GsaDesign)> {
    let d = &plan.d;
    let p = match plan.kind {
        RouteKind::Generic => build_p_generic(ch, d, tol, rng)?,
        RouteKind::Beta => {
            let model = plan
                .model
                .ok_or_else(|| Error::InvalidConfig("beta route needs a y, pairwise or x pattern".into()))?;
            let beta = plan.beta.unwrap_or(ch.n() / ch.m().max(1));
            build_p_beta(ch, d, model, beta, plan.q.unwrap_or(0), tol, rng)?
        }
        RouteKind::Direct => {
            let j = d.d_total() / 2;
            if j != ch.n() {
                return Err(Error::CountMismatch {
                    combinations: 1,
                    q: ch.n(),
                    required: j,
                });
            }
            ComplexMatrix::identity(j, j)
        }
    };
    for r in check_alignment(&p, ch, d, tol)? {
        if !r.satisfied {
            return Err(Error::AlignmentViolated {
                pair: r.pair,
                rank: r.rank,
                max_rank: r.max_rank,
            });
        }
    }
    let design = build_precoders(&p, ch, d, tol, rng)?;
    Ok((p, design))
}

/// Builds `plan` on `ch` (the undeactivated, unextended draw).
pub fn realize(plan: &Plan, ch: &ChannelRealization, tol: &TolerancePolicy) -> Result<Design> {
    let (m, n) = (ch.m(), ch.n());
    let trimmed = deactivate_antennas(ch, plan.m_used, plan.n_used)?;
    let work = symbol_extend(&trimmed, plan.extension);
    let mut rng = ChaCha8Rng::seed_from_u64(ch.seed ^ RNG_SALT);
    let (p, uplink) = build_uplink(plan, &work, tol, &mut rng)?;
    let alignment = check_alignment(&p, &work, &plan.d, tol)?;
    let bc = match plan.bc {
        BcStrategy::Nulling => build_u(&work, &plan.d, tol, &mut rng)?,
        BcStrategy::Dual => {
            let (_, dual) = build_uplink(plan, &work.transposed_downlink(), tol, &mut rng)?;
            build_u_dual(&dual, &plan.d, tol)?
        }
    };
    Ok(Design {
        route: plan.label(m, n),
        plan: plan.clone(),
        channel: Some(work),
        uplink,
        alignment,
        bc,
    })
}

/// Most specific reason the request cannot be met directly.
fn tightest_violation(d: &DataSwitchMatrix, m: usize, n: usize) -> String {
    let k = d.k();
    if d.max_node_streams() > m {
        return format!(
            "a node sends {} streams but has only M={m} antennas",
            d.max_node_streams()
        );
    }
    let need = k.saturating_sub(2) * m + d.max_streams();
    format!(
        "generic route needs N >= (K-2)M + max d = {need}, have N={n}; no beta, direct or fallback route applies"
    )
}

/// Chooses and realizes a design for `d` on `ch`.
///
/// Without `force`, the first candidate of [`candidate_plans`] that
/// realizes wins. With `force`, only that route is tried and its
/// construction error is returned unchanged.
pub fn design_for_target(
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    tol: &TolerancePolicy,
    force: Option<RouteKind>,
) -> Result<Design> {
    if ch.k() != d.k() {
        return Err(Error::LengthMismatch {
            what: "channel count".into(),
            got: ch.k(),
            expected: d.k(),
        });
    }
    let (m, n) = (ch.m(), ch.n());
    let exact = exact_route(d, model, m, n, force);
    if force.is_some() {
        let plan = exact.ok_or_else(|| {
            Error::Infeasible(format!("route {} does not apply to this pattern", force.unwrap_or(RouteKind::Generic)))
        })?;
        return realize(&plan, ch, tol);
    }
    let mut first_error = None;
    if let Some(plan) = &exact {
        match realize(plan, ch, tol) {
            Ok(design) => return Ok(design),
            Err(e) => first_error = Some(e),
        }
    }
    for plan in fallback_plans(d, model, m, n) {
        if let Ok(design) = realize(&plan, ch, tol) {
            return Ok(design);
        }
    }
    Err(first_error.unwrap_or_else(|| Error::Infeasible(tightest_violation(d, m, n))))
}

/// Realizes `d`, given over the `t`-slot extended channel, without fallback.
pub fn design_extended(
    ch: &ChannelRealization,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    t: usize,
    tol: &TolerancePolicy,
) -> Result<Design> {
    if t == 0 {
        return Err(Error::InvalidConfig("extension factor must be >= 1".into()));
    }
    let (m, n) = (ch.m(), ch.n());
    let plan = exact_plan(d, model, t * m, t * n, t, m, n, None)
        .ok_or_else(|| Error::Infeasible(tightest_violation(d, t * m, t * n)))?;
    realize(&plan, ch, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_pattern, sample_channels, Pattern, SystemConfig};

    fn channel(k: usize, m: usize, n: usize, seed: u64) -> ChannelRealization {
        sample_channels(&SystemConfig::new(k, m, n).unwrap(), seed)
    }

    #[test]
    fn dispatcher_examples() {
        let tol = TolerancePolicy::default();
        let y4 = make_pattern(Pattern::Y, 4, 1, None).unwrap();
        let d = design_for_target(&channel(4, 3, 7, 1), &y4, Some(Model::Y), &tol, None).unwrap();
        assert_eq!(d.plan.kind, RouteKind::Generic);
        assert_eq!(d.uplink.p.shape(), (6, 7));
        assert_eq!(d.bc.strategy, BcStrategy::Nulling);

        let y5 = make_pattern(Pattern::Y, 5, 1, None).unwrap();
        let d = design_for_target(&channel(5, 4, 13, 2), &y5, Some(Model::Y), &tol, None).unwrap();
        assert_eq!(d.plan.kind, RouteKind::Generic);

        let pw = make_pattern(Pattern::Pairwise, 6, 2, None).unwrap();
        let d = design_for_target(&channel(6, 3, 8, 3), &pw, Some(Model::Pairwise), &tol, None).unwrap();
        assert_eq!((d.plan.kind, d.plan.beta, d.plan.q), (RouteKind::Beta, Some(2), Some(2)));
        assert_eq!(d.bc.strategy, BcStrategy::Dual);
        assert!(!d.plan.fallback);
    }

    #[test]
    fn fallback_reaches_achievable_dof() {
        let tol = TolerancePolicy::default();
        let y4 = make_pattern(Pattern::Y, 4, 1, None).unwrap();
        let d = design_for_target(&channel(4, 3, 5, 7), &y4, Some(Model::Y), &tol, None).unwrap();
        assert!(d.plan.fallback);
        assert_eq!(d.plan.streams_per_use(), 10.0);
    }

    #[test]
    fn forced_route_reports_construction_error() {
        let tol = TolerancePolicy::default();
        let y4 = make_pattern(Pattern::Y, 4, 1, None).unwrap();
        let err = design_for_target(&channel(4, 3, 6, 1), &y4, Some(Model::Y), &tol, Some(RouteKind::Generic))
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientNullSpace { .. }));
    }

    #[test]
    fn general_switch_matrix_deactivates_sources() {
        // node 1 sends 2 streams total; generic needs M >= 2 and N >= 2M + 1
        let d = DataSwitchMatrix::from_rows(vec![
            vec![0, 1, 1, 0],
            vec![1, 0, 0, 1],
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
        ])
        .unwrap();
        let tol = TolerancePolicy::default();
        let design = design_for_target(&channel(4, 3, 5, 4), &d, None, &tol, None).unwrap();
        assert_eq!(design.plan.m_used, 2);
        assert!(design.plan.fallback);
    }

    #[test]
    fn extension_with_explicit_streams() {
        let tol = TolerancePolicy::default();
        let y = make_pattern(Pattern::Y, 4, 4, None).unwrap();
        let design = design_extended(&channel(4, 4, 15, 5), &y, Some(Model::Y), 3, &tol).unwrap();
        assert_eq!(design.plan.streams(), 48);
        assert_eq!(design.plan.streams_per_use(), 16.0);
        assert_eq!(design.channel().m(), 12);
    }

    #[test]
    fn route_names_parse() {
        assert_eq!("beta".parse::<RouteKind>().unwrap(), RouteKind::Beta);
        assert!("fast".parse::<RouteKind>().is_err());
    }
}
