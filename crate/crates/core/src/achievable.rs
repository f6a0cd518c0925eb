//! Achievable DoF in the (N/M, DoF/M) plane.
//!
//! Each model contributes a finite set of corner points. A corner `(α0, d0)`
//! makes every point of its single-sided trapezoid achievable: `d0·M` once
//! `N/M >= α0` (switch off relay antennas), `d0·N/α0` below it (switch off
//! source antennas). The achievable region is the union over corners.

use std::fmt;

use serde::Serialize;

use crate::channel::{DataSwitchMatrix, Model};
use crate::error::{Error, Result};
use crate::rational::{binomial, ratio, to_f64, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofPlanePoint {
    /// Antenna ratio `N/M`.
    pub ratio: Rational,
    /// Total DoF divided by `M`.
    pub dof_per_m: Rational,
}

impl DofPlanePoint {
    pub fn new(ratio: Rational, dof_per_m: Rational) -> Self {
        Self { ratio, dof_per_m }
    }

    pub fn ratio_f64(&self) -> f64 {
        to_f64(self.ratio)
    }

    pub fn dof_per_m_f64(&self) -> f64 {
        to_f64(self.dof_per_m)
    }

    /// DoF per source antenna this corner supports at antenna ratio `r`.
    pub fn trapezoid_per_m(&self, r: Rational) -> Rational {
        if r >= self.ratio {
            self.dof_per_m
        } else {
            self.dof_per_m / self.ratio * r
        }
    }
}

impl fmt::Display for DofPlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.ratio, self.dof_per_m)
    }
}

impl Serialize for DofPlanePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("DofPlanePoint", 4)?;
        st.serialize_field("ratio", &self.ratio_f64())?;
        st.serialize_field("dof_per_m", &self.dof_per_m_f64())?;
        st.serialize_field("ratio_exact", &self.ratio.to_string())?;
        st.serialize_field("dof_per_m_exact", &self.dof_per_m.to_string())?;
        st.end()
    }
}

fn check_k(k: usize, even: bool) -> Result<()> {
    if k < 4 {
        return Err(Error::InvalidConfig(format!("corner points need K >= 4, got {k}")));
    }
    if even && !k.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("corner points need even K, got {k}")));
    }
    Ok(())
}

/// Corner points of the Y channel: the signal-alignment corner followed by
/// one compression corner per `β = 2..=K-2`.
pub fn y_points(k: usize) -> Result<Vec<DofPlanePoint>> {
    check_k(k, false)?;
    let ki = k as i128;
    let kk = ki * (ki - 1);
    let mut pts = vec![DofPlanePoint::new(
        ratio(2 * kk, kk + 2),
        ratio(4 * kk, kk + 2),
    )];
    for b in 2..=(ki - 2) {
        let den = 2 + kk - b * (b - 1);
        let combos = binomial(k as u32, b as u32);
        pts.push(DofPlanePoint::new(
            ratio(b, 1) + ratio(2 * kk, den * combos),
            ratio(4 * kk, den),
        ));
    }
    Ok(pts)
}

pub fn pairwise_points(k: usize) -> Result<Vec<DofPlanePoint>> {
    check_k(k, true)?;
    let ki = k as i128;
    let mut pts = vec![DofPlanePoint::new(ratio(2 * ki, ki + 2), ratio(4 * ki, ki + 2))];
    for b in (2..=(ki - 2)).step_by(2) {
        let den = 2 + ki - b;
        let combos = binomial((k / 2) as u32, (b / 2) as u32);
        pts.push(DofPlanePoint::new(
            ratio(b, 1) + ratio(2 * ki, den * combos),
            ratio(4 * ki, den),
        ));
    }
    Ok(pts)
}

pub fn x_points(k: usize) -> Result<Vec<DofPlanePoint>> {
    check_k(k, true)?;
    let ki = k as i128;
    let k2 = ki * ki;
    let mut pts = vec![DofPlanePoint::new(ratio(2 * k2, k2 + 4), ratio(4 * k2, k2 + 4))];
    for b in (2..=(ki - 2)).step_by(2) {
        let den = 4 + k2 - b * b;
        let half = binomial((k / 2) as u32, (b / 2) as u32);
        pts.push(DofPlanePoint::new(
            ratio(b, 1) + ratio(2 * k2, den * half * half),
            ratio(4 * k2, den),
        ));
    }
    Ok(pts)
}

pub fn model_points(model: Model, k: usize) -> Result<Vec<DofPlanePoint>> {
    match model {
        Model::Y => y_points(k),
        Model::Pairwise => pairwise_points(k),
        Model::X => x_points(k),
    }
}

/// Largest total DoF in the union of trapezoids at antenna counts `(M, N)`.
pub fn achievable_dof(points: &[DofPlanePoint], m: f64, n: f64) -> f64 {
    let r = n / m;
    points
        .iter()
        .map(|p| {
            let (a0, d0) = (p.ratio_f64(), p.dof_per_m_f64());
            if r >= a0 {
                d0 * m
            } else {
                d0 / a0 * n
            }
        })
        .fold(0.0, f64::max)
}

/// Exact DoF per source antenna at ratio `r`.
pub fn achievable_per_m_exact(points: &[DofPlanePoint], r: Rational) -> Rational {
    points
        .iter()
        .map(|p| p.trapezoid_per_m(r))
        .max()
        .unwrap_or_else(|| ratio(0, 1))
}

/// Large-K limit of the achievable DoF per source antenna, shared by all
/// three models: `2r` up to 2, flat at 4 up to 4, then `r`.
pub fn asymptotic_dof(ratio: f64) -> f64 {
    if ratio <= 2.0 {
        2.0 * ratio
    } else if ratio <= 4.0 {
        4.0
    } else {
        ratio
    }
}

/// Sufficient condition for the generic construction with an arbitrary
/// switch matrix: `M >= max_i Σ_j d_{i,j}` and `N >= (K-2)·M + max d_{i,j}`.
pub fn generic_route_feasible(d: &DataSwitchMatrix, m: usize, n: usize) -> bool {
    let k = d.k();
    m >= d.max_node_streams() && n >= (k - 2) * m + d.max_streams()
}

/// The corner reached by the generic construction for `d` at `M` source
/// antennas: ratio `K-2 + max d/M`, DoF `d_total/M`. `None` when `M` is too
/// small to carry every node's streams or `d` is empty.
pub fn generic_point(d: &DataSwitchMatrix, m: usize) -> Option<DofPlanePoint> {
    if m < d.max_node_streams() || d.d_total() == 0 {
        return None;
    }
    let mi = m as i128;
    Some(DofPlanePoint::new(
        ratio((d.k() as i128 - 2) * mi + d.max_streams() as i128, mi),
        ratio(d.d_total() as i128, mi),
    ))
}

/// Minimal antenna ratio `N/M` for full DoF `K·M` in the L-cluster model
/// with clusters of `k_prime` users: `((K'-1)(L·K'-2)+1)/(K'-1)`.
pub fn lcluster_threshold_ratio(k_prime: usize, l: usize) -> Result<Rational> {
    if k_prime < 2 || l < 1 {
        return Err(Error::InvalidConfig(format!(
            "need K' >= 2 and L >= 1, got K'={k_prime}, L={l}"
        )));
    }
    let kp = k_prime as i128;
    let k = kp * l as i128;
    Ok(ratio((kp - 1) * (k - 2) + 1, kp - 1))
}

/// Minimal relay antenna count (as a real) for full DoF in the L-cluster model.
pub fn lcluster_threshold(k_prime: usize, l: usize, m: usize) -> Result<f64> {
    Ok(m as f64 * to_f64(lcluster_threshold_ratio(k_prime, l)?))
}

/// Ratios where the piecewise outer bound is met by the corner points:
/// `(0, low_end] ∪ [high_start, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TightRegion {
    pub low_end: Rational,
    pub high_start: Rational,
}

impl TightRegion {
    pub fn for_model(model: Model, k: usize) -> Result<Self> {
        check_k(k, model != Model::Y)?;
        let ki = k as i128;
        let low_end = match model {
            Model::Y => ratio(2, 1) + ratio(4, ki * (ki - 1)),
            Model::Pairwise => ratio(2, 1) + ratio(4, ki),
            Model::X => ratio(2, 1) + ratio(8, ki * ki),
        };
        Ok(Self {
            low_end,
            high_start: ratio(ki - 2, 1),
        })
    }

    pub fn contains(&self, r: Rational) -> bool {
        r <= self.low_end || r >= self.high_start
    }
}
