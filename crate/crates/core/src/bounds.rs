//! Outer bounds on total DoF: the cut-set bound and the piecewise-linear
//! genie-aided bounds for the Y, pairwise and X exchange models.
//!
//! Every bound is stored as a list of contiguous segments over the antenna
//! ratio `r = N/M`, with exact rational knots. On a segment the bound is
//! either `c·M` (flat) or `c·N` (proportional).

use serde::Serialize;

use crate::channel::Model;
use crate::error::{Error, Result};
use crate::rational::{ratio, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundModel {
    Y,
    Pairwise,
    X,
    Cutset,
}

impl From<Model> for BoundModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Y => BoundModel::Y,
            Model::Pairwise => BoundModel::Pairwise,
            Model::X => BoundModel::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Total DoF `= c·M`.
    Flat(Rational),
    /// Total DoF `= c·N`.
    Proportional(Rational),
}

impl Shape {
    /// DoF per source antenna at ratio `r`.
    pub fn per_m(&self, r: Rational) -> Rational {
        match *self {
            Shape::Flat(c) => c,
            Shape::Proportional(c) => c * r,
        }
    }

    fn per_m_f64(&self, r: f64) -> f64 {
        match *self {
            Shape::Flat(c) => crate::rational::to_f64(c),
            Shape::Proportional(c) => crate::rational::to_f64(c) * r,
        }
    }
}

/// Segment covering ratios in `(start, end]`; `end == None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: Rational,
    pub end: Option<Rational>,
    pub shape: Shape,
}

impl Segment {
    fn contains(&self, r: Rational) -> bool {
        r > self.start && self.end.is_none_or(|e| r <= e)
    }

    fn contains_f64(&self, r: f64) -> bool {
        r > crate::rational::to_f64(self.start)
            && self.end.is_none_or(|e| r <= crate::rational::to_f64(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseBound {
    pub model: BoundModel,
    pub k: usize,
    segments: Vec<Segment>,
}

impl PiecewiseBound {
    pub fn cutset(k: usize) -> Result<Self> {
        check_k(k, 2)?;
        let kr = ratio(k as i128, 1);
        Ok(Self {
            model: BoundModel::Cutset,
            k,
            segments: vec![
                Segment {
                    start: ratio(0, 1),
                    end: Some(kr / 2),
                    shape: Shape::Proportional(ratio(2, 1)),
                },
                Segment {
                    start: kr / 2,
                    end: None,
                    shape: Shape::Flat(kr),
                },
            ],
        })
    }

    /// Y-channel bound, defined for `K >= 4`.
    pub fn y(k: usize) -> Result<Self> {
        check_k(k, 4)?;
        let ki = k as i128;
        let kk = ki * (ki - 1);
        let mut segments = vec![Segment {
            start: ratio(0, 1),
            end: Some(ratio(2 * kk, kk + 2)),
            shape: Shape::Proportional(ratio(2, 1)),
        }];
        for b in 2..=(ki - 2) {
            let lo = ratio(b * (kk + (b - 1) * (b - 2)), kk + b * (b - 1));
            let hi = ratio((b + 1) * (kk + b * (b - 1)), kk + (b + 1) * b);
            segments.push(Segment {
                start: lo,
                end: Some(ratio(b, 1)),
                shape: Shape::Flat(ratio(2 * b * kk, kk + b * (b - 1))),
            });
            segments.push(Segment {
                start: ratio(b, 1),
                end: Some(hi),
                shape: Shape::Proportional(ratio(2 * kk, kk + b * (b - 1))),
            });
        }
        segments.push(Segment {
            start: ratio(ki * ki - 3 * ki + 3, ki - 1),
            end: None,
            shape: Shape::Flat(ratio(ki, 1)),
        });
        Ok(Self {
            model: BoundModel::Y,
            k,
            segments,
        })
    }

    /// Pairwise (multi-pair) bound, defined for even `K >= 4`.
    pub fn pairwise(k: usize) -> Result<Self> {
        check_even_k(k)?;
        let ki = k as i128;
        let mut segments = vec![Segment {
            start: ratio(0, 1),
            end: Some(ratio(2 * ki, ki + 2)),
            shape: Shape::Proportional(ratio(2, 1)),
        }];
        for b in (2..=(ki - 2)).step_by(2) {
            segments.push(Segment {
                start: ratio(b * (ki + b - 2), ki + b),
                end: Some(ratio(b, 1)),
                shape: Shape::Flat(ratio(2 * b * ki, ki + b)),
            });
            segments.push(Segment {
                start: ratio(b, 1),
                end: Some(ratio((b + 2) * (ki + b), ki + b + 2)),
                shape: Shape::Proportional(ratio(2 * ki, ki + b)),
            });
        }
        segments.push(Segment {
            start: ratio(ki - 1, 1),
            end: None,
            shape: Shape::Flat(ratio(ki, 1)),
        });
        Ok(Self {
            model: BoundModel::Pairwise,
            k,
            segments,
        })
    }

    /// X-channel bound, defined for even `K >= 4`.
    pub fn x(k: usize) -> Result<Self> {
        check_even_k(k)?;
        let ki = k as i128;
        let k2 = ki * ki;
        let mut segments = vec![Segment {
            start: ratio(0, 1),
            end: Some(ratio(2 * k2, k2 + 4)),
            shape: Shape::Proportional(ratio(2, 1)),
        }];
        for b in (2..=(ki - 2)).step_by(2) {
            segments.push(Segment {
                start: ratio((k2 + (b - 2) * (b - 2)) * b, k2 + b * b),
                end: Some(ratio(b, 1)),
                shape: Shape::Flat(ratio(2 * k2 * b, k2 + b * b)),
            });
            segments.push(Segment {
                start: ratio(b, 1),
                end: Some(ratio((k2 + b * b) * (b + 2), k2 + (b + 2) * (b + 2))),
                shape: Shape::Proportional(ratio(2 * k2, k2 + b * b)),
            });
        }
        segments.push(Segment {
            start: ratio(k2 - 2 * ki + 2, ki),
            end: None,
            shape: Shape::Flat(ratio(ki, 1)),
        });
        Ok(Self {
            model: BoundModel::X,
            k,
            segments,
        })
    }

    pub fn for_model(model: Model, k: usize) -> Result<Self> {
        match model {
            Model::Y => Self::y(k),
            Model::Pairwise => Self::pairwise(k),
            Model::X => Self::x(k),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Interior knots (segment boundaries) in increasing order.
    pub fn knots(&self) -> Vec<Rational> {
        self.segments.iter().filter_map(|s| s.end).collect()
    }

    fn segment_at(&self, r: Rational) -> &Segment {
        let hits: Vec<&Segment> = self.segments.iter().filter(|s| s.contains(r)).collect();
        debug_assert_eq!(hits.len(), 1, "ratio {r} matched {} segments", hits.len());
        hits[0]
    }

    /// Exact DoF per source antenna at ratio `r > 0`.
    pub fn per_m_exact(&self, r: Rational) -> Rational {
        self.segment_at(r).shape.per_m(r)
    }

    /// DoF per source antenna at ratio `r > 0`.
    pub fn per_m(&self, r: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .find(|s| s.contains_f64(r))
            .unwrap_or_else(|| self.segments.last().expect("bound has segments"));
        seg.shape.per_m_f64(r)
    }

    /// Total DoF bound at real antenna counts `M, N > 0`.
    pub fn evaluate(&self, m: f64, n: f64) -> f64 {
        m * self.per_m(n / m)
    }

    /// Value of the segment on each side of every knot, for continuity checks.
    pub fn knot_values(&self) -> Vec<(Rational, Rational, Rational)> {
        self.segments
            .windows(2)
            .map(|w| {
                let knot = w[0].end.expect("inner segment is bounded");
                (knot, w[0].shape.per_m(knot), w[1].shape.per_m(knot))
            })
            .collect()
    }
}

fn check_k(k: usize, min: usize) -> Result<()> {
    if k < min {
        return Err(Error::InvalidConfig(format!("bound needs K >= {min}, got {k}")));
    }
    Ok(())
}

fn check_even_k(k: usize) -> Result<()> {
    check_k(k, 4)?;
    if !k.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("bound needs even K, got {k}")));
    }
    Ok(())
}

/// `min(K·M, 2·N)`.
pub fn cutset_bound(k: usize, m: f64, n: f64) -> f64 {
    (k as f64 * m).min(2.0 * n)
}

pub fn y_bound(k: usize, m: f64, n: f64) -> Result<f64> {
    Ok(PiecewiseBound::y(k)?.evaluate(m, n))
}

pub fn pairwise_bound(k: usize, m: f64, n: f64) -> Result<f64> {
    Ok(PiecewiseBound::pairwise(k)?.evaluate(m, n))
}

pub fn x_bound(k: usize, m: f64, n: f64) -> Result<f64> {
    Ok(PiecewiseBound::x(k)?.evaluate(m, n))
}

pub fn model_bound(model: Model, k: usize, m: f64, n: f64) -> Result<f64> {
    Ok(PiecewiseBound::for_model(model, k)?.evaluate(m, n))
}
