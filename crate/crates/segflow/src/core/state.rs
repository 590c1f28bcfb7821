//! Points in sample space, condition embeddings, and line segments.

use serde::{Deserialize, Serialize};

use super::vec;
use crate::error::{Error, Result};

/// A point in the d-dimensional sample space.
///
/// All entries are finite; the dimension is fixed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State {
    values: Vec<f64>,
}

impl State {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("state must have dimension >= 1".into()));
        }
        if !vec::all_finite(&values) {
            return Err(Error::NonFinite {
                context: "state entries".into(),
                step: None,
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: std::vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A condition embedding of length m (m = 0 means unconditional).
///
/// Conditions are closed under convex combination: `Condition::lerp`
/// always yields a valid condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Condition {
    values: Vec<f64>,
}

impl Condition {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !vec::all_finite(&values) {
            return Err(Error::NonFinite {
                context: "condition entries".into(),
                step: None,
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: std::vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// (1−alpha)·a + alpha·b. Exact at the ends and for a == b.
    pub fn lerp(a: &Condition, b: &Condition, alpha: f64) -> Condition {
        if alpha == 0.0 || a == b {
            return a.clone();
        }
        if alpha == 1.0 {
            return b.clone();
        }
        Condition {
            values: vec::lerp(&a.values, &b.values, alpha),
        }
    }
}

/// An ordered endpoint pair (a, b): the support of the transported
/// distribution of interpolated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    a: State,
    b: State,
}

impl Segment {
    pub fn new(a: State, b: State) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::Config(format!(
                "segment endpoints have mismatched dimensions {} and {}",
                a.dim(),
                b.dim()
            )));
        }
        Ok(Self { a, b })
    }

    /// The degenerate segment with both endpoints at `x`.
    pub fn collapsed(x: State) -> Self {
        Self { a: x.clone(), b: x }
    }

    pub fn a(&self) -> &State {
        &self.a
    }

    pub fn b(&self) -> &State {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// The interpolated point (1−alpha)·a + alpha·b.
    ///
    /// Bitwise-exact at alpha ∈ {0, 1} and on collapsed segments.
    pub fn point(&self, alpha: f64) -> Result<State> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "interpolation coefficient {alpha} outside [0, 1]"
            )));
        }
        if alpha == 0.0 || self.a == self.b {
            return Ok(self.a.clone());
        }
        if alpha == 1.0 {
            return Ok(self.b.clone());
        }
        Ok(State {
            values: vec::lerp(self.a.values(), self.b.values(), alpha),
        })
    }

    /// Midpoint (a + b) / 2.
    pub fn midpoint(&self) -> State {
        State {
            values: self
                .a
                .values()
                .iter()
                .zip(self.b.values())
                .map(|(x, y)| (x + y) / 2.0)
                .collect(),
        }
    }

    /// Euclidean length ‖b − a‖₂.
    pub fn norm(&self) -> f64 {
        vec::l2_norm(&vec::sub(self.b.values(), self.a.values()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_rejects_non_finite() {
        assert!(State::new(vec![0.0, f64::NAN]).is_err());
        assert!(State::new(vec![f64::INFINITY]).is_err());
        assert!(State::new(vec![]).is_err());
        assert!(State::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn segment_point_endpoint_identity_is_bitwise() {
        let a = State::new(vec![-0.0, 1.0 / 3.0]).unwrap();
        let b = State::new(vec![2.0, 4.0]).unwrap();
        let seg = Segment::new(a.clone(), b.clone()).unwrap();
        assert_eq!(
            seg.point(0.0).unwrap().values()[0].to_bits(),
            a.values()[0].to_bits()
        );
        assert_eq!(seg.point(0.0).unwrap(), a);
        assert_eq!(seg.point(1.0).unwrap(), b);
    }

    #[test]
    fn segment_midpoint() {
        let seg = Segment::new(
            State::new(vec![0.0, 0.0]).unwrap(),
            State::new(vec![2.0, 4.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(seg.point(0.5).unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn segment_point_rejects_out_of_range() {
        let seg = Segment::collapsed(State::zeros(2));
        assert!(seg.point(-0.1).is_err());
        assert!(seg.point(1.1).is_err());
    }

    #[test]
    fn segment_norm_zero_iff_equal() {
        let a = State::new(vec![1.0, 2.0]).unwrap();
        let seg = Segment::collapsed(a.clone());
        assert_eq!(seg.norm(), 0.0);
        let seg2 = Segment::new(a, State::new(vec![1.0, 2.5]).unwrap()).unwrap();
        assert!(seg2.norm() > 0.0);
        assert!((seg2.norm() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_rejects_dimension_mismatch() {
        assert!(Segment::new(State::zeros(2), State::zeros(3)).is_err());
    }

    #[test]
    fn condition_lerp_is_convex() {
        let a = Condition::new(vec![1.0, 0.0]).unwrap();
        let b = Condition::new(vec![0.0, 2.0]).unwrap();
        let c = Condition::lerp(&a, &b, 0.25);
        assert_eq!(c.values(), &[0.75, 0.5]);
        assert_eq!(Condition::lerp(&a, &b, 0.0), a);
        assert_eq!(Condition::lerp(&a, &b, 1.0), b);
    }
}
