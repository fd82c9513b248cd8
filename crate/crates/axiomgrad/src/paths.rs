//! Piecewise-linear path functions from a baseline to an input, with
//! constant-velocity parameterization over `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensor::{pairwise_sum, Tensor};
use serde::{Deserialize, Serialize};

/// A piecewise-linear curve gamma(t) with gamma(0) = baseline and
/// gamma(1) = input. Parameter spans are proportional to segment arc length
/// so the traversal speed is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    waypoints: Vec<Tensor>,
    /// Cumulative arc-length fractions at each waypoint; knots[0] = 0,
    /// knots[last] = 1. Degenerate (zero-length) paths use uniform knots.
    knots: Vec<f64>,
    total_length: f64,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    waypoints: Vec<Vec<f64>>,
}

impl PathSpec {
    pub fn piecewise(waypoints: Vec<Tensor>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("path needs at least 2 waypoints"));
        }
        let shape = waypoints[0].shape().to_vec();
        if waypoints.iter().any(|w| w.shape() != shape.as_slice()) {
            return Err(Error::shape("PathSpec::piecewise", &shape, &[]));
        }
        let seg_lengths: Vec<f64> = waypoints
            .windows(2)
            .map(|w| w[1].sub(&w[0]).unwrap().norm())
            .collect();
        let total: f64 = pairwise_sum(&seg_lengths);
        let mut knots = Vec::with_capacity(waypoints.len());
        knots.push(0.0);
        if total > 0.0 {
            let mut acc = 0.0;
            for &l in &seg_lengths {
                acc += l;
                knots.push(acc / total);
            }
            *knots.last_mut().unwrap() = 1.0;
        } else {
            // constant path: uniform parameter spans
            let n = waypoints.len() - 1;
            for k in 1..=n {
                knots.push(k as f64 / n as f64);
            }
        }
        Ok(PathSpec {
            waypoints,
            knots,
            total_length: total,
        })
    }

    /// Straight line from `x_prime` to `x` (the IG path).
    pub fn straight_line(x: &Tensor, x_prime: &Tensor) -> Result<Self> {
        if !x.same_shape(x_prime) {
            return Err(Error::shape("straight_line", x.shape(), x_prime.shape()));
        }
        PathSpec::piecewise(vec![x_prime.clone(), x.clone()])
    }

    /// Maps a reference path on the unit box through
    /// `T(y) = x_prime + (x - x_prime) ⊙ y`. The image stays inside the
    /// axis-aligned box spanned by `x` and `x_prime`.
    pub fn affine_transport(reference: &PathSpec, x: &Tensor, x_prime: &Tensor) -> Result<Self> {
        if !x.same_shape(x_prime) {
            return Err(Error::shape("affine_transport", x.shape(), x_prime.shape()));
        }
        if x.len() != reference.dim() {
            return Err(Error::shape(
                "affine_transport reference",
                x.shape(),
                reference.waypoints[0].shape(),
            ));
        }
        let mapped: Vec<Tensor> = reference
            .waypoints
            .iter()
            .map(|w| {
                let d: Vec<f64> = w
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(x_prime.data())
                    .map(|((&y, &xi), &xpi)| xpi + (xi - xpi) * y)
                    .collect();
                Tensor::new(x.shape().to_vec(), d).expect("affine image of finite points")
            })
            .collect();
        PathSpec::piecewise(mapped)
    }

    pub fn waypoints(&self) -> &[Tensor] {
        &self.waypoints
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn shape(&self) -> &[usize] {
        self.waypoints[0].shape()
    }

    pub fn baseline(&self) -> &Tensor {
        &self.waypoints[0]
    }

    pub fn input(&self) -> &Tensor {
        self.waypoints.last().unwrap()
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Parameter spans `[t0, t1]` per segment, index-aligned with
    /// `waypoints.windows(2)`.
    pub fn segment_spans(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.knots
            .windows(2)
            .enumerate()
            .map(|(s, w)| (s, w[0], w[1]))
    }

    fn segment_at(&self, t: f64) -> usize {
        // right-continuous: at a knot the following segment owns t
        match self
            .knots
            .iter()
            .rposition(|&k| k <= t)
        {
            Some(i) if i + 1 < self.knots.len() => i,
            _ => self.knots.len() - 2,
        }
    }

    pub fn eval(&self, t: f64) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("path parameter {} outside [0,1]", t)));
        }
        // endpoints are exact by construction
        if t == 0.0 {
            return Ok(self.waypoints[0].clone());
        }
        if t == 1.0 {
            return Ok(self.waypoints.last().unwrap().clone());
        }
        let s = self.segment_at(t);
        let (t0, t1) = (self.knots[s], self.knots[s + 1]);
        if t1 <= t0 {
            return Ok(self.waypoints[s].clone());
        }
        let u = (t - t0) / (t1 - t0);
        self.waypoints[s].zip_map(&self.waypoints[s + 1], |a, b| a + u * (b - a))
    }

    /// Segment velocity at `t`, scaled so the whole traversal spans `[0, 1]`.
    /// At knots the right derivative is used.
    pub fn velocity(&self, t: f64) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("path parameter {} outside [0,1]", t)));
        }
        let s = if t >= 1.0 {
            self.knots.len() - 2
        } else {
            self.segment_at(t)
        };
        let (t0, t1) = (self.knots[s], self.knots[s + 1]);
        if t1 <= t0 || self.total_length == 0.0 {
            return Ok(Tensor::zeros(self.shape()));
        }
        Ok(self.waypoints[s + 1]
            .sub(&self.waypoints[s])?
            .scale(1.0 / (t1 - t0)))
    }

    /// True iff every component is non-increasing or non-decreasing along the
    /// whole waypoint sequence.
    pub fn is_monotone(&self) -> bool {
        let dim = self.dim();
        (0..dim).all(|i| {
            let vals: Vec<f64> = self.waypoints.iter().map(|w| w.data()[i]).collect();
            let nondec = vals.windows(2).all(|v| v[1] >= v[0]);
            let noninc = vals.windows(2).all(|v| v[1] <= v[0]);
            nondec || noninc
        })
    }

    /// Every waypoint inside `[a, b]` componentwise (linear interpolation of
    /// box points stays in the box).
    pub fn inside_box(&self, a: &Tensor, b: &Tensor) -> bool {
        self.waypoints.iter().all(|w| w.within(a, b))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "waypoints": self
                .waypoints
                .iter()
                .map(|w| w.data().to_vec())
                .collect::<Vec<_>>(),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let pf: PathFile = serde_json::from_str(s)?;
        let waypoints = pf
            .waypoints
            .into_iter()
            .map(|v| Tensor::new(vec![v.len()], v))
            .collect::<Result<Vec<_>>>()?;
        PathSpec::piecewise(waypoints)
    }
}

/// Finite weighted ensemble of path methods. Weights are non-negative and
/// sum to one.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    members: Vec<(PathSpec, f64)>,
}

impl EnsembleSpec {
    pub fn new(members: Vec<(PathSpec, f64)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        if members.iter().any(|(_, w)| *w < 0.0) {
            return Err(Error::invalid("ensemble weights must be non-negative"));
        }
        let total: f64 = pairwise_sum(&members.iter().map(|(_, w)| *w).collect::<Vec<_>>());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "ensemble weights sum to {}, expected 1",
                total
            )));
        }
        Ok(EnsembleSpec { members })
    }

    pub fn members(&self) -> &[(PathSpec, f64)] {
        &self.members
    }
}

/// The non-monotone loop of the first counterexample:
/// (0,0) -> (0,1) -> (1,1) -> (1,0).
pub fn counterexample_loop_c1() -> PathSpec {
    PathSpec::piecewise(vec![
        Tensor::vector(&[0.0, 0.0]),
        Tensor::vector(&[0.0, 1.0]),
        Tensor::vector(&[1.0, 1.0]),
        Tensor::vector(&[1.0, 0.0]),
    ])
    .unwrap()
}

/// Reference loop on the unit box: around the boundary once, then the
/// diagonal: (0,0) -> (1,0) -> (1,1) -> (0,1) -> (0,0) -> (1,1).
pub fn reference_loop_five_segment() -> PathSpec {
    PathSpec::piecewise(vec![
        Tensor::vector(&[0.0, 0.0]),
        Tensor::vector(&[1.0, 0.0]),
        Tensor::vector(&[1.0, 1.0]),
        Tensor::vector(&[0.0, 1.0]),
        Tensor::vector(&[0.0, 0.0]),
        Tensor::vector(&[1.0, 1.0]),
    ])
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_midpoint() {
        let p = PathSpec::straight_line(&Tensor::vector(&[1.0, 1.0]), &Tensor::vector(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(p.eval(0.5).unwrap().data(), &[0.5, 0.5]);
        assert_eq!(p.eval(0.0).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(p.eval(1.0).unwrap().data(), &[1.0, 1.0]);
        assert!(p.is_monotone());
    }

    #[test]
    fn degenerate_constant_path() {
        let x = Tensor::vector(&[0.3, 0.7]);
        let p = PathSpec::straight_line(&x, &x).unwrap();
        assert_eq!(p.eval(0.5).unwrap().data(), x.data());
        assert_eq!(p.velocity(0.25).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(p.total_length(), 0.0);
    }

    #[test]
    fn loop_corner_waypoints_at_arc_length_knots() {
        let p = counterexample_loop_c1();
        // three unit segments: corners at t = 1/3 and 2/3
        let c1 = p.eval(1.0 / 3.0).unwrap();
        let c2 = p.eval(2.0 / 3.0).unwrap();
        assert!((c1.data()[0] - 0.0).abs() < 1e-12 && (c1.data()[1] - 1.0).abs() < 1e-12);
        assert!((c2.data()[0] - 1.0).abs() < 1e-12 && (c2.data()[1] - 1.0).abs() < 1e-12);
        assert!(!p.is_monotone());
    }

    #[test]
    fn loop_velocity_norm_is_total_length() {
        let p = counterexample_loop_c1();
        for t in [0.1, 0.5, 0.9] {
            let v = p.velocity(t).unwrap();
            assert!((v.norm() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn five_segment_loop_not_monotone() {
        assert!(!reference_loop_five_segment().is_monotone());
    }

    #[test]
    fn affine_transport_identity_and_reflection() {
        let reference = reference_loop_five_segment();
        let same = PathSpec::affine_transport(
            &reference,
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(same.waypoints(), reference.waypoints());

        // x = (0,0), x' = (1,1): T(y) = 1 - y, complementary corners
        let reflected = PathSpec::affine_transport(
            &reference,
            &Tensor::vector(&[0.0, 0.0]),
            &Tensor::vector(&[1.0, 1.0]),
        )
        .unwrap();
        let expect: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        ];
        for (w, e) in reflected.waypoints().iter().zip(&expect) {
            assert_eq!(w.data(), e.as_slice());
        }
    }

    #[test]
    fn affine_transport_straight_line_stays_straight() {
        let unit_line = PathSpec::straight_line(
            &Tensor::vector(&[1.0, 1.0]),
            &Tensor::vector(&[0.0, 0.0]),
        )
        .unwrap();
        let x = Tensor::vector(&[0.8, 0.2]);
        let xp = Tensor::vector(&[0.1, 0.6]);
        let mapped = PathSpec::affine_transport(&unit_line, &x, &xp).unwrap();
        assert_eq!(mapped.baseline().data(), xp.data());
        assert_eq!(mapped.input().data(), x.data());
        assert_eq!(mapped.waypoints().len(), 2);
    }

    #[test]
    fn ensemble_weight_validation() {
        let p = counterexample_loop_c1();
        assert!(EnsembleSpec::new(vec![(p.clone(), 0.5), (p.clone(), 0.5)]).is_ok());
        assert!(EnsembleSpec::new(vec![(p.clone(), 0.6), (p.clone(), 0.5)]).is_err());
        assert!(EnsembleSpec::new(vec![(p, -0.5)]).is_err());
    }

    #[test]
    fn path_file_round_trip() {
        let p = counterexample_loop_c1();
        let s = p.to_json().to_string();
        let q = PathSpec::from_json_str(&s).unwrap();
        assert_eq!(p.waypoints(), q.waypoints());
    }
}
