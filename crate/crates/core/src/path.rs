//! Piecewise-linear paths in `ℝ ⊕ ℝ^d` started at the origin.
//!
//! A path is stored as its breakpoints `0 = s_0 < s_1 < … < s_n` together with
//! one constant slope vector per segment. Coordinate 0 is the time-like one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath", into = "RawPath")]
pub struct PiecewiseLinearPath {
    breakpoints: Vec<f64>,
    slopes: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawPath {
    breakpoints: Vec<f64>,
    slopes: Vec<Vec<f64>>,
}

impl TryFrom<RawPath> for PiecewiseLinearPath {
    type Error = Error;

    fn try_from(raw: RawPath) -> Result<Self> {
        PiecewiseLinearPath::new(raw.breakpoints, raw.slopes)
    }
}

impl From<PiecewiseLinearPath> for RawPath {
    fn from(p: PiecewiseLinearPath) -> Self {
        RawPath {
            breakpoints: p.breakpoints,
            slopes: p.slopes,
        }
    }
}

impl PiecewiseLinearPath {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        if slopes.is_empty() {
            return Err(Error::InvalidArgument("a path needs at least one segment".into()));
        }
        if breakpoints.len() != slopes.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints for {} segments",
                breakpoints.len(),
                slopes.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "paths start at time 0, got {}",
                breakpoints[0]
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "breakpoints must be finite and strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let dim = slopes[0].len();
        if dim < 2 {
            return Err(Error::InvalidArgument("slopes need a time and at least one space coordinate".into()));
        }
        for g in &slopes {
            if g.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "slope vectors have mixed dimensions {} and {}",
                    dim,
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("slopes must be finite".into()));
            }
        }
        Ok(PiecewiseLinearPath { breakpoints, slopes })
    }

    /// A path on `[0, 1]` with `increments.len()` equal segments, built from the
    /// coordinate increments of each segment.
    pub fn from_uniform_increments(increments: Vec<Vec<f64>>) -> Result<Self> {
        let n = increments.len();
        let breakpoints = (0..=n).map(|k| k as f64 / n as f64).collect();
        let slopes = increments
            .into_iter()
            .map(|inc| inc.into_iter().map(|x| x * n as f64).collect())
            .collect();
        Self::new(breakpoints, slopes)
    }

    /// A single segment `t ↦ t·g` on `[0, horizon]`.
    pub fn linear(slope: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![slope])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[Vec<f64>] {
        &self.slopes
    }

    /// `d + 1`.
    pub fn dim(&self) -> usize {
        self.slopes[0].len()
    }

    /// Number of Brownian coordinates `d`.
    pub fn d(&self) -> usize {
        self.dim() - 1
    }

    pub fn num_segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty")
    }

    /// `(duration, slope)` per segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.slopes)
            .map(|(w, g)| (w[1] - w[0], g.as_slice()))
    }

    /// Value at time `t` by linear interpolation.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!("t={t} outside [0, {horizon}]")));
        }
        let mut x = vec![0.0; self.dim()];
        for (w, g) in self.breakpoints.windows(2).zip(&self.slopes) {
            let dt = t.min(w[1]) - w[0];
            if dt <= 0.0 {
                break;
            }
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += gi * dt;
            }
        }
        Ok(x)
    }

    pub fn endpoint(&self) -> Vec<f64> {
        self.evaluate(self.horizon()).expect("horizon is in range")
    }

    /// Total variation under the max-coordinate norm.
    pub fn total_variation(&self) -> f64 {
        self.segments()
            .map(|(dt, g)| dt * g.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .sum()
    }

    /// Rescales a path on `[0, 1]` to `[0, T]`: time coordinate by `T`, space
    /// coordinates by `√T`, breakpoints by `T`.
    pub fn scale_to_horizon(&self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if (self.horizon() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "scaling expects a path on [0, 1], got horizon {}",
                self.horizon()
            )));
        }
        let space = 1.0 / horizon.sqrt();
        let mut breakpoints: Vec<f64> = self.breakpoints.iter().map(|s| s * horizon).collect();
        *breakpoints.last_mut().expect("nonempty") = horizon;
        let slopes = self
            .slopes
            .iter()
            .map(|g| {
                g.iter()
                    .enumerate()
                    .map(|(i, &x)| if i == 0 { x } else { x * space })
                    .collect()
            })
            .collect();
        Self::new(breakpoints, slopes)
    }

    /// `self * other`: `other` is translated to start where `self` ends.
    pub fn concat(&self, other: &PiecewiseLinearPath) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate paths in dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let shift = self.horizon();
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(other.breakpoints[1..].iter().map(|s| s + shift));
        let mut slopes = self.slopes.clone();
        slopes.extend(other.slopes.iter().cloned());
        Self::new(breakpoints, slopes)
    }
}
