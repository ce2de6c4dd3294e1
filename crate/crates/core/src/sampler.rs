//! Random piecewise-linear candidate paths on `[0, 1]`.
//!
//! Every path has `M` equal segments with breakpoints `k/M`. Spatial
//! increments are i.i.d. `N(0, 1/M)`. Under [`Scheme::A`] the time coordinate
//! is `t` itself; under [`Scheme::B`] the first `M − 1` time increments are
//! i.i.d. `N(1/M, 1/M²)` and the last one balances the total to exactly 1.
//!
//! Each path draws from its own ChaCha stream selected by the path index, so
//! the output for a given `(seed, index)` does not depend on how paths are
//! scheduled across threads.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Time coordinate `w⁰(t) = t`.
    A,
    /// Random time increments, pinned to `w⁰(1) = 1`.
    B,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::A => "a",
            Scheme::B => "b",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scheme::A),
            "b" => Ok(Scheme::B),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}, expected a or b"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub d: usize,
    /// Number of linear segments `M`.
    pub segments: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(d: usize, segments: usize, scheme: Scheme, seed: u64) -> Result<Self> {
        if d == 0 || segments == 0 {
            return Err(Error::InvalidArgument(format!(
                "sampler needs d >= 1 and M >= 1, got d={d}, M={segments}"
            )));
        }
        if scheme == Scheme::B && segments == 1 {
            return Err(Error::InvalidArgument(
                "scheme b needs M >= 2: with one segment the time increment is not random".into(),
            ));
        }
        Ok(SamplerConfig { d, segments, scheme, seed })
    }

    /// The `index`-th path of the stream.
    pub fn sample_path(&self, index: u64) -> PiecewiseLinearPath {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let m = self.segments;
        let step = 1.0 / m as f64;
        let sd = step.sqrt();
        let time_law = Normal::new(step, step).expect("finite parameters");
        let mut elapsed = 0.0;
        let increments = (0..m)
            .map(|j| {
                let mut inc = Vec::with_capacity(self.d + 1);
                let dt = match self.scheme {
                    Scheme::A => step,
                    Scheme::B if j + 1 < m => time_law.sample(&mut rng),
                    Scheme::B => 1.0 - elapsed,
                };
                elapsed += dt;
                inc.push(dt);
                for _ in 0..self.d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    inc.push(sd * z);
                }
                inc
            })
            .collect();
        PiecewiseLinearPath::from_uniform_increments(increments).expect("uniform breakpoints are valid")
    }
}

/// `count` i.i.d. paths, indices `0..count`.
pub fn sample_paths(cfg: &SamplerConfig, count: usize) -> Result<Vec<PiecewiseLinearPath>> {
    if count == 0 {
        return Err(Error::InvalidArgument("must sample at least one path".into()));
    }
    Ok((0..count as u64).into_par_iter().map(|i| cfg.sample_path(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_scheme_a() {
        let cfg = SamplerConfig::new(2, 2, Scheme::A, 7).unwrap();
        let paths = sample_paths(&cfg, 3).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert_eq!(p.breakpoints(), &[0.0, 0.5, 1.0]);
            assert_eq!(p.dim(), 3);
            assert_eq!(p.endpoint()[0], 1.0);
            assert!(p.slopes().iter().all(|g| g[0] == 1.0));
        }
    }

    #[test]
    fn scheme_b_pins_endpoint() {
        let cfg = SamplerConfig::new(3, 8, Scheme::B, 9).unwrap();
        for p in sample_paths(&cfg, 50).unwrap() {
            let total: f64 = p.segments().map(|(dt, g)| dt * g[0]).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(p.slopes().iter().any(|g| g[0] != 1.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SamplerConfig::new(2, 4, Scheme::B, 123).unwrap();
        let a = sample_paths(&cfg, 20).unwrap();
        let b = sample_paths(&cfg, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(cfg.sample_path(13), a[13]);
        let other = SamplerConfig { seed: 124, ..cfg };
        assert_ne!(sample_paths(&other, 20).unwrap(), a);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SamplerConfig::new(0, 2, Scheme::A, 0).is_err());
        assert!(SamplerConfig::new(2, 0, Scheme::A, 0).is_err());
        assert!(SamplerConfig::new(2, 1, Scheme::B, 0).is_err());
        assert!(SamplerConfig::new(2, 1, Scheme::A, 0).is_ok());
        let cfg = SamplerConfig::new(1, 2, Scheme::A, 0).unwrap();
        assert!(sample_paths(&cfg, 0).is_err());
    }

    #[test]
    fn endpoint_moments() {
        let n = 10_000;
        let cfg = SamplerConfig::new(1, 4, Scheme::A, 2024).unwrap();
        let ends: Vec<f64> = sample_paths(&cfg, n).unwrap().iter().map(|p| p.endpoint()[1]).collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("a".parse::<Scheme>().unwrap(), Scheme::A);
        assert_eq!("B".parse::<Scheme>().unwrap(), Scheme::B);
        assert!("c".parse::<Scheme>().is_err());
    }
}
