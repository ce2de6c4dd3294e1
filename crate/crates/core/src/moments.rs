//! Expected signature of Brownian motion with its time coordinate.
//!
//! The analytic target is `E[π_m(S(B))] = π_m(exp(Z₀ + ½ Σ_{i≥1} Z_i⊗Z_i))`
//! (Stratonovich lift of `(t, B_t)` on `[0, 1]`). [`mc_moments`] estimates the
//! same vector by averaging signatures of dyadic linear interpolations of
//! Brownian paths, and exists to check the closed form.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiindexBasis;
use crate::sampler::{SamplerConfig, Scheme};
use crate::signature::path_signature;
use crate::tensor::TruncatedTensor;

/// Samples per deterministic reduction block in [`mc_moments`].
const CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    MonteCarlo { levels: u32, samples: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct MomentVector {
    pub basis: Arc<MultiindexBasis>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// Per-word standard error; `None` for analytic moments.
    pub stderr: Option<Vec<f64>>,
}

impl MomentVector {
    pub fn as_tensor(&self) -> TruncatedTensor {
        TruncatedTensor::from_coeffs(&self.basis, self.values.clone()).expect("lengths agree")
    }
}

/// Closed-form `E[π_m(S(B))]`.
pub fn analytic_moments(basis: &Arc<MultiindexBasis>) -> MomentVector {
    let mut generator = TruncatedTensor::zero(basis);
    if basis.m() >= 2 {
        generator = TruncatedTensor::generator(basis, 0).expect("Z0 has degree 2");
        for i in 1..=basis.d() as u8 {
            let zi = TruncatedTensor::generator(basis, i).expect("letters are in range");
            generator = &generator + &(&zi * &zi).scale(0.5);
        }
    }
    let values = generator.exp().expect("zero constant term").into_coeffs();
    MomentVector {
        basis: Arc::clone(basis),
        values,
        provenance: Provenance::Analytic,
        stderr: None,
    }
}

#[derive(Clone)]
struct Accumulator {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn empty(n: usize) -> Self {
        Accumulator {
            count: 0.0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((mu, m2), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *mu;
            *mu += delta / self.count;
            *m2 += delta * (xi - *mu);
        }
    }

    /// Chan et al. pairwise combination.
    fn merge(a: Accumulator, b: Accumulator) -> Accumulator {
        if a.count == 0.0 {
            return b;
        }
        if b.count == 0.0 {
            return a;
        }
        let count = a.count + b.count;
        let mut out = Accumulator::empty(a.mean.len());
        out.count = count;
        for i in 0..a.mean.len() {
            let delta = b.mean[i] - a.mean[i];
            out.mean[i] = a.mean[i] + delta * b.count / count;
            out.m2[i] = a.m2[i] + b.m2[i] + delta * delta * a.count * b.count / count;
        }
        out
    }
}

fn pairwise(mut parts: Vec<Accumulator>) -> Accumulator {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Accumulator::merge(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

/// Monte Carlo estimate over `samples` Brownian paths linearly interpolated at
/// the dyadic times `j / 2^levels`.
pub fn mc_moments(basis: &Arc<MultiindexBasis>, levels: u32, samples: usize, seed: u64) -> Result<MomentVector> {
    if levels == 0 || levels > 20 || samples == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= levels <= 20 and samples >= 1, got levels={levels}, samples={samples}"
        )));
    }
    let cfg = SamplerConfig::new(basis.d(), 1 << levels, Scheme::A, seed)?;
    let n = basis.len();
    let blocks: Vec<Accumulator> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::empty(n);
            for i in b * CHUNK..((b + 1) * CHUNK).min(samples) {
                let sig = path_signature(&cfg.sample_path(i as u64), basis).expect("dimensions agree");
                acc.push(sig.coeffs());
            }
            acc
        })
        .collect();
    let total = pairwise(blocks);
    let stderr = if samples > 1 {
        total
            .m2
            .iter()
            .map(|m2| (m2 / (samples as f64 - 1.0) / samples as f64).sqrt())
            .collect()
    } else {
        vec![0.0; n]
    };
    let mut values = total.mean;
    values[0] = 1.0;
    Ok(MomentVector {
        basis: Arc::clone(basis),
        values,
        provenance: Provenance::MonteCarlo { levels, samples, seed },
        stderr: Some(stderr),
    })
}

/// Words where `estimate` deviates from `reference` by more than `k` standard
/// errors of the estimate, as `(index, deviation in standard errors)`.
/// Words with zero standard error are flagged only on a mismatch above `1e-12`.
pub fn flag_deviations(reference: &MomentVector, estimate: &MomentVector, k: f64) -> Vec<(usize, f64)> {
    let se = estimate.stderr.as_deref().unwrap_or(&[]);
    (0..reference.values.len())
        .filter_map(|i| {
            let diff = (estimate.values[i] - reference.values[i]).abs();
            let s = se.get(i).copied().unwrap_or(0.0);
            if s > 0.0 {
                let z = diff / s;
                (z > k).then_some((i, z))
            } else {
                (diff > 1e-12).then_some((i, f64::INFINITY))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::Multiindex;

    fn basis(d: usize, m: usize) -> Arc<MultiindexBasis> {
        Arc::new(MultiindexBasis::new(d, m).unwrap())
    }

    #[test]
    fn analytic_examples() {
        let b = basis(2, 6);
        let mv = analytic_moments(&b);
        let t = mv.as_tensor();
        assert_eq!(t.get(&Multiindex::empty()), 1.0);
        assert_eq!(t.get(&Multiindex::from([1])), 0.0);
        assert_eq!(t.get(&Multiindex::from([2])), 0.0);
        assert_eq!(t.get(&Multiindex::from([1, 1])), 0.5);
        assert_eq!(t.get(&Multiindex::from([1, 2])), 0.0);
        assert_eq!(t.get(&Multiindex::from([0])), 1.0);
        assert_eq!(t.get(&Multiindex::from([0, 0])), 0.5);
        // E[B⁴]/4! = 3/24 at (1,1,1,1).
        assert!((t.get(&Multiindex::from([1, 1, 1, 1])) - 0.125).abs() < 1e-16);
        assert!(mv.stderr.is_none());
    }

    #[test]
    fn d1_m2_values() {
        let b = basis(1, 2);
        assert_eq!(analytic_moments(&b).values, vec![1.0, 0.0, 1.0, 0.5]);
        let b = basis(3, 1);
        assert_eq!(analytic_moments(&b).values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_letter_counts_vanish() {
        let b = basis(3, 6);
        let mv = analytic_moments(&b);
        for (i, w) in b.words().iter().enumerate() {
            let odd = (1..=3u8).any(|l| w.letters().iter().filter(|&&x| x == l).count() % 2 == 1);
            if odd {
                assert_eq!(mv.values[i], 0.0, "{w}");
            }
        }
    }

    #[test]
    fn mc_empty_word_and_symmetry() {
        let b = basis(1, 3);
        let mc = mc_moments(&b, 3, 2000, 5).unwrap();
        assert_eq!(mc.values[0], 1.0);
        let se = mc.stderr.as_ref().unwrap();
        assert_eq!(se[0], 0.0);
        let i1 = b.index_of(&Multiindex::from([1])).unwrap();
        assert!(mc.values[i1].abs() < 4.0 * se[i1]);
        assert!(mc_moments(&b, 0, 10, 0).is_err());
        assert!(mc_moments(&b, 2, 0, 0).is_err());
    }

    #[test]
    fn mc_agrees_with_closed_form_small() {
        let b = basis(2, 4);
        let exact = analytic_moments(&b);
        let mc = mc_moments(&b, 6, 10_000, 77).unwrap();
        assert!(flag_deviations(&exact, &mc, 4.0).is_empty());
    }

    #[test]
    fn mc_is_deterministic() {
        let b = basis(1, 3);
        let a = mc_moments(&b, 2, 1500, 3).unwrap();
        let c = mc_moments(&b, 2, 1500, 3).unwrap();
        assert_eq!(a.values, c.values);
        assert_eq!(a.stderr, c.stderr);
    }

    #[test]
    fn mc_error_shrinks_with_samples() {
        let b = basis(1, 4);
        // Exact expectation of the 64-segment interpolant: a 3-point
        // Gauss-Hermite rule integrates each segment exactly up to ξ⁵.
        let h = 1.0 / 64.0;
        let nodes = [(-3f64.sqrt(), 1.0 / 6.0), (0.0, 2.0 / 3.0), (3f64.sqrt(), 1.0 / 6.0)];
        let mut seg = TruncatedTensor::zero(&b);
        for (x, w) in nodes {
            let inc = &TruncatedTensor::generator(&b, 0).unwrap().scale(h)
                + &TruncatedTensor::generator(&b, 1).unwrap().scale(h.sqrt() * x);
            seg = &seg + &inc.exp().unwrap().scale(w);
        }
        let mut interp = TruncatedTensor::unit(&b);
        for _ in 0..64 {
            interp = &interp * &seg;
        }
        let rms = |samples: usize| -> f64 {
            let mut total = 0.0;
            for seed in 0..8 {
                let mc = mc_moments(&b, 6, samples, 1000 + seed).unwrap();
                total += mc.values.iter().zip(interp.coeffs()).map(|(a, e)| (a - e).powi(2)).sum::<f64>();
            }
            (total / 8.0).sqrt()
        };
        let ratio = rms(1000) / rms(16_000);
        assert!(ratio > 2.5 && ratio < 6.0, "ratio {ratio}");
    }
}
