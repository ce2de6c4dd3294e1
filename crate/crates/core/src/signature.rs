//! Truncated signatures of piecewise-linear paths.
//!
//! [`path_signature`] multiplies segment exponentials left to right (Chen's
//! identity), which costs `O(n · Σ_γ (|γ|+1))` because each truncated product
//! only visits the cuts of every word. [`signature_bruteforce`] expands the
//! iterated integral over all ways of distributing a word's letters over the
//! segments and is kept as an independent check.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multiindex::MultiindexBasis;
use crate::path::PiecewiseLinearPath;
use crate::tensor::{mul_into, TruncatedTensor};

/// Maximum number of letter-to-segment assignments [`signature_bruteforce`]
/// will enumerate for a single word.
pub const BRUTEFORCE_GUARD: u64 = 2_000_000;

/// Signature of the linear segment `t ↦ t·g`, `t ∈ [0, dt]`:
/// the coefficient at `α` is `dt^{|α|}/|α|! · Π_k g[α_k]`.
pub fn segment_signature(g: &[f64], dt: f64, basis: &Arc<MultiindexBasis>) -> Result<TruncatedTensor> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("segment duration must be positive, got {dt}")));
    }
    check_dim(g.len(), basis)?;
    let mut coeffs = vec![0.0; basis.len()];
    fill_segment(g, dt, basis, &mut coeffs);
    TruncatedTensor::from_coeffs(basis, coeffs)
}

fn fill_segment(g: &[f64], dt: f64, basis: &MultiindexBasis, out: &mut [f64]) {
    out[0] = 1.0;
    // Canonical order lists every parent before its children.
    for i in 1..basis.len() {
        let word = basis.word(i);
        let last = *word.letters().last().expect("nonempty") as usize;
        let parent = basis.parent(i).expect("nonempty word has a parent");
        out[i] = out[parent] * g[last] * dt / word.len() as f64;
    }
}

fn check_dim(dim: usize, basis: &MultiindexBasis) -> Result<()> {
    if dim != basis.d() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "path has {} coordinates, basis expects d+1 = {}",
            dim,
            basis.d() + 1
        )));
    }
    Ok(())
}

/// `π_m(S(w))` by multiplying segment signatures.
pub fn path_signature(path: &PiecewiseLinearPath, basis: &Arc<MultiindexBasis>) -> Result<TruncatedTensor> {
    check_dim(path.dim(), basis)?;
    let n = basis.len();
    let mut acc = vec![0.0; n];
    acc[0] = 1.0;
    let mut seg = vec![0.0; n];
    let mut next = vec![0.0; n];
    for (dt, g) in path.segments() {
        fill_segment(g, dt, basis, &mut seg);
        mul_into(basis, &acc, &seg, &mut next);
        std::mem::swap(&mut acc, &mut next);
    }
    TruncatedTensor::from_coeffs(basis, acc)
}

/// Signatures of many paths, computed in parallel, in input order.
pub fn path_signatures(paths: &[PiecewiseLinearPath], basis: &Arc<MultiindexBasis>) -> Result<Vec<TruncatedTensor>> {
    paths.par_iter().map(|p| path_signature(p, basis)).collect()
}

/// `π_m(S(w))` by direct expansion of the iterated integrals over segments.
///
/// For a word `α` of length `k`, every nondecreasing assignment of its letters
/// to segments contributes `Π_j Δs_j^{n_j} / n_j! · Π_ℓ g_{j(ℓ)}[α_ℓ]`, where
/// `n_j` counts letters placed in segment `j`.
pub fn signature_bruteforce(path: &PiecewiseLinearPath, basis: &Arc<MultiindexBasis>) -> Result<TruncatedTensor> {
    check_dim(path.dim(), basis)?;
    let segments: Vec<(f64, &[f64])> = path.segments().collect();
    let n = segments.len() as u64;
    let max_len = basis.words().iter().map(|w| w.len()).max().unwrap_or(0) as u64;
    let assignments = binomial(max_len + n - 1, max_len);
    if assignments > BRUTEFORCE_GUARD {
        return Err(Error::GuardExceeded(format!(
            "{assignments} segment assignments for words of length {max_len} over {n} segments"
        )));
    }
    let mut coeffs = vec![0.0; basis.len()];
    for (i, word) in basis.words().iter().enumerate() {
        coeffs[i] = expand(word.letters(), &segments, 0, 0, 1.0);
    }
    TruncatedTensor::from_coeffs(basis, coeffs)
}

/// Sum over placements of `letters` into segments `first..`, where the
/// letters already placed in segment `first` number `run`.
fn expand(letters: &[u8], segments: &[(f64, &[f64])], first: usize, run: usize, acc: f64) -> f64 {
    let Some((&letter, rest)) = letters.split_first() else {
        return acc;
    };
    let mut total = 0.0;
    for j in first..segments.len() {
        let (dt, g) = segments[j];
        // Letter joins segment j: one more power of dt over the new factorial.
        let count = if j == first { run + 1 } else { 1 };
        let factor = g[letter as usize] * dt / count as f64;
        total += expand(rest, segments, j, count, acc * factor);
    }
    total
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LieSpan;
    use crate::multiindex::{shuffles, Multiindex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize, m: usize) -> Arc<MultiindexBasis> {
        Arc::new(MultiindexBasis::new(d, m).unwrap())
    }

    fn random_path(rng: &mut ChaCha8Rng, d: usize, segments: usize) -> PiecewiseLinearPath {
        let mut s = vec![0.0];
        for _ in 0..segments {
            let last = *s.last().unwrap();
            s.push(last + rng.random_range(0.1..0.7));
        }
        let slopes = (0..segments)
            .map(|_| (0..=d).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        PiecewiseLinearPath::new(s, slopes).unwrap()
    }

    #[test]
    fn constant_slope_segment() {
        let b = basis(1, 3);
        let s = segment_signature(&[1.0, 1.0], 1.0, &b).unwrap();
        let expected = [
            (vec![], 1.0),
            (vec![0], 1.0),
            (vec![1], 1.0),
            (vec![1, 1], 0.5),
            (vec![0, 1], 0.5),
            (vec![1, 0], 0.5),
            (vec![1, 1, 1], 1.0 / 6.0),
        ];
        assert_eq!(b.len(), expected.len());
        for (w, c) in expected {
            assert!((s.get(&Multiindex::new(w)) - c).abs() < 1e-16);
        }
        let zero = segment_signature(&[0.0, 0.0], 0.7, &b).unwrap();
        assert_eq!(zero, TruncatedTensor::unit(&b));
        assert!(segment_signature(&[1.0, 1.0], 0.0, &b).is_err());
        assert!(segment_signature(&[1.0, 1.0, 1.0], 1.0, &b).is_err());
    }

    #[test]
    fn segment_matches_tensor_exponential() {
        let b = basis(3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let g: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dt = rng.random_range(0.1..1.5);
            let mut lin = TruncatedTensor::zero(&b);
            for (i, gi) in g.iter().enumerate() {
                lin = &lin + &TruncatedTensor::generator(&b, i as u8).unwrap().scale(gi * dt);
            }
            let e = lin.exp().unwrap();
            assert!(segment_signature(&g, dt, &b).unwrap().max_abs_diff(&e) < 1e-14);
        }
    }

    #[test]
    fn single_segment_with_unit_time_slope() {
        let b = basis(2, 5);
        let z = [1.0, 0.7, -1.3];
        let p = PiecewiseLinearPath::linear(z.to_vec(), 1.0).unwrap();
        let s = path_signature(&p, &b).unwrap();
        for (i, w) in b.words().iter().enumerate() {
            let fact: f64 = (1..=w.len()).map(|k| k as f64).product();
            let prod: f64 = w.letters().iter().map(|&l| z[l as usize]).product();
            assert!((s[i] - prod / fact).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_path_has_unit_signature() {
        let b = basis(2, 4);
        let p = PiecewiseLinearPath::new(vec![0.0, 0.3, 1.0], vec![vec![0.0; 3]; 2]).unwrap();
        assert_eq!(path_signature(&p, &b).unwrap(), TruncatedTensor::unit(&b));
    }

    #[test]
    fn dp_matches_bruteforce() {
        let b = basis(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = random_path(&mut rng, 2, 3);
        let dp = path_signature(&p, &b).unwrap();
        let bf = signature_bruteforce(&p, &b).unwrap();
        assert!(dp.max_abs_diff(&bf) < 1e-12);
        assert_eq!(bf.constant(), 1.0);
    }

    #[test]
    fn bruteforce_single_segment_equals_segment_signature() {
        let b = basis(2, 5);
        let g = vec![0.4, -1.1, 0.9];
        let p = PiecewiseLinearPath::linear(g.clone(), 0.8).unwrap();
        let bf = signature_bruteforce(&p, &b).unwrap();
        assert!(bf.max_abs_diff(&segment_signature(&g, 0.8, &b).unwrap()) < 1e-15);
    }

    #[test]
    fn bruteforce_guard() {
        let b = basis(1, 12);
        let p = PiecewiseLinearPath::from_uniform_increments(vec![vec![0.1, 0.2]; 40]).unwrap();
        assert!(matches!(signature_bruteforce(&p, &b), Err(Error::GuardExceeded(_))));
    }

    #[test]
    fn shuffle_identity() {
        let b = basis(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_path(&mut rng, 2, 4);
        let s = path_signature(&p, &b).unwrap();
        let one = Multiindex::from([1]);
        assert!((s.get(&one).powi(2) - 2.0 * s.get(&Multiindex::from([1, 1]))).abs() < 1e-12);
        for (i, a) in b.words().iter().enumerate() {
            for (j, c) in b.words().iter().enumerate() {
                if a.degree() + c.degree() > 6 {
                    continue;
                }
                let rhs: f64 = shuffles(a, c).unwrap().iter().map(|w| s.get(w)).sum();
                assert!((s[i] * s[j] - rhs).abs() < 1e-10, "{a} ⧢ {c}");
            }
        }
    }

    #[test]
    fn log_signature_is_lie() {
        let b = basis(2, 5);
        let span = LieSpan::new(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for segs in 1..5 {
            let p = random_path(&mut rng, 2, segs);
            let l = path_signature(&p, &b).unwrap().log().unwrap();
            assert!(span.residual(&l).unwrap() < 1e-10);
        }
    }

    #[test]
    fn log_of_two_segment_path_is_lie_d2_m3() {
        let b = basis(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = random_path(&mut rng, 2, 2);
        let l = path_signature(&p, &b).unwrap().log().unwrap();
        assert!(crate::lie::lie_residual(&l).unwrap() < 1e-12);
    }

    #[test]
    fn time_only_words() {
        let b = basis(1, 8);
        let p = PiecewiseLinearPath::from_uniform_increments(vec![vec![0.25, 0.3], vec![0.25, -0.8], vec![0.5, 0.1]])
            .unwrap();
        let s = path_signature(&p, &b).unwrap();
        let mut fact = 1.0;
        for k in 1..=4 {
            fact *= k as f64;
            assert!((s.get(&Multiindex::new(vec![0; k])) - 1.0 / fact).abs() < 1e-15);
        }
    }

    #[test]
    fn chen_identity() {
        let b = basis(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..10 {
            let w = random_path(&mut rng, 3, 2);
            let v = random_path(&mut rng, 3, 3);
            let joined = path_signature(&w.concat(&v).unwrap(), &b).unwrap();
            let product = &path_signature(&w, &b).unwrap() * &path_signature(&v, &b).unwrap();
            assert!(joined.max_abs_diff(&product) < 1e-12);
        }
        // Two equal-slope pieces merge into one segment.
        let g = vec![1.0, 0.5, -0.25, 2.0];
        let half = PiecewiseLinearPath::linear(g.clone(), 0.5).unwrap();
        let whole = PiecewiseLinearPath::linear(g, 1.0).unwrap();
        let merged = path_signature(&half.concat(&half).unwrap(), &b).unwrap();
        assert!(merged.max_abs_diff(&path_signature(&whole, &b).unwrap()) < 1e-14);
    }

    #[test]
    fn scaling_follows_grading() {
        let b = basis(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let w = PiecewiseLinearPath::from_uniform_increments(
            (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        )
        .unwrap();
        let t = 2.7;
        let s = path_signature(&w, &b).unwrap();
        let st = path_signature(&w.scale_to_horizon(t).unwrap(), &b).unwrap();
        for i in 0..b.len() {
            let factor = t.powf(b.degree(i) as f64 / 2.0);
            assert!((st[i] - factor * s[i]).abs() < 1e-12 * factor.max(1.0));
        }
        let i10 = b.index_of(&Multiindex::from([1, 0])).unwrap();
        assert!((st[i10] - t.powf(1.5) * s[i10]).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let b = basis(2, 3);
        let p = PiecewiseLinearPath::linear(vec![1.0, 1.0], 1.0).unwrap();
        assert!(path_signature(&p, &b).is_err());
        assert!(signature_bruteforce(&p, &b).is_err());
    }
}
