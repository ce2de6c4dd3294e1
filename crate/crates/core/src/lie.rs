//! Distance from a tensor to the truncated free Lie algebra.
//!
//! The span is generated by the right-nested brackets
//! `[Z_{i1}, [Z_{i2}, … [Z_{ik−1}, Z_{ik}]…]]` of every nonempty word in
//! `A(m)`. This set is redundant, so it is orthonormalised with a drop
//! tolerance instead of being reduced to a Hall basis.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::multiindex::{Multiindex, MultiindexBasis};
use crate::tensor::{mul_into, TruncatedTensor};

/// Relative norm below which an orthogonalised bracket is treated as dependent.
pub const DROP_TOLERANCE: f64 = 1e-10;

/// An orthonormal basis of the Lie polynomials in `T^(m)(E)`.
#[derive(Clone, Debug)]
pub struct LieSpan {
    basis: Arc<MultiindexBasis>,
    orthonormal: Vec<Vec<f64>>,
}

impl LieSpan {
    pub fn new(basis: &Arc<MultiindexBasis>) -> Self {
        let n = basis.len();
        // brackets[i] is the right-nested bracket of word i, built from its suffix.
        let mut brackets: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by_key(|&i| basis.word(i).len());
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for i in order {
            let word = basis.word(i);
            let first = word.letters()[0];
            let mut gen = vec![0.0; n];
            gen[basis
                .index_of(&Multiindex::new(vec![first]))
                .expect("single letters are in the basis")] = 1.0;
            if word.len() == 1 {
                brackets[i] = Some(gen);
                continue;
            }
            let tail = basis
                .index_of(&Multiindex::from(&word.letters()[1..]))
                .expect("suffixes are in the basis");
            let inner = brackets[tail].as_ref().expect("shorter brackets first");
            mul_into(basis, &gen, inner, &mut left);
            mul_into(basis, inner, &gen, &mut right);
            brackets[i] = Some(left.iter().zip(&right).map(|(a, b)| a - b).collect());
        }

        let mut orthonormal: Vec<Vec<f64>> = Vec::new();
        for v in brackets.into_iter().flatten() {
            let original = norm(&v);
            if original == 0.0 {
                continue;
            }
            let mut v = v;
            // Two Gram–Schmidt passes keep the basis orthogonal to working precision.
            for _ in 0..2 {
                for q in &orthonormal {
                    let c = dot(q, &v);
                    for (x, y) in v.iter_mut().zip(q) {
                        *x -= c * y;
                    }
                }
            }
            let remaining = norm(&v);
            if remaining > DROP_TOLERANCE * original {
                v.iter_mut().for_each(|x| *x /= remaining);
                orthonormal.push(v);
            }
        }
        LieSpan {
            basis: Arc::clone(basis),
            orthonormal,
        }
    }

    /// Dimension of the truncated free Lie algebra found numerically.
    pub fn dim(&self) -> usize {
        self.orthonormal.len()
    }

    /// Euclidean distance from `a` to the span. Requires `a[∅] = 0`.
    pub fn residual(&self, a: &TruncatedTensor) -> Result<f64> {
        if **a.basis() != *self.basis {
            return Err(Error::BasisMismatch(
                a.basis().d(),
                a.basis().m(),
                self.basis.d(),
                self.basis.m(),
            ));
        }
        if a.constant() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Lie residual needs a zero constant term, got {}",
                a.constant()
            )));
        }
        let mut r = a.coeffs().to_vec();
        for _ in 0..2 {
            for q in &self.orthonormal {
                let c = dot(q, &r);
                for (x, y) in r.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        Ok(norm(&r))
    }
}

/// One-shot [`LieSpan::residual`].
pub fn lie_residual(a: &TruncatedTensor) -> Result<f64> {
    LieSpan::new(a.basis()).residual(a)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
