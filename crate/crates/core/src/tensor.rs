//! The truncated graded tensor algebra `T^(m)(E) ≅ ℝ^{A(m)}`.
//!
//! Elements are dense coefficient vectors indexed by the canonical order of a
//! [`MultiindexBasis`]. The product discards every word of degree above `m`,
//! which makes elements with zero constant term nilpotent, so `exp`, `log` and
//! the inverse are finite sums and are evaluated by Horner-style nesting.

use std::ops::{Add, Index, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::multiindex::{Multiindex, MultiindexBasis};

#[derive(Clone, Debug)]
pub struct TruncatedTensor {
    basis: Arc<MultiindexBasis>,
    coeffs: Vec<f64>,
}

impl TruncatedTensor {
    pub fn zero(basis: &Arc<MultiindexBasis>) -> Self {
        TruncatedTensor {
            basis: Arc::clone(basis),
            coeffs: vec![0.0; basis.len()],
        }
    }

    /// The unit `1 ∈ T^(m)(E)`.
    pub fn unit(basis: &Arc<MultiindexBasis>) -> Self {
        let mut t = Self::zero(basis);
        t.coeffs[0] = 1.0;
        t
    }

    /// The generator `Z_i` (`i = 0` is time).
    pub fn generator(basis: &Arc<MultiindexBasis>, letter: u8) -> Result<Self> {
        let idx = basis
            .index_of(&Multiindex::new(vec![letter]))
            .ok_or_else(|| Error::InvalidArgument(format!("Z_{letter} is not in A({})", basis.m())))?;
        let mut t = Self::zero(basis);
        t.coeffs[idx] = 1.0;
        Ok(t)
    }

    pub fn from_coeffs(basis: &Arc<MultiindexBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector has length {}, basis has {}",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(TruncatedTensor {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Builds a tensor from `(word, coefficient)` pairs. Words of degree above
    /// `m` are dropped; repeated words accumulate.
    pub fn from_terms<'a>(
        basis: &Arc<MultiindexBasis>,
        terms: impl IntoIterator<Item = (&'a Multiindex, f64)>,
    ) -> Self {
        let mut t = Self::zero(basis);
        for (w, c) in terms {
            if let Some(i) = basis.index_of(w) {
                t.coeffs[i] += c;
            }
        }
        t
    }

    pub fn basis(&self) -> &Arc<MultiindexBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient at `w`; zero for words outside `A(m)`.
    pub fn get(&self, w: &Multiindex) -> f64 {
        self.basis.index_of(w).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn constant(&self) -> f64 {
        self.coeffs[0]
    }

    fn check_same(&self, other: &TruncatedTensor) -> Result<()> {
        if *self.basis != *other.basis {
            return Err(Error::BasisMismatch(
                self.basis.d(),
                self.basis.m(),
                other.basis.d(),
                other.basis.m(),
            ));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        TruncatedTensor {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn try_add(&self, other: &TruncatedTensor) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &TruncatedTensor) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &TruncatedTensor, f: impl Fn(f64, f64) -> f64) -> Self {
        TruncatedTensor {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Truncated tensor product.
    pub fn try_mul(&self, other: &TruncatedTensor) -> Result<Self> {
        self.check_same(other)?;
        let mut out = vec![0.0; self.coeffs.len()];
        mul_into(&self.basis, &self.coeffs, &other.coeffs, &mut out);
        Ok(TruncatedTensor {
            basis: Arc::clone(&self.basis),
            coeffs: out,
        })
    }

    /// Lie bracket `[a, b] = a⊗b − b⊗a`.
    pub fn bracket(&self, other: &TruncatedTensor) -> Result<Self> {
        self.try_mul(other)?.try_sub(&other.try_mul(self)?)
    }

    /// Truncated exponential. Requires a zero constant term.
    pub fn exp(&self) -> Result<Self> {
        if self.constant() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "exp needs a zero constant term, got {}",
                self.constant()
            )));
        }
        // 1 + a(1 + a/2(1 + a/3(… (1 + a/m))))
        let m = self.basis.m();
        let mut acc = Self::unit(&self.basis);
        let mut tmp = vec![0.0; self.coeffs.len()];
        for k in (1..=m).rev() {
            mul_into(&self.basis, &self.coeffs, &acc.coeffs, &mut tmp);
            let inv_k = 1.0 / k as f64;
            for (dst, &src) in acc.coeffs.iter_mut().zip(&tmp) {
                *dst = src * inv_k;
            }
            acc.coeffs[0] += 1.0;
        }
        Ok(acc)
    }

    /// Truncated logarithm. Requires a positive constant term.
    pub fn log(&self) -> Result<Self> {
        let a0 = self.constant();
        if !(a0 > 0.0) {
            return Err(Error::InvalidArgument(format!("log needs a positive constant term, got {a0}")));
        }
        let x = self.normalised_nilpotent(a0);
        // log(1 + x) = x(1 − x(1/2 − x(1/3 − …)))
        let m = self.basis.m();
        let mut acc = Self::zero(&self.basis);
        let mut tmp = vec![0.0; self.coeffs.len()];
        for k in (1..=m).rev() {
            mul_into(&self.basis, &x.coeffs, &acc.coeffs, &mut tmp);
            acc.coeffs.copy_from_slice(&tmp);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc.coeffs[0] += sign / k as f64;
        }
        mul_into(&self.basis, &x.coeffs, &acc.coeffs, &mut tmp);
        acc.coeffs.copy_from_slice(&tmp);
        acc.coeffs[0] += a0.ln();
        Ok(acc)
    }

    /// Multiplicative inverse. Requires a nonzero constant term.
    pub fn inverse(&self) -> Result<Self> {
        let a0 = self.constant();
        if a0 == 0.0 || !a0.is_finite() {
            return Err(Error::InvalidArgument(format!("inverse needs a nonzero constant term, got {a0}")));
        }
        let x = self.normalised_nilpotent(a0);
        // (1 + x)^{-1} = 1 − x(1 − x(1 − …))
        let m = self.basis.m();
        let mut acc = Self::unit(&self.basis);
        let mut tmp = vec![0.0; self.coeffs.len()];
        for _ in 0..m {
            mul_into(&self.basis, &x.coeffs, &acc.coeffs, &mut tmp);
            for (dst, &src) in acc.coeffs.iter_mut().zip(&tmp) {
                *dst = -src;
            }
            acc.coeffs[0] += 1.0;
        }
        Ok(acc.scale(1.0 / a0))
    }

    /// `a / a0 − 1`.
    fn normalised_nilpotent(&self, a0: f64) -> Self {
        let mut x = self.scale(1.0 / a0);
        x.coeffs[0] = 0.0;
        x
    }

    /// Canonical projection `π_n`: zero every coefficient of degree above `n`.
    pub fn project(&self, n: usize) -> Result<Self> {
        if n > self.basis.m() {
            return Err(Error::InvalidArgument(format!(
                "projection degree {n} exceeds truncation m={}",
                self.basis.m()
            )));
        }
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if self.basis.degree(i) > n {
                *c = 0.0;
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &TruncatedTensor) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Nonzero terms as `(word, coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Multiindex, f64)> + '_ {
        self.basis
            .words()
            .iter()
            .zip(self.coeffs.iter().copied())
            .filter(|(_, c)| *c != 0.0)
    }
}

/// `out[γ] = Σ_{α*β=γ} a[α]·b[β]` over the precomputed splits of each word.
pub(crate) fn mul_into(basis: &MultiindexBasis, a: &[f64], b: &[f64], out: &mut [f64]) {
    for (g, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &(p, s) in basis.splits(g) {
            acc += a[p as usize] * b[s as usize];
        }
        *slot = acc;
    }
}

impl Index<usize> for TruncatedTensor {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

impl PartialEq for TruncatedTensor {
    fn eq(&self, other: &Self) -> bool {
        *self.basis == *other.basis && self.coeffs == other.coeffs
    }
}

// Operator sugar panics on basis mismatch; the `try_*` forms return errors.

impl Add for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn add(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        self.try_add(rhs).expect("tensor basis mismatch")
    }
}

impl Sub for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn sub(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        self.try_sub(rhs).expect("tensor basis mismatch")
    }
}

impl Mul for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn mul(self, rhs: &TruncatedTensor) -> TruncatedTensor {
        self.try_mul(rhs).expect("tensor basis mismatch")
    }
}

impl Mul<f64> for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn mul(self, rhs: f64) -> TruncatedTensor {
        self.scale(rhs)
    }
}

impl Neg for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn neg(self) -> TruncatedTensor {
        self.scale(-1.0)
    }
}
