//! Words over the alphabet `{0, …, d}` and the graded sets `A(m)`.
//!
//! Letter `0` is the time-like coordinate and counts twice in the degree
//! `‖α‖ = |α| + #{j : α_j = 0}`; letters `1..=d` are Brownian coordinates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum total length accepted by [`shuffles`].
pub const SHUFFLE_GUARD: usize = 12;

/// Upper bound on `|A(m)|` accepted by [`MultiindexBasis::new`].
pub const BASIS_SIZE_GUARD: usize = 4_000_000;

/// A word `α = (α_1, …, α_k)` over `{0, …, d}`. The empty word is `∅`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Multiindex(Vec<u8>);

impl Multiindex {
    pub fn new(letters: impl Into<Vec<u8>>) -> Self {
        Multiindex(letters.into())
    }

    pub fn empty() -> Self {
        Multiindex(Vec::new())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// Word length `|α|`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Graded degree `‖α‖`.
    pub fn degree(&self) -> usize {
        self.0.len() + self.zero_count()
    }

    pub fn zero_count(&self) -> usize {
        self.0.iter().filter(|&&l| l == 0).count()
    }

    pub fn max_letter(&self) -> Option<u8> {
        self.0.iter().copied().max()
    }

    /// Concatenation `α * β`.
    pub fn concat(&self, other: &Multiindex) -> Multiindex {
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.0);
        letters.extend_from_slice(&other.0);
        Multiindex(letters)
    }

    pub fn push(&mut self, letter: u8) {
        self.0.push(letter);
    }
}

impl From<&[u8]> for Multiindex {
    fn from(letters: &[u8]) -> Self {
        Multiindex(letters.to_vec())
    }
}

impl<const K: usize> From<[u8; K]> for Multiindex {
    fn from(letters: [u8; K]) -> Self {
        Multiindex(letters.to_vec())
    }
}

impl fmt::Display for Multiindex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Multiindex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::InvalidArgument(format!("multiindex must be parenthesised: {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(Multiindex::empty());
        }
        inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidArgument(format!("bad letter {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Multiindex)
    }
}

/// All interleavings of `a` and `b` that preserve the internal order of each,
/// with multiplicity.
pub fn shuffles(a: &Multiindex, b: &Multiindex) -> Result<Vec<Multiindex>> {
    if a.len() + b.len() > SHUFFLE_GUARD {
        return Err(Error::GuardExceeded(format!(
            "shuffle of words with total length {} exceeds {SHUFFLE_GUARD}",
            a.len() + b.len()
        )));
    }
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(a.len() + b.len());
    shuffle_into(a.letters(), b.letters(), &mut buf, &mut out);
    Ok(out)
}

fn shuffle_into(a: &[u8], b: &[u8], buf: &mut Vec<u8>, out: &mut Vec<Multiindex>) {
    if a.is_empty() || b.is_empty() {
        let mut w = buf.clone();
        w.extend_from_slice(a);
        w.extend_from_slice(b);
        out.push(Multiindex(w));
        return;
    }
    buf.push(a[0]);
    shuffle_into(&a[1..], b, buf, out);
    buf.pop();
    buf.push(b[0]);
    shuffle_into(a, &b[1..], buf, out);
    buf.pop();
}

/// Number of words of degree at most `m` over `{0, …, d}`, without enumerating.
pub fn basis_size(d: usize, m: usize) -> usize {
    // exact[n] = d * exact[n-1] + exact[n-2]: last letter spatial (deg 1) or time (deg 2).
    let mut exact = vec![0usize; m + 1];
    exact[0] = 1;
    for n in 1..=m {
        let spatial = exact[n - 1].saturating_mul(d);
        let time = if n >= 2 { exact[n - 2] } else { 0 };
        exact[n] = spatial.saturating_add(time);
    }
    exact.iter().fold(0usize, |acc, &x| acc.saturating_add(x))
}

/// The set `A(m)` for a fixed dimension `d`, in canonical order (graded by
/// `‖α‖`, then lexicographic), with the concatenation structure precomputed.
#[derive(Clone, Debug)]
pub struct MultiindexBasis {
    d: usize,
    m: usize,
    words: Vec<Multiindex>,
    lookup: HashMap<Multiindex, usize>,
    degrees: Vec<usize>,
    /// Index of the word with its last letter removed; `usize::MAX` for `∅`.
    parents: Vec<usize>,
    /// `split_offsets[g]..split_offsets[g + 1]` indexes `splits` for word `g`.
    split_offsets: Vec<usize>,
    /// `(prefix, suffix)` pairs with `prefix * suffix == word`.
    splits: Vec<(u32, u32)>,
}

impl PartialEq for MultiindexBasis {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.m == other.m
    }
}

impl MultiindexBasis {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "basis needs d >= 1 and m >= 1, got d={d}, m={m}"
            )));
        }
        if d > u8::MAX as usize - 1 {
            return Err(Error::InvalidArgument(format!("d={d} exceeds the letter range")));
        }
        let size = basis_size(d, m);
        if size > BASIS_SIZE_GUARD {
            return Err(Error::GuardExceeded(format!(
                "|A({m})| = {size} for d={d} exceeds {BASIS_SIZE_GUARD}"
            )));
        }

        let mut words = Vec::with_capacity(size);
        let mut stack = vec![(Multiindex::empty(), 0usize)];
        while let Some((w, deg)) = stack.pop() {
            for letter in 0..=d as u8 {
                let next_deg = deg + if letter == 0 { 2 } else { 1 };
                if next_deg <= m {
                    let mut child = w.clone();
                    child.push(letter);
                    stack.push((child, next_deg));
                }
            }
            words.push(w);
        }
        words.sort_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| a.cmp(b)));

        let lookup: HashMap<Multiindex, usize> =
            words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let degrees = words.iter().map(Multiindex::degree).collect();
        let parents = words
            .iter()
            .map(|w| {
                if w.is_empty() {
                    usize::MAX
                } else {
                    lookup[&Multiindex::from(&w.letters()[..w.len() - 1])]
                }
            })
            .collect();

        let mut split_offsets = Vec::with_capacity(words.len() + 1);
        let mut splits = Vec::new();
        for w in &words {
            split_offsets.push(splits.len());
            for k in 0..=w.len() {
                let prefix = lookup[&Multiindex::from(&w.letters()[..k])];
                let suffix = lookup[&Multiindex::from(&w.letters()[k..])];
                splits.push((prefix as u32, suffix as u32));
            }
        }
        split_offsets.push(splits.len());

        Ok(MultiindexBasis {
            d,
            m,
            words,
            lookup,
            degrees,
            parents,
            split_offsets,
            splits,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `|A(m)|`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[Multiindex] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &Multiindex {
        &self.words[i]
    }

    pub fn index_of(&self, w: &Multiindex) -> Option<usize> {
        self.lookup.get(w).copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        let p = self.parents[i];
        (p != usize::MAX).then_some(p)
    }

    /// All `(prefix, suffix)` index pairs whose concatenation is word `i`,
    /// from `(∅, word)` to `(word, ∅)`.
    pub fn splits(&self, i: usize) -> &[(u32, u32)] {
        &self.splits[self.split_offsets[i]..self.split_offsets[i + 1]]
    }

    /// Indices of `A₀(m) = A(m) \ {∅}`.
    pub fn nonempty(&self) -> impl Iterator<Item = usize> + '_ {
        1..self.words.len()
    }

    /// Indices of `A₁(m) = A(m) \ {∅, (0)}`.
    pub fn without_time_letter(&self) -> impl Iterator<Item = usize> + '_ {
        let time = self.index_of(&Multiindex::new(vec![0]));
        (1..self.words.len()).filter(move |&i| Some(i) != time)
    }
}
