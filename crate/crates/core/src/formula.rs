//! Cubature formulas on Wiener space: weighted sets of paths whose expected
//! truncated signature matches that of Brownian motion.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::analytic_moments;
use crate::multiindex::MultiindexBasis;
use crate::path::PiecewiseLinearPath;
use crate::signature::path_signatures;

/// Largest `d` accepted by [`degree3_formula`].
pub const DEGREE3_MAX_D: usize = 20;

/// How the paths of a formula were sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub scheme: String,
    #[serde(rename = "M")]
    pub segments: usize,
    #[serde(rename = "N")]
    pub candidates: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubatureFormula {
    pub d: usize,
    pub m: usize,
    pub horizon: f64,
    pub paths: Vec<PiecewiseLinearPath>,
    pub weights: Vec<f64>,
    /// Max-norm mismatch against the Brownian expected signature over `A(m)`.
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
    /// File name of the run manifest that produced this formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl CubatureFormula {
    /// Validates paths and weights, renormalises the weights to sum to one,
    /// orders paths by descending weight and computes the residual.
    pub fn new(
        d: usize,
        m: usize,
        paths: Vec<PiecewiseLinearPath>,
        weights: Vec<f64>,
        generator: Option<GeneratorInfo>,
    ) -> Result<Self> {
        if paths.is_empty() || paths.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} paths with {} weights",
                paths.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights must be positive, got {w}")));
        }
        for p in &paths {
            if p.d() != d {
                return Err(Error::DimensionMismatch(format!("path has d={}, formula has d={d}", p.d())));
            }
            if (p.horizon() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("paths must live on [0, 1], got {}", p.horizon())));
            }
        }
        let total: f64 = weights.iter().sum();
        let mut pairs: Vec<(PiecewiseLinearPath, f64)> =
            paths.into_iter().zip(weights.into_iter().map(|w| w / total)).collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (paths, weights) = pairs.into_iter().unzip();
        let mut formula = CubatureFormula {
            d,
            m,
            horizon: 1.0,
            paths,
            weights,
            residual: f64::NAN,
            generator,
            manifest: None,
        };
        formula.residual = formula.moment_residuals()?.max;
        Ok(formula)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn basis(&self) -> Result<Arc<MultiindexBasis>> {
        Ok(Arc::new(MultiindexBasis::new(self.d, self.m)?))
    }

    /// Recomputes `Σ λ_j S(w_j) − E[S(B)]` over `A(m)`.
    pub fn moment_residuals(&self) -> Result<MomentResiduals> {
        let basis = self.basis()?;
        let target = analytic_moments(&basis);
        let sigs = path_signatures(&self.paths, &basis)?;
        let mut per_word = target.values.iter().map(|v| -v).collect::<Vec<_>>();
        for (sig, &w) in sigs.iter().zip(&self.weights) {
            for (r, c) in per_word.iter_mut().zip(sig.coeffs()) {
                *r += w * c;
            }
        }
        let mut per_degree = vec![0.0f64; self.m + 1];
        for (i, r) in per_word.iter().enumerate() {
            let deg = basis.degree(i);
            per_degree[deg] = per_degree[deg].max(r.abs());
        }
        let max = per_degree.iter().copied().fold(0.0, f64::max);
        Ok(MomentResiduals {
            per_word,
            per_degree,
            max,
        })
    }

    /// Problems with the weights that make this not a probability measure.
    pub fn weight_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.weights.len() != self.paths.len() {
            problems.push(format!("{} weights for {} paths", self.weights.len(), self.paths.len()));
        }
        for (j, &w) in self.weights.iter().enumerate() {
            if w < 0.0 {
                problems.push(format!("negative weight {w} at path {j}"));
            } else if !(w > 0.0) {
                problems.push(format!("non-positive weight {w} at path {j}"));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            problems.push(format!("weights sum to {total}, not 1"));
        }
        problems
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CubatureFormula = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if f.d == 0 || f.m == 0 {
            return Err(Error::Format(format!("d and m must be positive, got d={}, m={}", f.d, f.m)));
        }
        if f.paths.is_empty() {
            return Err(Error::Format("formula has no paths".into()));
        }
        if f.paths.iter().any(|p| p.d() != f.d) {
            return Err(Error::Format(format!("a path does not have d={} space coordinates", f.d)));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug)]
pub struct MomentResiduals {
    pub per_word: Vec<f64>,
    /// Max absolute residual over words of each degree `0..=m`.
    pub per_degree: Vec<f64>,
    pub max: f64,
}

/// The degree-3 formula: `2^d` paths `t ↦ t(1, z)` over `z ∈ {−1, 1}^d`, each
/// with weight `2^{−d}`.
pub fn degree3_formula(d: usize) -> Result<CubatureFormula> {
    if d == 0 || d > DEGREE3_MAX_D {
        return Err(Error::InvalidArgument(format!("degree-3 formula needs 1 <= d <= {DEGREE3_MAX_D}, got {d}")));
    }
    let n = 1usize << d;
    let paths = (0..n)
        .map(|code| {
            let mut slope = vec![1.0];
            slope.extend((0..d).map(|i| if code >> i & 1 == 1 { -1.0 } else { 1.0 }));
            PiecewiseLinearPath::linear(slope, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = vec![1.0 / n as f64; n];
    CubatureFormula::new(d, 3, paths, weights, None)
}
