use std::sync::Arc;

use nalgebra::DMatrix;

use super::{build_instance, LpInstance};
use crate::error::{Error, Result};
use crate::moments::MomentVector;
use crate::multiindex::MultiindexBasis;
use crate::path::PiecewiseLinearPath;

/// Relative singular-value cutoff for declaring support columns dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Reduction {
    pub paths: Vec<PiecewiseLinearPath>,
    pub weights: Vec<f64>,
    /// Scaled residual after the last elimination.
    pub residual: f64,
    /// Scaled residual before the first and after every elimination.
    pub residual_trace: Vec<f64>,
}

/// Carathéodory–Tchakaloff subsampling of a feasible weighting of `paths`.
pub fn caratheodory_reduce(
    paths: &[PiecewiseLinearPath],
    weights: &[f64],
    basis: &Arc<MultiindexBasis>,
    target: &MomentVector,
) -> Result<Reduction> {
    if paths.len() != weights.len() {
        return Err(Error::InvalidArgument(format!("{} paths with {} weights", paths.len(), weights.len())));
    }
    let inst = build_instance(paths, basis, target)?;
    let (reduced, trace) = reduce_weights(&inst, weights)?;
    let (paths, weights): (Vec<_>, Vec<_>) = paths
        .iter()
        .zip(&reduced)
        .filter(|(_, &w)| w > 0.0)
        .map(|(p, &w)| (p.clone(), w))
        .unzip();
    Ok(Reduction {
        paths,
        weights,
        residual: *trace.last().expect("trace starts with the input residual"),
        residual_trace: trace,
    })
}

/// Moves `weights` along null vectors of the active columns until the active
/// columns are linearly independent, zeroing one weight per step.
pub fn reduce_weights(inst: &LpInstance, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if weights.len() != inst.cols() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} columns",
            weights.len(),
            inst.cols()
        )));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let start = inst.residual(weights);
    if start > inst.epsilon {
        return Err(Error::InvalidArgument(format!(
            "input weights are not feasible: residual {start:e} > {:e}",
            inst.epsilon
        )));
    }
    let mut w = weights.to_vec();
    let mut trace = vec![start];
    let rows = inst.rows();
    loop {
        let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
        if support.len() <= 1 {
            break;
        }
        let active = &support[..support.len().min(rows + 1)];
        let Some(v) = null_vector(inst, active)? else {
            if active.len() == support.len() {
                break;
            }
            return Err(Error::Numerical(format!(
                "{} columns of a {}-row system appear independent",
                active.len(),
                rows
            )));
        };
        // Step until the first weight on the positive side of v hits zero.
        let mut step = f64::INFINITY;
        let mut hit = usize::MAX;
        for (k, &j) in active.iter().enumerate() {
            if v[k] > 0.0 {
                let t = w[j] / v[k];
                if t < step {
                    step = t;
                    hit = j;
                }
            }
        }
        if hit == usize::MAX {
            return Err(Error::Numerical("null vector has no positive entry".into()));
        }
        for (k, &j) in active.iter().enumerate() {
            w[j] -= step * v[k];
            if w[j] < 0.0 {
                if w[j] < -1e-12 {
                    return Err(Error::Numerical(format!("weight {j} went negative ({:e})", w[j])));
                }
                w[j] = 0.0;
            }
        }
        w[hit] = 0.0;
        let r = inst.residual(&w);
        let prev = *trace.last().expect("nonempty");
        if r > prev + inst.epsilon {
            return Err(Error::Numerical(format!(
                "elimination raised the residual from {prev:e} to {r:e}"
            )));
        }
        trace.push(r);
    }
    Ok((w, trace))
}

/// A unit null vector of the scaled columns `cols`, oriented to have a positive
/// entry, or `None` when the columns are numerically independent.
fn null_vector(inst: &LpInstance, cols: &[usize]) -> Result<Option<Vec<f64>>> {
    let s = cols.len();
    let rows = inst.rows().max(s);
    let a = DMatrix::from_fn(rows, s, |i, k| if i < inst.rows() { inst.scaled(i, cols[k]) } else { 0.0 });
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &x)| (i, x))
        .expect("nonempty");
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smin > RANK_TOLERANCE * smax {
        return Ok(None);
    }
    let mut v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    if v.iter().all(|&x| x <= 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(Some(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::degree3_formula;
    use crate::moments::{analytic_moments, Provenance};

    fn basis(d: usize, m: usize) -> Arc<MultiindexBasis> {
        Arc::new(MultiindexBasis::new(d, m).unwrap())
    }

    #[test]
    fn independent_support_is_unchanged() {
        let f = degree3_formula(2).unwrap();
        let b = basis(2, 3);
        let r = caratheodory_reduce(&f.paths, &f.weights, &b, &analytic_moments(&b)).unwrap();
        assert_eq!(r.paths.len(), 4);
        assert_eq!(r.weights, f.weights);
    }

    #[test]
    fn collinear_points_reduce_to_two() {
        // Rank-2 system: rows (1, x) for points x ∈ {0, 1, 2}, target (1, 1).
        let b = basis(1, 1);
        let paths: Vec<_> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&x| PiecewiseLinearPath::linear(vec![1.0, x], 1.0).unwrap())
            .collect();
        let target = MomentVector {
            basis: Arc::clone(&b),
            values: vec![1.0, 1.0],
            provenance: Provenance::Analytic,
            stderr: None,
        };
        let r = caratheodory_reduce(&paths, &[0.25, 0.5, 0.25], &b, &target).unwrap();
        assert_eq!(r.paths.len(), 2);
        assert!(r.residual < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degree3_d4_reduces_below_rank() {
        let f = degree3_formula(4).unwrap();
        let b = basis(4, 3);
        assert_eq!(b.len(), 94);
        let target = analytic_moments(&b);
        let r = caratheodory_reduce(&f.paths, &f.weights, &b, &target).unwrap();
        // Signatures are multilinear in z of degree ≤ 3: 15 independent monomials.
        assert!(r.paths.len() <= 15, "{}", r.paths.len());
        assert!(r.residual <= 2e-9);
        assert!(r.weights.iter().all(|&w| w > 0.0));
        for pair in r.residual_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
    }

    #[test]
    fn rejects_infeasible_input() {
        let f = degree3_formula(1).unwrap();
        let b = basis(1, 3);
        assert!(caratheodory_reduce(&f.paths, &[0.9, 0.1], &b, &analytic_moments(&b)).is_err());
        assert!(caratheodory_reduce(&f.paths, &[1.0], &b, &analytic_moments(&b)).is_err());
    }
}
