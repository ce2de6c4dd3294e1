//! Moment-matching linear program and Carathéodory–Tchakaloff reduction.
//!
//! Given candidate paths `w_1, …, w_N`, a cubature formula is any `λ ≥ 0` with
//! `Σ_j λ_j S(w_j) = E[S(B)]` on `A(m)`. The row for `∅` is all ones, so the
//! weights automatically sum to one. A basic feasible solution of this system
//! uses at most `|A(m)|` paths.

mod reduce;
pub mod simplex;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use reduce::{caratheodory_reduce, reduce_weights, Reduction};
pub use simplex::SimplexOptions;

use crate::error::{Error, Result};
use crate::formula::{CubatureFormula, GeneratorInfo};
use crate::moments::MomentVector;
use crate::multiindex::MultiindexBasis;
use crate::path::PiecewiseLinearPath;
use crate::sampler::{sample_paths, SamplerConfig};
use crate::signature::path_signatures;

/// Feasibility tolerance on row-scaled data.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// `Φ λ = b` with `Φ[α, j] = I^α(w_j)`, rows scaled to unit max-abs entry.
#[derive(Clone, Debug)]
pub struct LpInstance {
    pub basis: Arc<MultiindexBasis>,
    rows: usize,
    cols: usize,
    /// Row-major, scaled.
    matrix: Vec<f64>,
    /// Scaled target.
    target: Vec<f64>,
    /// `scaled_row = raw_row / row_scale`.
    row_scale: Vec<f64>,
    pub epsilon: f64,
}

impl LpInstance {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Unscaled entry `I^α(w_j)`.
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.cols + col] * self.row_scale[row]
    }

    pub fn scaled(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.cols + col]
    }

    pub fn row_scale(&self) -> &[f64] {
        &self.row_scale
    }

    pub fn scaled_target(&self) -> &[f64] {
        &self.target
    }

    /// `‖Φλ − b‖_∞` on the scaled system.
    pub fn residual(&self, weights: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            let row = &self.matrix[i * self.cols..(i + 1) * self.cols];
            let r: f64 = row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() - self.target[i];
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Scaled sub-matrix of the given columns.
    fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, cols.len(), |i, k| self.scaled(i, cols[k]))
    }
}

pub fn build_instance(
    paths: &[PiecewiseLinearPath],
    basis: &Arc<MultiindexBasis>,
    target: &MomentVector,
) -> Result<LpInstance> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no candidate paths".into()));
    }
    if *target.basis != **basis {
        return Err(Error::BasisMismatch(target.basis.d(), target.basis.m(), basis.d(), basis.m()));
    }
    let sigs = path_signatures(paths, basis)?;
    let (rows, cols) = (basis.len(), paths.len());
    let mut matrix = vec![0.0; rows * cols];
    for (j, s) in sigs.iter().enumerate() {
        for (i, &c) in s.coeffs().iter().enumerate() {
            matrix[i * cols + j] = c;
        }
    }
    let mut row_scale = vec![1.0; rows];
    let mut scaled_target = target.values.clone();
    for i in 0..rows {
        let row = &mut matrix[i * cols..(i + 1) * cols];
        let max = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if max > 0.0 {
            row.iter_mut().for_each(|x| *x /= max);
            scaled_target[i] /= max;
            row_scale[i] = max;
        }
    }
    Ok(LpInstance {
        basis: Arc::clone(basis),
        rows,
        cols,
        matrix,
        target: scaled_target,
        row_scale,
        epsilon: DEFAULT_EPSILON,
    })
}

#[derive(Clone, Debug)]
pub enum Feasibility {
    Feasible(LpSolution),
    /// Phase 1 stopped with this positive artificial sum, or the range test
    /// proved it can not go below this value.
    Infeasible { objective: f64 },
}

/// Vertex weights below this are dropped before the least-squares polish.
const NEGLIGIBLE_WEIGHT: f64 = 1e-13;

/// Relative cutoff on the pivoted-QR diagonal used by [`range_reduce`].
const RANGE_RANK_TOLERANCE: f64 = 1e-10;

/// The system projected onto the numerical range of `Φ`.
struct RangeReduction {
    rank: usize,
    /// Row-major `rank × cols`, rows scaled to unit max-abs.
    matrix: Vec<f64>,
    target: Vec<f64>,
    /// Lower bound on `‖Φλ − b‖₂` over `λ ≥ 0, Σλ = 1`; may be negative.
    gap: f64,
}

/// Column-pivoted QR `ΦP = QR` truncated at numerical rank `r`.
///
/// Every `λ ≥ 0` with `Σλ = 1` has `‖λ‖₂ ≤ 1` and so
/// `‖(I − Q_r Q_rᵀ)Φλ‖₂ ≤ ‖R₂₂‖_F`. Hence `‖(I − Q_r Q_rᵀ)b‖₂ − ‖R₂₂‖_F` bounds the
/// residual from below. Signatures of paths with few segments span far fewer
/// than `|A(m)|` dimensions, so the bound often settles infeasibility without
/// a simplex, and the simplex itself runs on the `r` independent rows
/// `Q_rᵀΦλ = Q_rᵀb`.
fn range_reduce(inst: &LpInstance) -> RangeReduction {
    let a = DMatrix::from_row_slice(inst.rows, inst.cols, &inst.matrix);
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let diag = r.nrows().min(r.ncols());
    let top = r[(0, 0)].abs();
    let rank = (0..diag).take_while(|&i| r[(i, i)].abs() > RANGE_RANK_TOLERANCE * top).count();
    let tail = r.view((rank, rank), (r.nrows() - rank, r.ncols() - rank)).norm();
    let b = DVector::from_column_slice(&inst.target);
    let qr_t = q.columns(0, rank).transpose();
    let qb = &qr_t * &b;
    let outside = (&b - q.columns(0, rank) * &qb).norm();
    let qa = &qr_t * &a;
    let mut matrix = Vec::with_capacity(rank * inst.cols);
    let mut target = Vec::with_capacity(rank);
    for i in 0..rank {
        let row = qa.row(i);
        let max = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let s = if max > 0.0 { max } else { 1.0 };
        matrix.extend(row.iter().map(|x| x / s));
        target.push(qb[i] / s);
    }
    RangeReduction {
        rank,
        matrix,
        target,
        gap: outside - tail,
    }
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// One weight per column; zero off the support.
    pub weights: Vec<f64>,
    /// Columns with positive weight.
    pub support: Vec<usize>,
    /// `‖Φλ − b‖_∞` on the scaled system.
    pub residual: f64,
    pub phase_one_objective: f64,
    pub pivots: usize,
}

/// Finds a basic feasible solution of `Φλ = b, λ ≥ 0`, or reports infeasibility.
///
/// The instance is declared infeasible when the phase-1 objective exceeds
/// `ε·√rows`. The simplex vertex is then polished by a least-squares solve on
/// its support, which is kept only if it stays positive and lowers the residual.
pub fn solve_feasibility(inst: &LpInstance) -> Result<Feasibility> {
    solve_feasibility_with(inst, &SimplexOptions::default())
}

pub fn solve_feasibility_with(inst: &LpInstance, opts: &SimplexOptions) -> Result<Feasibility> {
    let threshold = inst.epsilon * (inst.rows as f64).sqrt();
    let red = range_reduce(inst);
    if red.gap > threshold {
        return Ok(Feasibility::Infeasible { objective: red.gap });
    }
    let p1 = simplex::phase_one(&red.matrix, red.rank, inst.cols, &red.target, opts)?;
    if p1.objective > threshold {
        return Ok(Feasibility::Infeasible {
            objective: p1.objective,
        });
    }
    let mut weights = p1.x.clone();
    // Degenerate basic variables can carry roundoff of order 1e-16.
    weights.iter_mut().filter(|w| **w < NEGLIGIBLE_WEIGHT).for_each(|w| *w = 0.0);
    let mut support: Vec<usize> = (0..inst.cols).filter(|&j| weights[j] > 0.0).collect();
    let mut residual = inst.residual(&weights);

    if !support.is_empty() {
        let a = inst.columns(&support);
        let b = DVector::from_column_slice(&inst.target);
        if let Ok(sol) = a.svd(true, true).solve(&b, 1e-13) {
            if sol.iter().all(|&v| v > 0.0) {
                let mut polished = vec![0.0; inst.cols];
                for (k, &j) in support.iter().enumerate() {
                    polished[j] = sol[k];
                }
                let r = inst.residual(&polished);
                if r < residual {
                    weights = polished;
                    residual = r;
                }
            }
        }
    }
    support.retain(|&j| weights[j] > 0.0);

    if residual > 2.0 * inst.epsilon {
        return Err(Error::Numerical(format!(
            "phase 1 reached objective {:e} but the recovered vertex has residual {:e}",
            p1.objective, residual
        )));
    }
    Ok(Feasibility::Feasible(LpSolution {
        weights,
        support,
        residual,
        phase_one_objective: p1.objective,
        pivots: p1.pivots,
    }))
}

/// Result of one Monte Carlo construction attempt.
#[derive(Clone, Debug)]
pub enum Construction {
    Success(CubatureFormula),
    Infeasible { objective: f64 },
}

/// Samples `candidates` paths with `cfg`, solves the moment LP against
/// `target` and, when feasible, returns the supported paths as a formula.
pub fn construct(
    cfg: &SamplerConfig,
    basis: &Arc<MultiindexBasis>,
    candidates: usize,
    target: &MomentVector,
) -> Result<Construction> {
    if cfg.d != basis.d() {
        return Err(Error::DimensionMismatch(format!("sampler d={} vs basis d={}", cfg.d, basis.d())));
    }
    let paths = sample_paths(cfg, candidates)?;
    let inst = build_instance(&paths, basis, target)?;
    match solve_feasibility(&inst)? {
        Feasibility::Infeasible { objective } => Ok(Construction::Infeasible { objective }),
        Feasibility::Feasible(sol) => {
            let chosen: Vec<PiecewiseLinearPath> = sol.support.iter().map(|&j| paths[j].clone()).collect();
            let weights: Vec<f64> = sol.support.iter().map(|&j| sol.weights[j]).collect();
            let info = GeneratorInfo {
                scheme: cfg.scheme.to_string(),
                segments: cfg.segments,
                candidates,
                seed: cfg.seed,
            };
            Ok(Construction::Success(CubatureFormula::new(
                basis.d(),
                basis.m(),
                chosen,
                weights,
                Some(info),
            )?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::degree3_formula;
    use crate::moments::{analytic_moments, Provenance};
    use crate::multiindex::Multiindex;
    use crate::sampler::Scheme;
    use crate::signature::path_signature;

    fn basis(d: usize, m: usize) -> Arc<MultiindexBasis> {
        Arc::new(MultiindexBasis::new(d, m).unwrap())
    }

    #[test]
    fn single_column_instance() {
        let b = basis(2, 3);
        let p = PiecewiseLinearPath::linear(vec![1.0, 0.3, -0.2], 1.0).unwrap();
        let inst = build_instance(std::slice::from_ref(&p), &b, &analytic_moments(&b)).unwrap();
        assert_eq!((inst.rows(), inst.cols()), (20, 1));
        let sig = path_signature(&p, &b).unwrap();
        for i in 0..20 {
            assert!((inst.raw(i, 0) - sig[i]).abs() < 1e-15);
        }
        assert!(build_instance(&[], &b, &analytic_moments(&b)).is_err());
    }

    #[test]
    fn empty_word_row_is_ones_and_rows_are_scaled() {
        let b = basis(2, 3);
        let cfg = SamplerConfig::new(2, 2, Scheme::A, 1).unwrap();
        let paths = sample_paths(&cfg, 80).unwrap();
        let inst = build_instance(&paths, &b, &analytic_moments(&b)).unwrap();
        assert_eq!((inst.rows(), inst.cols()), (20, 80));
        assert!((0..80).all(|j| inst.raw(0, j) == 1.0));
        for i in 0..inst.rows() {
            let max = (0..80).map(|j| inst.scaled(i, j).abs()).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn target_equal_to_a_column() {
        let b = basis(2, 3);
        let cfg = SamplerConfig::new(2, 2, Scheme::A, 2).unwrap();
        let paths = sample_paths(&cfg, 10).unwrap();
        let target = MomentVector {
            basis: Arc::clone(&b),
            values: path_signature(&paths[4], &b).unwrap().into_coeffs(),
            provenance: Provenance::Analytic,
            stderr: None,
        };
        let inst = build_instance(&paths, &b, &target).unwrap();
        let Feasibility::Feasible(sol) = solve_feasibility(&inst).unwrap() else {
            panic!("column target must be feasible");
        };
        assert_eq!(sol.support, vec![4]);
        assert!((sol.weights[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degree3_paths_are_feasible() {
        for d in 1..=3 {
            let b = basis(d, 3);
            let f = degree3_formula(d).unwrap();
            let inst = build_instance(&f.paths, &b, &analytic_moments(&b)).unwrap();
            let Feasibility::Feasible(sol) = solve_feasibility(&inst).unwrap() else {
                panic!("degree-3 candidates are feasible");
            };
            assert!(sol.residual <= inst.epsilon);
            assert!(sol.weights.iter().all(|&w| w >= 0.0));
            assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_when_target_is_outside_hull() {
        // All candidates have I^(1,1) = z²/2 ≤ 0.02 < 1/2.
        let b = basis(1, 3);
        let paths: Vec<_> = [-0.2, -0.1, 0.1, 0.2]
            .iter()
            .map(|&z| PiecewiseLinearPath::linear(vec![1.0, z], 1.0).unwrap())
            .collect();
        let inst = build_instance(&paths, &b, &analytic_moments(&b)).unwrap();
        match solve_feasibility(&inst).unwrap() {
            Feasibility::Infeasible { objective } => assert!(objective > 0.1),
            Feasibility::Feasible(_) => panic!("target lies outside the hull"),
        }
    }

    #[test]
    fn constructs_degree3_formula_from_samples() {
        let b = basis(2, 3);
        let target = analytic_moments(&b);
        let mut successes = 0;
        for seed in 0..5 {
            let cfg = SamplerConfig::new(2, 2, Scheme::A, seed).unwrap();
            if let Construction::Success(f) = construct(&cfg, &b, 160, &target).unwrap() {
                successes += 1;
                assert!(f.len() <= b.len());
                assert!(f.residual <= 2.0 * DEFAULT_EPSILON);
                assert!(f.weight_problems().is_empty());
                assert_eq!(f.generator.as_ref().unwrap().candidates, 160);
            }
        }
        assert!(successes >= 4);
    }

    #[test]
    fn feasibility_is_monotone_in_candidates() {
        let b = basis(2, 3);
        let target = analytic_moments(&b);
        for seed in 0..6 {
            let cfg = SamplerConfig::new(2, 2, Scheme::A, 100 + seed).unwrap();
            let all = sample_paths(&cfg, 100).unwrap();
            let small = solve_feasibility(&build_instance(&all[..40], &b, &target).unwrap()).unwrap();
            let large = solve_feasibility(&build_instance(&all, &b, &target).unwrap()).unwrap();
            if small.is_feasible() {
                assert!(large.is_feasible(), "seed {seed}");
            }
        }
    }

    #[test]
    fn scheme_b_construction() {
        let b = basis(1, 3);
        let target = analytic_moments(&b);
        let cfg = SamplerConfig::new(1, 4, Scheme::B, 5).unwrap();
        let got = construct(&cfg, &b, 8 * b.len(), &target).unwrap();
        let Construction::Success(f) = got else { panic!("expected a formula") };
        assert!(f.residual < 2e-9);
        let t = f.basis().unwrap();
        assert!(t.index_of(&Multiindex::from([0])).is_some());
    }

    fn linear_paths(zs: &[f64]) -> Vec<PiecewiseLinearPath> {
        zs.iter().map(|&z| PiecewiseLinearPath::linear(vec![1.0, z], 1.0).unwrap()).collect()
    }

    #[test]
    fn range_gap_is_a_lower_bound() {
        // Straight lines have I^(1,0,1) = I^(0,1,1) = z²/6, while the targets are
        // 0 and 1/4, so the target is off the span of every candidate set.
        let b = basis(1, 4);
        let zs: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let inst = build_instance(&linear_paths(&zs), &b, &analytic_moments(&b)).unwrap();
        let red = range_reduce(&inst);
        assert_eq!(red.rank, 5);
        assert!(red.gap > 0.1);
        let uniform = vec![1.0 / 40.0; 40];
        let mut l2 = 0.0;
        for i in 0..inst.rows() {
            let r: f64 = (0..40).map(|j| inst.scaled(i, j) * uniform[j]).sum::<f64>() - inst.scaled_target()[i];
            l2 += r * r;
        }
        assert!(red.gap <= l2.sqrt());
        assert!(!solve_feasibility(&inst).unwrap().is_feasible());
    }

    #[test]
    fn rank_deficient_feasible_instance() {
        let b = basis(1, 4);
        let zs: Vec<f64> = (0..30).map(|i| -1.5 + 0.1 * i as f64).collect();
        let paths = linear_paths(&zs);
        let sigs: Vec<_> = paths.iter().map(|p| path_signature(p, &b).unwrap()).collect();
        let w = [0.2, 0.5, 0.3];
        let cols = [3, 14, 27];
        let values = (0..b.len()).map(|i| cols.iter().zip(&w).map(|(&j, w)| w * sigs[j][i]).sum()).collect();
        let target = MomentVector {
            basis: Arc::clone(&b),
            values,
            provenance: Provenance::Analytic,
            stderr: None,
        };
        let inst = build_instance(&paths, &b, &target).unwrap();
        assert_eq!(range_reduce(&inst).rank, 5);
        let Feasibility::Feasible(sol) = solve_feasibility(&inst).unwrap() else {
            panic!("a convex combination of columns is feasible");
        };
        assert!(sol.residual <= inst.epsilon);
        assert!(sol.support.len() <= 5);
        assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
