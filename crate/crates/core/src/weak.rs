//! Weak approximation of `dX = Σ V_i(X)∘dB^i + V_0(X) dt` by composing a
//! cubature formula over the steps of a partition of `[0, T]`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{Expr, VectorFieldSystem};
use crate::error::{Error, Result};
use crate::formula::CubatureFormula;
use crate::path::PiecewiseLinearPath;

pub const DEFAULT_SUBSTEPS: usize = 16;
pub const DEFAULT_LEAF_BUDGET: u64 = 1_000_000;

/// Times `t_ℓ = T(1 − (1 − ℓ/k)^γ)`, `ℓ = 0..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub horizon: f64,
    pub k: usize,
    pub gamma: f64,
    pub times: Vec<f64>,
}

impl Partition {
    /// Step lengths `s_ℓ = t_ℓ − t_{ℓ−1}`.
    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub fn make_partition(horizon: f64, k: usize, gamma: f64) -> Result<Partition> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("partition needs k >= 1".into()));
    }
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("grading exponent must be >= 1, got {gamma}")));
    }
    let mut times: Vec<f64> = (0..=k)
        .map(|l| horizon * (1.0 - (1.0 - l as f64 / k as f64).powf(gamma)))
        .collect();
    times[0] = 0.0;
    times[k] = horizon;
    Ok(Partition { horizon, k, gamma, times })
}

/// Solves `dx = Σ_i V_i(x) dw^i` along `w` from `x0` with RK4, [`DEFAULT_SUBSTEPS`] per segment.
pub fn ode_flow(sys: &VectorFieldSystem, x0: &[f64], w: &PiecewiseLinearPath) -> Result<Vec<f64>> {
    ode_flow_with(sys, x0, w, DEFAULT_SUBSTEPS)
}

pub fn ode_flow_with(sys: &VectorFieldSystem, x0: &[f64], w: &PiecewiseLinearPath, substeps: usize) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be positive".into()));
    }
    if w.d() != sys.d() {
        return Err(Error::DimensionMismatch(format!("path has d={}, system has d={}", w.d(), sys.d())));
    }
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!("x0 has {} coordinates, N={}", x0.len(), sys.n())));
    }
    let n = sys.n();
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (dt, g) in w.segments() {
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            sys.combined_field(g, &x, &mut k1)?;
            axpy(&x, 0.5 * h, &k1, &mut tmp);
            sys.combined_field(g, &tmp, &mut k2)?;
            axpy(&x, 0.5 * h, &k2, &mut tmp);
            sys.combined_field(g, &tmp, &mut k3)?;
            axpy(&x, h, &k3, &mut tmp);
            sys.combined_field(g, &tmp, &mut k4)?;
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    Ok(x)
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMode {
    /// All `n^k` leaves, sharing ODE solves along common prefixes.
    Exact,
    /// `budget` leaves drawn i.i.d. with probabilities `λ_j` at every level.
    Sampled,
    /// Propagates the mean through averaged affine flow maps. Requires every
    /// vector field and `f` to be affine in `x`; then it equals the exact tree.
    Affine,
}

impl std::str::FromStr for TreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TreeMode::Exact),
            "sampled" => Ok(TreeMode::Sampled),
            "affine" => Ok(TreeMode::Affine),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}; use exact, sampled or affine"))),
        }
    }
}

impl std::fmt::Display for TreeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeMode::Exact => "exact",
            TreeMode::Sampled => "sampled",
            TreeMode::Affine => "affine",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeOptions {
    pub mode: TreeMode,
    /// Leaf budget in exact mode, sample count in sampled mode.
    pub budget: u64,
    pub seed: u64,
    pub substeps: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            mode: TreeMode::Exact,
            budget: DEFAULT_LEAF_BUDGET,
            seed: 0,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeEvaluation {
    /// Approximation of `E[f(X_T)]`.
    pub value: f64,
    /// Leaves at which `f` was evaluated.
    pub leaves: u64,
    /// ODE solves along single scaled paths.
    pub solves: u64,
    pub mode: TreeMode,
    /// Standard error of the mean in sampled mode.
    pub stderr: Option<f64>,
}

/// Scaled formula paths per step of `part`.
fn scaled_paths(formula: &CubatureFormula, part: &Partition) -> Result<Vec<Vec<PiecewiseLinearPath>>> {
    part.steps()
        .iter()
        .map(|&s| formula.paths.iter().map(|p| p.scale_to_horizon(s)).collect())
        .collect()
}

fn eval_payoff(f: &Expr, x: &[f64]) -> Result<f64> {
    let v = f.eval(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain {
            context: format!("f at x={x:?}"),
            value: v,
        })
    }
}

/// Approximates `E[f(X_T(x0))]` by the cubature tree over `part`.
pub fn tree_expectation(
    formula: &CubatureFormula,
    sys: &VectorFieldSystem,
    x0: &[f64],
    f: &Expr,
    part: &Partition,
    opts: &TreeOptions,
) -> Result<TreeEvaluation> {
    if formula.d != sys.d() {
        return Err(Error::DimensionMismatch(format!(
            "formula has d={} but the SDE is driven by d={}",
            formula.d,
            sys.d()
        )));
    }
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!("x0 has {} coordinates, N={}", x0.len(), sys.n())));
    }
    if let Some(k) = f.max_var().filter(|&k| k >= sys.n()) {
        return Err(Error::DimensionMismatch(format!("f references x{} but N={}", k + 1, sys.n())));
    }
    if (formula.horizon - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("formula must live on [0, 1], got {}", formula.horizon)));
    }
    if opts.budget == 0 && opts.mode != TreeMode::Affine {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let levels = scaled_paths(formula, part)?;
    match opts.mode {
        TreeMode::Exact => exact_tree(formula, sys, x0, f, &levels, opts),
        TreeMode::Sampled => sampled_tree(formula, sys, x0, f, &levels, opts),
        TreeMode::Affine => affine_tree(formula, sys, x0, f, &levels, opts),
    }
}

fn exact_tree(
    formula: &CubatureFormula,
    sys: &VectorFieldSystem,
    x0: &[f64],
    f: &Expr,
    levels: &[Vec<PiecewiseLinearPath>],
    opts: &TreeOptions,
) -> Result<TreeEvaluation> {
    let n = formula.len() as f64;
    let k = levels.len() as i32;
    let leaves = n.powi(k);
    if leaves > opts.budget as f64 {
        return Err(Error::BudgetExceeded {
            leaves,
            budget: opts.budget,
        });
    }

    fn descend(
        formula: &CubatureFormula,
        sys: &VectorFieldSystem,
        f: &Expr,
        levels: &[Vec<PiecewiseLinearPath>],
        x: &[f64],
        substeps: usize,
    ) -> Result<(f64, u64)> {
        let Some((here, rest)) = levels.split_first() else {
            return Ok((eval_payoff(f, x)?, 0));
        };
        let mut total = 0.0;
        let mut solves = 0;
        for (path, &w) in here.iter().zip(&formula.weights) {
            let y = ode_flow_with(sys, x, path, substeps)?;
            let (v, s) = descend(formula, sys, f, rest, &y, substeps)?;
            total += w * v;
            solves += 1 + s;
        }
        Ok((total, solves))
    }

    let (first, rest) = levels.split_first().expect("k >= 1");
    let branches = first
        .par_iter()
        .map(|path| {
            let y = ode_flow_with(sys, x0, path, opts.substeps)?;
            let (v, s) = descend(formula, sys, f, rest, &y, opts.substeps)?;
            Ok((v, s + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let value = branches.iter().zip(&formula.weights).map(|((v, _), w)| w * v).sum();
    let solves = branches.iter().map(|(_, s)| s).sum();
    Ok(TreeEvaluation {
        value,
        leaves: leaves as u64,
        solves,
        mode: TreeMode::Exact,
        stderr: None,
    })
}

fn sampled_tree(
    formula: &CubatureFormula,
    sys: &VectorFieldSystem,
    x0: &[f64],
    f: &Expr,
    levels: &[Vec<PiecewiseLinearPath>],
    opts: &TreeOptions,
) -> Result<TreeEvaluation> {
    let pick = WeightedIndex::new(&formula.weights)
        .map_err(|e| Error::InvalidArgument(format!("formula weights: {e}")))?;
    let samples = opts.budget;
    let values = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(s);
            let mut x = x0.to_vec();
            for level in levels {
                x = ode_flow_with(sys, &x, &level[pick.sample(&mut rng)], opts.substeps)?;
            }
            eval_payoff(f, &x)
        })
        .collect::<Result<Vec<f64>>>()?;
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(TreeEvaluation {
        value: mean,
        leaves: samples,
        solves: samples * levels.len() as u64,
        mode: TreeMode::Sampled,
        stderr: Some(stderr),
    })
}

fn affine_tree(
    formula: &CubatureFormula,
    sys: &VectorFieldSystem,
    x0: &[f64],
    f: &Expr,
    levels: &[Vec<PiecewiseLinearPath>],
    opts: &TreeOptions,
) -> Result<TreeEvaluation> {
    let n = sys.n();
    if !sys.is_affine() {
        return Err(Error::InvalidArgument("affine mode needs vector fields that are affine in x".into()));
    }
    let (c, a) = f
        .affine(n)
        .ok_or_else(|| Error::InvalidArgument("affine mode needs f to be affine in x".into()))?;
    let mut origin = vec![0.0; n];
    let mut mean = x0.to_vec();
    let mut solves = 0u64;
    for level in levels {
        // Averaged flow map x ↦ b + J x, from the flows of 0 and of the unit vectors.
        let mut b = vec![0.0; n];
        let mut jac = vec![vec![0.0; n]; n];
        for (path, &w) in level.iter().zip(&formula.weights) {
            origin.iter_mut().for_each(|v| *v = 0.0);
            let phi0 = ode_flow_with(sys, &origin, path, opts.substeps)?;
            for (bi, p) in b.iter_mut().zip(&phi0) {
                *bi += w * p;
            }
            for col in 0..n {
                origin[col] = 1.0;
                let phi = ode_flow_with(sys, &origin, path, opts.substeps)?;
                origin[col] = 0.0;
                for row in 0..n {
                    jac[row][col] += w * (phi[row] - phi0[row]);
                }
            }
            solves += n as u64 + 1;
        }
        mean = (0..n)
            .map(|row| b[row] + jac[row].iter().zip(&mean).map(|(j, x)| j * x).sum::<f64>())
            .collect();
    }
    let value = c + a.iter().zip(&mean).map(|(ai, x)| ai * x).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::Domain {
            context: "affine mean propagation".into(),
            value,
        });
    }
    Ok(TreeEvaluation {
        value,
        leaves: 0,
        solves,
        mode: TreeMode::Affine,
        stderr: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub value: f64,
    pub error: f64,
    pub solves: u64,
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log k`; `None` when some
    /// error is zero.
    pub slope: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    formula: &CubatureFormula,
    sys: &VectorFieldSystem,
    x0: &[f64],
    f: &Expr,
    horizon: f64,
    ks: &[usize],
    gamma: f64,
    reference: f64,
    opts: &TreeOptions,
) -> Result<ConvergenceStudy> {
    if ks.len() < 2 {
        return Err(Error::InvalidArgument(format!("convergence study needs at least 2 k values, got {}", ks.len())));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let part = make_partition(horizon, k, gamma)?;
        let ev = tree_expectation(formula, sys, x0, f, &part, opts)?;
        rows.push(ConvergenceRow {
            k,
            value: ev.value,
            error: (ev.value - reference).abs(),
            solves: ev.solves,
            stderr: ev.stderr,
        });
    }
    let slope = if rows.iter().all(|r| r.error > 0.0) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.k as f64).ln(), r.error.ln())).collect();
        least_squares_slope(&pts)
    } else {
        None
    };
    Ok(ConvergenceStudy { rows, slope })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin_system, parse_scalar, parse_system};
    use crate::formula::degree3_formula;

    fn gbm() -> (VectorFieldSystem, Expr) {
        (builtin_system("gbm").unwrap(), parse_scalar("x1", 1).unwrap())
    }

    #[test]
    fn partitions() {
        assert_eq!(make_partition(1.0, 4, 1.0).unwrap().times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(make_partition(1.0, 2, 3.0).unwrap().times, vec![0.0, 0.875, 1.0]);
        let last = |g: f64| *make_partition(1.0, 8, g).unwrap().steps().last().unwrap();
        assert!(last(1.0) > last(2.0) && last(2.0) > last(4.0));
        let p = make_partition(2.5, 7, 2.2).unwrap();
        assert_eq!((p.times[0], p.times[7]), (0.0, 2.5));
        assert!(p.times.windows(2).all(|w| w[1] > w[0]));
        assert!(make_partition(1.0, 4, 0.5).is_err());
        assert!(make_partition(1.0, 0, 1.0).is_err());
        assert!(make_partition(0.0, 3, 1.0).is_err());
    }

    #[test]
    fn zero_fields_leave_state_fixed() {
        let sys = parse_system("N=2; d=1; V0[1]=0; V0[2]=0; V1[1]=0; V1[2]=0").unwrap();
        let w = PiecewiseLinearPath::new(vec![0.0, 0.3, 1.0], vec![vec![1.0, 2.0], vec![1.0, -4.0]]).unwrap();
        assert_eq!(ode_flow(&sys, &[1.5, -2.0], &w).unwrap(), vec![1.5, -2.0]);
    }

    /// RK4 on `x' = c x` multiplies by the degree-4 Taylor polynomial of `e^{ch}` per substep.
    fn rk4_growth(c: f64, substeps: usize) -> f64 {
        let z = c / substeps as f64;
        (1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0).powi(substeps as i32)
    }

    #[test]
    fn gbm_flow_is_rk4_of_exponential() {
        let (sys, _) = gbm();
        for c in [-1.0, 0.3, 1.0, 2.0] {
            let w = PiecewiseLinearPath::linear(vec![1.0, c], 1.0).unwrap();
            let x = ode_flow(&sys, &[1.7], &w).unwrap()[0];
            assert!((x - 1.7 * rk4_growth(c, 16)).abs() < 1e-13, "c={c}: {x}");
        }
        for c in [-1.0, 0.3, 1.0] {
            let w = PiecewiseLinearPath::linear(vec![1.0, c], 1.0).unwrap();
            let x = ode_flow_with(&sys, &[1.7], &w, 512).unwrap()[0];
            assert!((x - 1.7 * c.exp()).abs() < 1e-10, "c={c}: {x}");
        }
    }

    #[test]
    fn flow_composes_along_concatenation() {
        let sys = parse_system("N=2; d=1; V0[1]=-x2; V0[2]=x1; V1[1]=sin(x2); V1[2]=0.3*x1*x2").unwrap();
        let w = PiecewiseLinearPath::new(vec![0.0, 0.5, 1.0], vec![vec![1.0, 0.8], vec![1.0, -0.4]]).unwrap();
        let v = PiecewiseLinearPath::linear(vec![1.0, 1.1], 0.7).unwrap();
        let x0 = [0.2, 0.9];
        let two = ode_flow(&sys, &ode_flow(&sys, &x0, &w).unwrap(), &v).unwrap();
        let one = ode_flow(&sys, &x0, &w.concat(&v).unwrap()).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn substeps_do_not_matter_for_linear_system() {
        // Cubature paths scaled to one step of a 32-step partition.
        let sys = builtin_system("linear").unwrap();
        let formula = degree3_formula(2).unwrap();
        for p in &formula.paths {
            let w = p.scale_to_horizon(1.0 / 32.0).unwrap();
            let a = ode_flow_with(&sys, &[1.0, 0.5], &w, DEFAULT_SUBSTEPS).unwrap();
            let b = ode_flow_with(&sys, &[1.0, 0.5], &w, 2 * DEFAULT_SUBSTEPS).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-10));
        }
    }

    #[test]
    fn one_step_gbm_gives_cosh() {
        let (sys, f) = gbm();
        let formula = degree3_formula(1).unwrap();
        let part = make_partition(1.0, 1, 1.0).unwrap();
        let ev = tree_expectation(&formula, &sys, &[1.0], &f, &part, &TreeOptions::default()).unwrap();
        let rk4 = 0.5 * (rk4_growth(1.0, 16) + rk4_growth(-1.0, 16));
        assert!((ev.value - rk4).abs() < 1e-14, "{}", ev.value);
        assert_eq!((ev.leaves, ev.solves), (2, 2));
        let fine = TreeOptions {
            substeps: 512,
            ..TreeOptions::default()
        };
        let ev = tree_expectation(&formula, &sys, &[1.0], &f, &part, &fine).unwrap();
        assert!((ev.value - 1f64.cosh()).abs() < 1e-10, "{}", ev.value);
    }

    #[test]
    fn constant_payoff_is_exactly_one() {
        let sys = parse_system("N=1; d=1; V0[1]=0.1*sin(x1); V1[1]=cos(x1)").unwrap();
        let one = parse_scalar("1", 1).unwrap();
        let formula = degree3_formula(1).unwrap();
        let part = make_partition(1.0, 5, 1.0).unwrap();
        let ev = tree_expectation(&formula, &sys, &[0.3], &one, &part, &TreeOptions::default()).unwrap();
        assert!((ev.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_solve_count() {
        let (sys, f) = gbm();
        let formula = degree3_formula(2).unwrap();
        let sys2 = parse_system("N=1; d=2; V0[1]=0; V1[1]=x1; V2[1]=0.5*x1").unwrap();
        for k in 1..=5u32 {
            let part = make_partition(1.0, k as usize, 1.0).unwrap();
            let ev = tree_expectation(&formula, &sys2, &[1.0], &f, &part, &TreeOptions::default()).unwrap();
            let n = 4u64;
            assert_eq!(ev.leaves, n.pow(k));
            assert_eq!(ev.solves, (n.pow(k + 1) - 1) / (n - 1) - 1);
        }
        let part = make_partition(1.0, 3, 1.0).unwrap();
        assert!(tree_expectation(&formula, &sys, &[1.0], &f, &part, &TreeOptions::default()).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let (sys, f) = gbm();
        let formula = degree3_formula(1).unwrap();
        let part = make_partition(1.0, 12, 1.0).unwrap();
        let opts = TreeOptions {
            budget: 1000,
            ..TreeOptions::default()
        };
        match tree_expectation(&formula, &sys, &[1.0], &f, &part, &opts).unwrap_err() {
            Error::BudgetExceeded { leaves, budget } => assert_eq!((leaves, budget), (4096.0, 1000)),
            other => panic!("{other}"),
        }
        let zero = TreeOptions { budget: 0, ..opts };
        assert!(tree_expectation(&formula, &sys, &[1.0], &f, &part, &zero).is_err());
    }

    #[test]
    fn sampled_agrees_with_exact() {
        let sys = parse_system("N=1; d=1; V0[1]=-0.5*x1; V1[1]=1 + 0.2*sin(x1)").unwrap();
        let f = parse_scalar("x1^2", 1).unwrap();
        let formula = degree3_formula(1).unwrap();
        let part = make_partition(1.0, 6, 1.0).unwrap();
        let exact = tree_expectation(&formula, &sys, &[0.4], &f, &part, &TreeOptions::default()).unwrap();
        let opts = TreeOptions {
            mode: TreeMode::Sampled,
            budget: 20_000,
            seed: 7,
            ..TreeOptions::default()
        };
        let sampled = tree_expectation(&formula, &sys, &[0.4], &f, &part, &opts).unwrap();
        let se = sampled.stderr.unwrap();
        assert!((sampled.value - exact.value).abs() < 4.0 * se, "{} vs {} ± {se}", sampled.value, exact.value);
        let again = tree_expectation(&formula, &sys, &[0.4], &f, &part, &opts).unwrap();
        assert_eq!(again, sampled);
    }

    #[test]
    fn affine_mode_matches_exact_tree() {
        let formula = degree3_formula(2).unwrap();
        let sys = builtin_system("linear").unwrap();
        let f = parse_scalar("2*x1 - x2 + 0.5", 2).unwrap();
        let part = make_partition(1.0, 4, 2.0).unwrap();
        let exact = tree_expectation(&formula, &sys, &[1.0, -0.5], &f, &part, &TreeOptions::default()).unwrap();
        let opts = TreeOptions {
            mode: TreeMode::Affine,
            ..TreeOptions::default()
        };
        let affine = tree_expectation(&formula, &sys, &[1.0, -0.5], &f, &part, &opts).unwrap();
        assert!((exact.value - affine.value).abs() < 1e-12, "{} vs {}", exact.value, affine.value);

        let nonlinear = parse_scalar("x1^2", 2).unwrap();
        assert!(tree_expectation(&formula, &sys, &[1.0, -0.5], &nonlinear, &part, &opts).is_err());
    }

    #[test]
    fn gbm_tree_is_product_of_cosh() {
        // Each step multiplies the mean by cosh(√s).
        let (sys, f) = gbm();
        let formula = degree3_formula(1).unwrap();
        let part = make_partition(1.0, 6, 3.0).unwrap();
        let expected: f64 = part.steps().iter().map(|s| s.sqrt().cosh()).product();
        let opts = TreeOptions {
            substeps: 256,
            ..TreeOptions::default()
        };
        let ev = tree_expectation(&formula, &sys, &[1.0], &f, &part, &opts).unwrap();
        assert!((ev.value - expected).abs() < 1e-10);
    }

    #[test]
    fn scaling_consistency() {
        let sys = parse_system("N=1; d=1; V0[1]=0.2*x1; V1[1]=sin(x1)").unwrap();
        let f = parse_scalar("x1", 1).unwrap();
        let formula = degree3_formula(1).unwrap();
        let t = 0.6;
        let part = make_partition(t, 1, 1.0).unwrap();
        let ev = tree_expectation(&formula, &sys, &[0.5], &f, &part, &TreeOptions::default()).unwrap();
        let direct: f64 = formula
            .paths
            .iter()
            .zip(&formula.weights)
            .map(|(p, w)| w * ode_flow(&sys, &[0.5], &p.scale_to_horizon(t).unwrap()).unwrap()[0])
            .sum();
        assert_eq!(ev.value, direct);
    }

    #[test]
    fn study_errors_and_slope() {
        let (sys, f) = gbm();
        let formula = degree3_formula(1).unwrap();
        let opts = TreeOptions::default();
        let study = convergence_study(&formula, &sys, &[1.0], &f, 1.0, &[2, 4, 8], 1.0, 0.5f64.exp(), &opts).unwrap();
        assert!(study.rows.windows(2).all(|w| w[1].error < w[0].error));
        let slope = study.slope.unwrap();
        assert!((slope + 1.0).abs() < 0.1, "{slope}");

        let one = parse_scalar("1", 1).unwrap();
        let flat = convergence_study(&formula, &sys, &[1.0], &one, 1.0, &[1, 2], 1.0, 1.0, &opts).unwrap();
        assert!(flat.rows.iter().all(|r| r.error == 0.0));
        assert_eq!(flat.slope, None);

        assert!(convergence_study(&formula, &sys, &[1.0], &f, 1.0, &[4], 1.0, 1.0, &opts).is_err());
    }
}
