//! Phase-1 simplex on a dense tableau for `A x = b, x ≥ 0`.
//!
//! One artificial variable per row starts in the basis and the sum of
//! artificials is minimised. Artificial columns are never stored: once an
//! artificial leaves the basis it can not re-enter, and phase 1 never needs
//! `B⁻¹` explicitly.
//!
//! Pricing is Dantzig's most-negative reduced cost. After a long run of
//! degenerate pivots the solver switches to Bland's smallest-index rule for
//! the rest of the solve, which rules out cycling.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tolerance: f64,
    /// Reduced costs above `-cost_tolerance` count as nonnegative.
    pub cost_tolerance: f64,
    /// Cap on pivots, as a multiple of `rows + cols`.
    pub iteration_factor: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tolerance: 1e-11,
            cost_tolerance: 1e-10,
            iteration_factor: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    Structural(usize),
    Artificial(usize),
}

#[derive(Clone, Debug)]
pub struct PhaseOne {
    /// Value of every structural variable at the final vertex.
    pub x: Vec<f64>,
    /// Sum of artificial variables at the final vertex.
    pub objective: f64,
    /// Structural variables in the final basis.
    pub basic: Vec<usize>,
    pub pivots: usize,
    pub used_bland: bool,
}

/// Minimises the artificial sum for `A x = b, x ≥ 0`, with `A` given row-major
/// as `rows × cols`.
pub fn phase_one(a: &[f64], rows: usize, cols: usize, b: &[f64], opts: &SimplexOptions) -> Result<PhaseOne> {
    if a.len() != rows * cols || b.len() != rows {
        return Err(Error::InvalidArgument(format!(
            "tableau is {}x{} but got {} entries and {} right-hand sides",
            rows,
            cols,
            a.len(),
            b.len()
        )));
    }
    let mut t = a.to_vec();
    let mut rhs = b.to_vec();
    for i in 0..rows {
        if rhs[i] < 0.0 {
            rhs[i] = -rhs[i];
            t[i * cols..(i + 1) * cols].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut basis: Vec<Var> = (0..rows).map(Var::Artificial).collect();
    let mut reduced = vec![0.0; cols];
    for i in 0..rows {
        for (r, &x) in reduced.iter_mut().zip(&t[i * cols..(i + 1) * cols]) {
            *r -= x;
        }
    }

    let max_pivots = opts.iteration_factor * (rows + cols);
    let degenerate_limit = rows.max(50);
    let mut degenerate_run = 0usize;
    let mut bland = false;
    let mut pivots = 0usize;
    let mut pivot_row = vec![0.0; cols];

    loop {
        let entering = if bland {
            reduced.iter().position(|&r| r < -opts.cost_tolerance)
        } else {
            let mut best = None;
            let mut best_val = -opts.cost_tolerance;
            for (j, &r) in reduced.iter().enumerate() {
                if r < best_val {
                    best_val = r;
                    best = Some(j);
                }
            }
            best
        };
        let Some(q) = entering else { break };

        // Ratio test; ties prefer artificials leaving, then the smallest index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let piv = t[i * cols + q];
            if piv <= opts.pivot_tolerance {
                continue;
            }
            let ratio = rhs[i] / piv;
            leave = match leave {
                None => Some((i, ratio)),
                Some((p, best)) => {
                    let tie = (ratio - best).abs() <= 1e-14 * best.abs().max(1.0);
                    if ratio < best && !tie {
                        Some((i, ratio))
                    } else if tie && prefer(basis[i], basis[p]) {
                        Some((i, ratio))
                    } else {
                        Some((p, best))
                    }
                }
            };
        }
        let Some((p, theta)) = leave else {
            // A phase-1 objective is bounded below by zero, so an unbounded
            // ray means the entering column lost all positive entries to roundoff.
            return Err(Error::Numerical(format!(
                "no admissible pivot row for entering column {q} (reduced cost {:e})",
                reduced[q]
            )));
        };

        if theta <= 1e-14 {
            degenerate_run += 1;
            if degenerate_run > degenerate_limit {
                bland = true;
            }
        } else {
            degenerate_run = 0;
        }

        let inv = 1.0 / t[p * cols + q];
        for x in t[p * cols..(p + 1) * cols].iter_mut() {
            *x *= inv;
        }
        rhs[p] *= inv;
        t[p * cols + q] = 1.0;
        pivot_row.copy_from_slice(&t[p * cols..(p + 1) * cols]);
        let rp = rhs[p];
        for i in 0..rows {
            if i == p {
                continue;
            }
            let f = t[i * cols + q];
            if f == 0.0 {
                continue;
            }
            for (x, &y) in t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            t[i * cols + q] = 0.0;
            rhs[i] -= f * rp;
            if rhs[i] < 0.0 && rhs[i] > -1e-13 {
                rhs[i] = 0.0;
            }
        }
        let f = reduced[q];
        for (r, &y) in reduced.iter_mut().zip(&pivot_row) {
            *r -= f * y;
        }
        reduced[q] = 0.0;
        basis[p] = Var::Structural(q);

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Numerical(format!("simplex exceeded {max_pivots} pivots")));
        }
    }

    let mut x = vec![0.0; cols];
    let mut objective = 0.0;
    let mut basic = Vec::new();
    for (i, v) in basis.iter().enumerate() {
        match *v {
            Var::Structural(j) => {
                x[j] = rhs[i].max(0.0);
                basic.push(j);
            }
            Var::Artificial(_) => objective += rhs[i].abs(),
        }
    }
    Ok(PhaseOne {
        x,
        objective,
        basic,
        pivots,
        used_bland: bland,
    })
}

fn prefer(candidate: Var, incumbent: Var) -> bool {
    match (candidate, incumbent) {
        (Var::Artificial(_), Var::Structural(_)) => true,
        (Var::Structural(_), Var::Artificial(_)) => false,
        (Var::Artificial(a), Var::Artificial(b)) => a < b,
        (Var::Structural(a), Var::Structural(b)) => a < b,
    }
}
