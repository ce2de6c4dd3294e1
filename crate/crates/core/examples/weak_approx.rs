//! Weak approximation of geometric Brownian motion: E[X_1] = e^{1/2} for dX = X∘dB, X_0 = 1.

use wiener_cubature::dsl::{builtin_system, parse_scalar};
use wiener_cubature::formula::degree3_formula;
use wiener_cubature::weak::{convergence_study, make_partition, tree_expectation, TreeMode, TreeOptions};

fn main() -> wiener_cubature::error::Result<()> {
    let sys = builtin_system("gbm")?;
    let f = parse_scalar("x1", 1)?;
    let formula = degree3_formula(1)?;
    let reference = 0.5f64.exp();

    let one_step = tree_expectation(&formula, &sys, &[1.0], &f, &make_partition(1.0, 1, 1.0)?, &TreeOptions::default())?;
    println!("k=1: {:.6} (cosh 1 = {:.6})", one_step.value, 1f64.cosh());

    let exact = convergence_study(&formula, &sys, &[1.0], &f, 1.0, &[2, 4, 8, 16], 3.0, reference, &TreeOptions::default())?;
    let affine = TreeOptions {
        mode: TreeMode::Affine,
        ..TreeOptions::default()
    };
    let long = convergence_study(&formula, &sys, &[1.0], &f, 1.0, &[2, 4, 8, 16, 32, 64], 3.0, reference, &affine)?;
    println!("{:>4} {:>14} {:>14}", "k", "exact tree", "affine");
    for (i, row) in long.rows.iter().enumerate() {
        let e = exact.rows.get(i).map_or("-".into(), |r| format!("{:.4e}", r.error));
        println!("{:>4} {e:>14} {:>14.4e}", row.k, row.error);
    }
    println!("slope {:.3}", long.slope.unwrap_or(f64::NAN));
    Ok(())
}
