//! Products, exponentials and logarithms in the truncated tensor algebra.

use std::sync::Arc;

use wiener_cubature::lie::lie_residual;
use wiener_cubature::multiindex::{Multiindex, MultiindexBasis};
use wiener_cubature::tensor::TruncatedTensor;

fn main() -> wiener_cubature::error::Result<()> {
    let basis = Arc::new(MultiindexBasis::new(1, 4)?);
    let z0 = TruncatedTensor::generator(&basis, 0)?;
    let z1 = TruncatedTensor::generator(&basis, 1)?;

    // exp(Z0 + Z0 Z1 - Z1 Z0) is group-like but not a path signature.
    let x = &(&z0 + &(&z0 * &z1)) - &(&z1 * &z0);
    let g = x.exp()?;
    for (w, c) in g.terms().filter(|(_, c)| *c != 0.0) {
        println!("{w:<12} {c}");
    }
    println!("(1,0) -> {}", g.get(&Multiindex::from([1, 0])));
    println!("(1,1,0) -> {}", g.get(&Multiindex::from([1, 1, 0])));

    let back = g.log()?;
    println!("|log(exp(x)) - x| = {:.1e}", back.max_abs_diff(&x));
    println!("Lie residual of log: {:.1e}", lie_residual(&back)?);
    println!("Lie residual of Z0 Z1: {:.3}", lie_residual(&(&z0 * &z1))?);
    Ok(())
}
