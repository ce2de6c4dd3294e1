//! Truncated signature of a piecewise-linear path, checked against brute force and Chen's identity.

use std::sync::Arc;

use wiener_cubature::multiindex::MultiindexBasis;
use wiener_cubature::path::PiecewiseLinearPath;
use wiener_cubature::signature::{path_signature, signature_bruteforce};

fn main() -> wiener_cubature::error::Result<()> {
    let basis = Arc::new(MultiindexBasis::new(2, 4)?);
    let w = PiecewiseLinearPath::new(
        vec![0.0, 0.25, 0.6, 1.0],
        vec![vec![1.0, 2.0, -1.0], vec![1.0, -0.5, 1.5], vec![1.0, 0.3, 0.3]],
    )?;
    let sig = path_signature(&w, &basis)?;
    let brute = signature_bruteforce(&w, &basis)?;
    println!("endpoint {:?}", w.endpoint());
    println!("DP vs brute force: {:.1e}", sig.max_abs_diff(&brute));

    let v = PiecewiseLinearPath::linear(vec![1.0, -1.0, 0.5], 0.5)?;
    let chen = &sig * &path_signature(&v, &basis)?;
    let joined = path_signature(&w.concat(&v)?, &basis)?;
    println!("Chen identity mismatch: {:.1e}", joined.max_abs_diff(&chen));

    for (word, c) in sig.terms().take(10) {
        println!("  {word:<10} {c:+.6}");
    }
    Ok(())
}
