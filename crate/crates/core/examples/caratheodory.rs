//! Shrink a feasible weighting to an independent support without changing its moments.

use std::sync::Arc;

use wiener_cubature::formula::degree3_formula;
use wiener_cubature::lp::caratheodory_reduce;
use wiener_cubature::moments::analytic_moments;
use wiener_cubature::multiindex::MultiindexBasis;

fn main() -> wiener_cubature::error::Result<()> {
    let f = degree3_formula(4)?;
    let basis = Arc::new(MultiindexBasis::new(4, 3)?);
    let target = analytic_moments(&basis);
    let r = caratheodory_reduce(&f.paths, &f.weights, &basis, &target)?;
    println!("{} paths -> {} paths (|A(3)| = {})", f.len(), r.paths.len(), basis.len());
    println!("residual trace: {:?}", r.residual_trace.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>());
    println!("weights sum to {}", r.weights.iter().sum::<f64>());
    Ok(())
}
