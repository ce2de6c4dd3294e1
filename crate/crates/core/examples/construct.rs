//! Monte Carlo construction of a degree-5 cubature formula for d = 2.

use std::sync::Arc;

use wiener_cubature::lp::{construct, Construction};
use wiener_cubature::moments::analytic_moments;
use wiener_cubature::multiindex::MultiindexBasis;
use wiener_cubature::sampler::{SamplerConfig, Scheme};

fn main() -> wiener_cubature::error::Result<()> {
    let basis = Arc::new(MultiindexBasis::new(2, 5)?);
    let target = analytic_moments(&basis);
    for factor in [2, 8] {
        let n = factor * basis.len();
        let cfg = SamplerConfig::new(2, 2, Scheme::A, 1)?;
        match construct(&cfg, &basis, n, &target)? {
            Construction::Success(f) => {
                println!("N = {n}: {} paths, residual {:.2e}", f.len(), f.residual);
                println!("  largest weights {:?}", &f.weights[..3]);
            }
            Construction::Infeasible { objective } => {
                println!("N = {n}: infeasible (phase-1 objective {objective:.3e})")
            }
        }
    }
    Ok(())
}
