//! Expected signature of Brownian motion: closed form against the dyadic Monte Carlo oracle.

use std::sync::Arc;

use wiener_cubature::moments::{analytic_moments, flag_deviations, mc_moments};
use wiener_cubature::multiindex::MultiindexBasis;

fn main() -> wiener_cubature::error::Result<()> {
    let basis = Arc::new(MultiindexBasis::new(2, 4)?);
    let exact = analytic_moments(&basis);
    let mc = mc_moments(&basis, 5, 20_000, 11)?;
    let se = mc.stderr.as_ref().expect("monte carlo has standard errors");
    println!("{:<12} {:>10} {:>12} {:>10}", "word", "exact", "mc", "stderr");
    for (i, w) in basis.words().iter().enumerate() {
        if exact.values[i] != 0.0 {
            println!("{:<12} {:>10.6} {:>12.6} {:>10.2e}", w.to_string(), exact.values[i], mc.values[i], se[i]);
        }
    }
    let flagged = flag_deviations(&exact, &mc, 4.0);
    println!("{} words beyond 4 standard errors", flagged.len());
    Ok(())
}
