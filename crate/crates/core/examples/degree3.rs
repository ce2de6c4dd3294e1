//! The explicit degree-3 formula: 2^d straight lines with equal weights.

use wiener_cubature::formula::degree3_formula;

fn main() -> wiener_cubature::error::Result<()> {
    for d in 1..=4 {
        let f = degree3_formula(d)?;
        let r = f.moment_residuals()?;
        println!("d={d}: {} paths, residual per degree {:?}", f.len(), r.per_degree);
    }
    let f = degree3_formula(2)?;
    println!("{}", f.to_json()?);
    Ok(())
}
