//! Enumerate the graded word basis A(m) and show its structure.

use wiener_cubature::multiindex::{basis_size, shuffles, Multiindex, MultiindexBasis};

fn main() -> wiener_cubature::error::Result<()> {
    let basis = MultiindexBasis::new(2, 3)?;
    println!("|A(3)| for d=2: {} words", basis.len());
    for (i, w) in basis.words().iter().enumerate() {
        println!("  {:>2}  {:<10} degree {}", i, w.to_string(), basis.degree(i));
    }

    for (d, m) in [(2, 5), (3, 5), (2, 7)] {
        println!("|A({m})| for d={d}: {}", basis_size(d, m));
    }

    let a: Multiindex = "(1,0)".parse()?;
    let b: Multiindex = "(2)".parse()?;
    let words: Vec<String> = shuffles(&a, &b)?.iter().map(ToString::to_string).collect();
    println!("{a} shuffle {b} = {}", words.join(" + "));
    Ok(())
}
