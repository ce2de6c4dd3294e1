//! Define vector fields from text and evaluate them.

use wiener_cubature::dsl::{builtin_system, parse_scalar, parse_system};

fn main() -> wiener_cubature::error::Result<()> {
    let sys = parse_system(
        "# damped pendulum driven by one noise
         N=2; d=1
         V0[1] = x2
         V0[2] = -sin(x1) - 0.1*x2
         V1[1] = 0
         V1[2] = 0.3*cos(x1)",
    )?;
    print!("{sys}");
    println!("V0(0.5, 1) = {:?}", sys.evaluate_field(0, &[0.5, 1.0])?);
    println!("affine: {}", sys.is_affine());

    println!("2^3^2 = {}", parse_scalar("2^3^2", 1)?.eval(&[0.0]));
    match parse_system("N=1; d=1; V0[1]=0; V1[1] = sin(x1)*x2") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    for name in ["gbm", "linear", "ou"] {
        let s = builtin_system(name)?;
        println!("{name}: N={} d={}", s.n(), s.d());
    }
    Ok(())
}
