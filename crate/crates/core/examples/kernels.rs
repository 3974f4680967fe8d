//! Composition, tensor products, pushforward and pullback.

use bffg::{compose_kernels, pullback, pushforward, tensor_kernels, FiniteMeasure, HPotential, Kernel, Point};
use nalgebra::DMatrix;

fn main() -> bffg::Result<()> {
    let k1 = Kernel::discrete(vec![vec![0.9, 0.1], vec![0.2, 0.8]])?;
    let k2 = Kernel::discrete(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.1, 0.8]])?;

    let k12 = compose_kernels(&k1, &k2)?;
    println!("k1 k2 = {}", k12.matrix().unwrap());

    let both = tensor_kernels(&k1, &k1);
    println!("k1 (x) k1 is {} -> {}", both.source(), both.target());

    let mu = FiniteMeasure::discrete(vec![0.25, 0.75])?;
    println!(
        "mu k1 k2 = {:?}",
        pushforward(&k12, &mu)?.to_table(k12.target())?.as_slice()
    );

    let h = HPotential::discrete(vec![1.0, 0.0, 2.0])?;
    let pulled = pullback(&k12, &h)?;
    for x in 0..2 {
        println!("(k1 k2 h)({x}) = {:.6}", pulled.evaluate(&Point::Index(x))?);
    }

    // y | x ~ N(0.8 x + 0.1, 0.5); pull back exp(-y^2 / 2)
    let lg = Kernel::linear_gaussian_1d(0.8, 0.1, 0.5)?;
    let g = HPotential::gaussian(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0))?;
    let pg = pullback(&lg, &g)?;
    println!("(k g)(1.0) = {:.6}", pg.evaluate(&Point::real(&[1.0]))?);

    let two_steps = compose_kernels(&lg, &lg)?;
    let lg2 = two_steps.as_linear_gaussian().unwrap();
    println!(
        "two steps: B = {:.3}, beta = {:.3}, Q = {:.3}",
        lg2.b()[(0, 0)],
        lg2.beta()[0],
        lg2.q()[(0, 0)]
    );
    Ok(())
}
