//! Backward and forward maps of a single optic, and both equivalence checks.

use bffg::{
    backward_map, check_parallel_equivalence, check_sequential_equivalence, forward_map, weight, FiniteMeasure,
    HPotential, Kernel, Optic,
};

fn main() -> bffg::Result<()> {
    let k = Kernel::discrete(vec![vec![0.7, 0.3], vec![0.4, 0.6]])?;
    let approx = Kernel::discrete(vec![vec![0.5, 0.5], vec![0.5, 0.5]])?;
    let g = HPotential::discrete(vec![0.2, 1.0])?;
    let mu = FiniteMeasure::discrete(vec![0.5, 0.5])?;

    let o = Optic::new(k.clone(), approx.clone())?;
    let (m, pulled) = backward_map(&o, &g)?;
    println!("approximate pullback: {:?}", pulled.to_table(o.source())?.as_slice());
    println!(
        "forward map: {:?}",
        forward_map(&o, &m, &mu)?.to_table(o.target())?.as_slice()
    );
    println!("weight: {:.6}", weight(&o, &m, &mu)?);

    let exact = Optic::exact(k.clone());
    let (m, _) = backward_map(&exact, &g)?;
    println!(
        "exact forward map mass: {:.15}",
        forward_map(&exact, &m, &mu)?.total_mass()
    );

    let k2 = Kernel::discrete(vec![vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]])?;
    let approx2 = Kernel::discrete(vec![vec![0.2, 0.4, 0.4], vec![0.4, 0.2, 0.4]])?;
    let h = HPotential::discrete(vec![1.0, 0.5, 0.1])?;
    let seq = check_sequential_equivalence(&k, &approx, &k2, &approx2, &h, &mu)?;
    println!(
        "sequential: deviation {:e}, message error {:e}",
        seq.max_abs_deviation, seq.message_error
    );

    let par = check_parallel_equivalence(&k, &approx, &k2, &approx2, &g, &h, &mu, &mu)?;
    println!(
        "parallel: deviation {:e}, message error {:e}",
        par.max_abs_deviation, par.message_error
    );
    Ok(())
}
