//! Exact smoothing of a hidden Markov chain, checked against enumeration.

use std::path::Path;

use bffg::oracle::brute_force_smoother;
use bffg::{read_model, run_bffg_exact};

fn main() -> bffg::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models/hmm_chain.json");
    let model = read_model(&path)?;
    let exact = run_bffg_exact(&model)?;
    let brute = brute_force_smoother(&model)?;

    for (id, m) in &exact.marginals {
        let p = m.to_table(&model.node(id).unwrap().space)?;
        let q = &brute.marginals[id];
        let gap = p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{id}: {:.4?}  (enumeration gap {gap:.1e})", p.as_slice());
    }
    println!("evidence {:.10e} vs {:.10e}", exact.evidence, brute.evidence);
    Ok(())
}
