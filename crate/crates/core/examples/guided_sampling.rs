//! Weighted guided sampling with an approximate backward pass.

use std::path::Path;

use bffg::{read_model, run_bffg_exact, run_bffg_sampling, NodeEstimate};

fn main() -> bffg::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models/hmm_chain.json");
    let model = read_model(&path)?;
    let exact = run_bffg_exact(&model)?;
    let sampled = run_bffg_sampling(&model, 20_000, 42)?;

    println!(
        "ESS {:.1} of {}",
        sampled.effective_sample_size,
        sampled.trajectories.len()
    );
    for ((id, est), (_, m)) in sampled.estimates.iter().zip(&exact.marginals) {
        let truth = m.to_table(&model.node(id).unwrap().space)?;
        if let NodeEstimate::Probabilities { p, se } = est {
            let z: Vec<f64> = p
                .iter()
                .zip(se)
                .zip(truth.iter())
                .map(|((p, s), t)| (p - t) / s)
                .collect();
            println!("{id}: {p:.4?}  z-scores {z:.2?}");
        }
    }
    println!("evidence {:.6e} (exact {:.6e})", sampled.evidence, exact.evidence);

    // with the true kernels on the backward pass every weight is one
    let exact_model = model.with_exact_backward();
    let s = run_bffg_sampling(&exact_model, 1000, 42)?;
    let spread = s
        .trajectories
        .iter()
        .map(|t| (t.weight.value() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("exact guiding: max |w - 1| = {spread:.1e}");
    Ok(())
}
