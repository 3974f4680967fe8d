//! Linear-Gaussian chain: exact smoothing against a Kalman/RTS smoother.

use std::path::Path;

use bffg::oracle::rts_smoother;
use bffg::{read_model, run_bffg_exact, KernelFamily, LinearGaussian};

fn main() -> bffg::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models/kalman_chain.json");
    let model = read_model(&path)?;
    let exact = run_bffg_exact(&model)?;

    let lg = |id: &str| -> LinearGaussian {
        let e = model.edges().iter().find(|e| e.to == id).unwrap();
        match e.forward.family() {
            KernelFamily::LinearGaussian(lg) => lg.clone(),
            _ => unreachable!(),
        }
    };
    let n = model.latent_ids().len();
    let transitions: Vec<_> = (1..=n).map(|i| lg(&format!("x{i}"))).collect();
    let observations: Vec<_> = (1..=n)
        .map(|i| {
            let y = format!("y{i}");
            Some((lg(&y), model.observations()[&y].as_real().unwrap().clone()))
        })
        .collect();
    let root = model.root_value().as_real().unwrap().clone();
    let rts = rts_smoother(&transitions, &observations, &root)?;

    for (i, (id, m)) in exact.marginals.iter().enumerate() {
        let g = m.to_gaussian(&model.node(id).unwrap().space)?;
        let gap = (g.mean() - &rts[i].mean).amax().max((g.cov() - &rts[i].cov).amax());
        println!(
            "{id}: mean [{:8.4} {:8.4}]  (RTS gap {gap:.1e})",
            g.mean()[0],
            g.mean()[1]
        );
    }
    println!("log evidence {:.8}", exact.log_evidence);
    Ok(())
}
