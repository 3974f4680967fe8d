//! A tree with one branching node: compiled program and exact marginals.

use std::path::Path;

use bffg::oracle::brute_force_smoother;
use bffg::{compile_tree, read_model, run_bffg_exact, OpticProgram};

fn shape(p: &OpticProgram) -> String {
    match p {
        OpticProgram::Prim(o) => format!("O({} -> {})", o.source(), o.target()),
        OpticProgram::Id(s) => format!("Id({s})"),
        OpticProgram::Seq(ps) => ps.iter().map(shape).collect::<Vec<_>>().join(" ; "),
        OpticProgram::Par(ps) => format!("[{}]", ps.iter().map(shape).collect::<Vec<_>>().join(" | ")),
    }
}

fn main() -> bffg::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models/two_leaf_tree.json");
    let model = read_model(&path)?;

    let compiled = compile_tree(&model)?;
    println!("{}", shape(&compiled.program));
    println!(
        "{} edge optics, {} duplications",
        compiled.edge_optics, compiled.duplications
    );

    let exact = run_bffg_exact(&model)?;
    let brute = brute_force_smoother(&model)?;
    for (id, m) in &exact.marginals {
        let p = m.to_table(&model.node(id).unwrap().space)?;
        println!("{id}: {:.6?} / {:.6?}", p.as_slice(), brute.marginals[id]);
    }
    println!("evidence {:.12} / {:.12}", exact.evidence, brute.evidence);
    Ok(())
}
