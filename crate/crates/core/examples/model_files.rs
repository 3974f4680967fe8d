//! Building a model in code, writing it as JSON and reading results back.

use bffg::{run_bffg_exact, Edge, Kernel, ModelFile, Node, NodeRole, Point, ResultFile, Space, TreeModel};

fn main() -> bffg::Result<()> {
    let node = |id: &str, n, role| Node {
        id: id.into(),
        space: Space::Finite(n),
        role,
    };
    let edge = |from: &str, to: &str, rows| -> bffg::Result<Edge> {
        Ok(Edge {
            from: from.into(),
            to: to.into(),
            forward: Kernel::discrete(rows)?,
            backward: None,
        })
    };
    let model = TreeModel::new(
        vec![
            node("r", 2, NodeRole::Root),
            node("x", 2, NodeRole::Latent),
            node("y", 2, NodeRole::Leaf),
        ],
        vec![
            edge("r", "x", vec![vec![0.9, 0.1], vec![0.3, 0.7]])?,
            edge("x", "y", vec![vec![0.8, 0.2], vec![0.1, 0.9]])?,
        ],
        Point::Index(0),
        vec![("y".into(), Point::Index(1))],
    )?;

    let text = ModelFile::from_tree(&model)?.to_json_pretty();
    println!("{text}");
    let reread = ModelFile::parse(&text)?.to_tree()?;
    assert_eq!(reread, model);

    let exact = run_bffg_exact(&model)?;
    let result = ResultFile::from_exact(&model, &exact, 0.0)?;
    let back = ResultFile::parse(&result.to_json_pretty())?;
    println!("x | y=1: {:?}", back.marginals.unwrap()[0].probabilities);
    Ok(())
}
