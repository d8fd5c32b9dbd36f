use nextcell::ingest::{extract_subset, parse_tables, rw_like_tables, write_tables, RwShape, SubsetSpec};

fn main() {
    // Synthetic tables shaped like the real-world export.
    let g = rw_like_tables(RwShape::desk(40, 1500), 7).into_graph().unwrap();
    println!("full:   {} cells, {} ues, {} edges", g.n_cell(), g.n_ue(), g.n_edges());

    let sub = extract_subset(&g, SubsetSpec { n_cells: 10, n_ues: 300, selection_seed: 3 }).unwrap();
    println!("subset: {} cells, {} ues, {} edges", sub.n_cell(), sub.n_ue(), sub.n_edges());

    let (mut nodes, mut edges) = (Vec::new(), Vec::new());
    write_tables(&sub, &mut nodes, &mut edges).unwrap();
    let back = parse_tables(&nodes[..], &edges[..], ("nodes.csv", "edges.csv")).unwrap().into_graph().unwrap();
    assert_eq!(back.n_edges(), sub.n_edges());
    println!("roundtrip through csv ok ({} + {} bytes)", nodes.len(), edges.len());
}
