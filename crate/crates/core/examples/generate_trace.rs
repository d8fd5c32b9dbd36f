//! Simulates the emulated-network scenario and builds its UE/cell graph.
use nextcell::graph::density;
use nextcell::synth::{generate_scenario, ground_truth_next_cell, trace_to_graph, ScenarioConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let trace = generate_scenario(&ScenarioConfig::em(seed)).expect("scenario");
    let g = trace_to_graph(&trace).expect("graph");
    let events = ground_truth_next_cell(&trace);

    println!("samples   {}", trace.len());
    println!("ues       {}", g.n_ue());
    println!("cells     {}", g.n_cell());
    println!("edges     {}", g.n_edges());
    println!("density   {:.4}", density(&g).unwrap());
    println!("handovers {}", events.len());
    for e in events.iter().take(5) {
        println!("  t={:.1} ue {} : cell {} -> {}", e.t, e.ue, e.from_cell, e.to_cell);
    }
}
