//! Trains on the first 70% of a trace and replays the remaining handovers.
use nextcell::replay::{baseline_next_cell, replay, EmbeddingScorer, OracleScorer, ReplayConfig};
use nextcell::split::{split_with_negatives, DEFAULT_RATIOS};
use nextcell::synth::{generate_scenario, ground_truth_next_cell, trace_to_graph, ScenarioConfig};
use nextcell::train::TrainConfig;
use nextcell::vgae::train_vgae;

fn main() {
    let seed = 3;
    let cfg = ScenarioConfig::em(seed);
    let trace = generate_scenario(&cfg).unwrap();
    let cut = 0.7 * cfg.duration_s;
    let g = trace_to_graph(&trace.split_at_time(cut).0).unwrap();
    let (history, events): (Vec<_>, Vec<_>) = ground_truth_next_cell(&trace).into_iter().partition(|e| e.t < cut);

    let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).unwrap();
    let out = train_vgae(&g, &b, &TrainConfig::vgae().with_seed(seed)).unwrap();
    let rc = ReplayConfig { threshold: out.threshold, ..Default::default() };

    let model = replay(&trace, &events, &EmbeddingScorer::vgae(&out.model, &g).unwrap(), &rc).unwrap();
    let oracle = replay(&trace, &events, &OracleScorer, &rc).unwrap();
    println!("vgae     {model}");
    println!("oracle   {oracle}");
    println!("majority accuracy={:.3}", baseline_next_cell(&history, &events).unwrap_or(f64::NAN));
    model.write_event_log(std::io::stdout().lock()).unwrap();
}
