use nextcell::cli::{evaluate, Trained};
use nextcell::seal::{check_cost, train_seal, DEFAULT_COST_LIMIT};
use nextcell::split::{split_with_negatives, Part, DEFAULT_RATIOS};
use nextcell::synth::em_reference_graph;
use nextcell::train::TrainConfig;

fn main() {
    env_logger::init();
    let seed = 1;
    let g = em_reference_graph(seed);
    let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).unwrap();
    let cfg = TrainConfig::seal().with_seed(seed);
    let cost = check_cost(&g, &b, &cfg, DEFAULT_COST_LIMIT).unwrap();
    println!("estimated subgraph nodes {cost:.0} (limit {DEFAULT_COST_LIMIT:.0})");

    let out = train_seal(&g, &b, &cfg).unwrap();
    println!("stopped after {} epochs in {:.2}s", out.epochs_run, out.train_time_s);
    let (epochs, train_s) = (out.epochs_run, out.train_time_s);
    let mut report = evaluate(&Trained::Seal(out.model), &g, &b, Part::Test, out.threshold).unwrap();
    report.epochs_run = epochs;
    report.train_time_s = train_s;
    println!("{report}");
}
