use nextcell::cli::{evaluate, Trained};
use nextcell::split::{split_with_negatives, Part, DEFAULT_RATIOS};
use nextcell::synth::em_reference_graph;
use nextcell::train::TrainConfig;
use nextcell::vgae::train_vgae;

fn main() {
    env_logger::init();
    let seed = 1;
    let g = em_reference_graph(seed);
    let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).unwrap();
    let out = train_vgae(&g, &b, &TrainConfig::vgae().with_seed(seed)).unwrap();
    println!("stopped after {} epochs in {:.2}s, threshold {:.2}", out.epochs_run, out.train_time_s, out.threshold);

    let (epochs, train_s) = (out.epochs_run, out.train_time_s);
    let mut report = evaluate(&Trained::Vgae(out.model), &g, &b, Part::Test, out.threshold).unwrap();
    report.epochs_run = epochs;
    report.train_time_s = train_s;
    println!("{report}");
}
