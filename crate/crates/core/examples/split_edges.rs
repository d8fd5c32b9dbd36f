use nextcell::split::{check_hygiene, split_with_negatives, Part, DEFAULT_RATIOS};
use nextcell::synth::em_reference_graph;

fn main() {
    let g = em_reference_graph(1);
    let b = split_with_negatives(&g, DEFAULT_RATIOS, 42).unwrap();
    for part in [Part::Train, Part::Val, Part::Test] {
        println!("{:<5} pos {:>3} neg {:>3}", part.name(), b.pos(part).len(), b.neg(part).len());
    }
    match check_hygiene(&g, &b) {
        Ok(()) => println!("no leakage between parts"),
        Err(e) => println!("hygiene violation: {e}"),
    }
}
