//! Compares tape gradients against central differences for a GCN layer on the reference graph.
use std::rc::Rc;

use nextcell::graph::normalized_adjacency;
use nextcell::nn::{gcn_layer, grad_check, Tensor};
use nextcell::synth::em_reference_graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn main() {
    let g = em_reference_graph(1);
    let a_hat = Rc::new(normalized_adjacency(&g));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(g.n_nodes(), 4, &mut rng);
    let w = random(4, 3, &mut rng);

    let worst = grad_check(
        |_, v| {
            let h = gcn_layer(v[0], &a_hat, v[1])?;
            h.mul(h)?.sum()
        },
        &[x, w],
        1e-5,
    )
    .unwrap();
    println!("{} parameters, max relative error {worst:.2e}", g.n_nodes() * 4 + 12);
    assert!(worst < 1e-4);
}
