use nextcell::cli::{linear_fit, scaling_bench};

fn main() {
    let rows = scaling_bench(&[1.0, 2.0, 4.0], &[1, 2], 20, 2).unwrap();
    for r in &rows {
        println!("factor {:>3} seed {} nodes {:>4} edges {:>5} {:.3}s", r.factor, r.seed, r.n_nodes, r.n_edges, r.train_s);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n_edges as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.train_s).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    println!("train_s = {:.3e} * edges + {:.3e}  (r2 {:.3})", fit.slope, fit.intercept, fit.r2);
}
