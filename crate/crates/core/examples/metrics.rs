use nextcell::metrics::{auc, average_precision, default_grid, thresholded_metrics, tune_threshold, Objective};

fn main() {
    let scores = [0.95, 0.9, 0.8, 0.72, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, true, false, true, true, false, false, true, false, false];

    println!("auc {:.3}", auc(&scores, &labels).unwrap());
    println!("ap  {:.3}", average_precision(&scores, &labels).unwrap());
    for objective in [Objective::F1, Objective::Mcc] {
        let t = tune_threshold(&scores, &labels, &default_grid(), objective).unwrap();
        let m = thresholded_metrics(&scores, &labels, t).unwrap();
        println!("{objective}: t={t:.2} precision {:.3} recall {:.3} f1 {:.3} mcc {:.3}", m.precision, m.recall, m.f1, m.mcc);
    }
}
