//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the summary is always printed; exits nonzero on any failure.

use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nextcell::cli::{linear_fit, scaling_bench};
use nextcell::graph::{density, homogenize, normalized_adjacency, AttributedGraph, RawEdge, RawNode};
use nextcell::ingest::{rw_like_tables, write_tables, RwShape};
use nextcell::metrics::{auc, average_precision, thresholded_metrics, timing, EvalReport};
use nextcell::nn::{gat_layer, gcn_layer, grad_check, Tensor};
use nextcell::replay::{baseline_next_cell, replay, EmbeddingScorer, ReplayConfig};
use nextcell::seal::{enclose, seal_loss, train_seal, Batch, EnclosingSubgraph, Seal, SealContext, SealDims, SealVars};
use nextcell::split::{check_hygiene, split_with_negatives, Part, SplitBundle, DEFAULT_RATIOS};
use nextcell::synth::{em_reference_graph, generate_scenario, ground_truth_next_cell, trace_to_graph, ScenarioConfig};
use nextcell::train::{GraphInput, TrainConfig};
use nextcell::vgae::{standard_noise, train_vgae, vgae_loss, Vgae, VgaeDims, VgaeVars};

type Outcome = Result<String, String>;

/// Central-difference step near the cube root of machine epsilon.
const STEP: f64 = 1e-5;
const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

fn em_graph(seed: u64) -> AttributedGraph {
    trace_to_graph(&generate_scenario(&ScenarioConfig::em(seed)).unwrap()).unwrap()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn split_hygiene() -> Outcome {
    let start = Instant::now();
    let g = em_graph(1);
    let mut violations = Vec::new();
    for seed in 0..100 {
        let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).map_err(|e| e.to_string())?;
        if let Err(e) = check_hygiene(&g, &b) {
            violations.push(format!("seed {seed}: {e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        violations.is_empty() && secs < 10.0,
        format!("100 splits, {} violations {:?}, {secs:.2} s", violations.len(), violations.first()),
    )
}

fn toy_graph() -> AttributedGraph {
    let ues: Vec<RawNode> = (0..4).map(|i| RawNode { id: i, features: vec![0.2 + 0.1 * i as f64, 0.7] }).collect();
    let cells: Vec<RawNode> = (0..3).map(|i| RawNode { id: i, features: vec![0.4, 0.15 * i as f64 + 0.1] }).collect();
    let links = [(0, 0), (0, 1), (1, 1), (2, 1), (2, 2), (3, 2), (3, 0)];
    let edges: Vec<RawEdge> = links
        .iter()
        .enumerate()
        .map(|(k, &(ue, cell))| RawEdge {
            id: k as u64,
            ue,
            cell,
            features: vec![0.1 * k as f64, 0.9 - 0.1 * k as f64],
            timestamp: None,
        })
        .collect();
    homogenize(&ues, &cells, &edges).unwrap()
}

fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let g = toy_graph();
    let n = g.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::from_rows(&g.nodes().iter().map(|v| v.features.clone()).collect::<Vec<_>>()).unwrap();
    let a_hat = Rc::new(normalized_adjacency(&g));
    let pairs = g.edge_pairs();
    let edge_feats = Tensor::from_rows(&g.edges().iter().map(|e| e.features.clone()).collect::<Vec<_>>()).unwrap();

    let gcn = grad_check(
        |_, v| {
            let out = gcn_layer(v[0], &a_hat, v[1])?;
            out.mul(out)?.sum()
        },
        &[x.clone(), random_tensor(2, 3, &mut rng)],
        STEP,
    )
    .map_err(|e| e.to_string())?;

    let gat = grad_check(
        |tape, v| {
            let out = gat_layer(tape, v[0], &pairs, &edge_feats, v[1], v[2], v[3])?;
            out.mul(out)?.sum()
        },
        &[x.clone(), random_tensor(2, 3, &mut rng), random_tensor(2, 2, &mut rng), random_tensor(8, 1, &mut rng)],
        STEP,
    )
    .map_err(|e| e.to_string())?;

    let input = GraphInput::new(&g, &pairs).unwrap();
    let cfg = TrainConfig { hidden: 4, latent: 3, attention_dim: 2, ..TrainConfig::vgae() };
    let dims = VgaeDims::new(&input, &cfg);
    let model = Vgae::init(dims, 2);
    let names: Vec<&str> = model.state.names().collect();
    let theta: Vec<Tensor> = names.iter().map(|k| model.state.get(k).unwrap().clone()).collect();
    let noise = standard_noise(n, dims.latent, &mut ChaCha8Rng::seed_from_u64(3));
    let (lp, ll) = (vec![(0, 4), (1, 5), (0, 6), (2, 4)], vec![1.0, 1.0, 0.0, 0.0]);
    let vgae = grad_check(
        |tape, v| {
            let get = |k: &str| v[names.iter().position(|m| *m == k).unwrap()];
            let p = VgaeVars {
                w: get("gat.w"),
                w_e: get("gat.w_e"),
                a: get("gat.a"),
                emb: Some(get("gat.emb")),
                w_mu: get("mu.w"),
                w_logstd: get("logstd.w"),
            };
            vgae_loss(tape, &p, &input, &lp, &ll, 0.2, Some(&noise))
        },
        &theta,
        STEP,
    )
    .map_err(|e| e.to_string())?;

    let ctx = SealContext::new(&g, &pairs).unwrap();
    let graphs: Vec<EnclosingSubgraph> = [(0, 4), (1, 6), (3, 6)].iter().map(|&p| enclose(&ctx, p, 1, 3).unwrap()).collect();
    let batch = Batch::new(&graphs.iter().collect::<Vec<_>>(), false).unwrap();
    let seal = Seal::init(SealDims { in_dim: ctx.input_width(3), hidden: 3, hops: 1, max_label: 3, normalized: false }, 4);
    let names: Vec<&str> = seal.state.names().collect();
    let theta: Vec<Tensor> = names.iter().map(|k| seal.state.get(k).unwrap().map(|w| w + 0.011)).collect();
    let seal_err = grad_check(
        |tape, v| {
            let get = |k: &str| v[names.iter().position(|m| *m == k).unwrap()];
            let p = SealVars {
                w1: get("gcn1.w"),
                w2: get("gcn2.w"),
                dense_w: get("dense.w"),
                dense_b: get("dense.b"),
                out_w: get("out.w"),
                out_b: get("out.b"),
            };
            seal_loss(tape, &p, &batch, &[1.0, 0.0, 1.0])
        },
        &theta,
        STEP,
    )
    .map_err(|e| e.to_string())?;

    let secs = start.elapsed().as_secs_f64();
    let worst = gcn.max(gat).max(vgae).max(seal_err);
    ensure(
        n <= 10 && worst < 1e-4 && secs < 5.0,
        format!("gcn {gcn:.1e}, gat {gat:.1e}, vgae {vgae:.1e}, seal {seal_err:.1e}, {secs:.2} s"),
    )
}

fn auc_oracle(s: &[f64], y: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for i in (0..s.len()).filter(|&i| y[i]) {
        for j in (0..s.len()).filter(|&j| !y[j]) {
            pairs += 1.0;
            credit += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
        }
    }
    credit / pairs
}

/// Precision at each positive's position in the (score desc, index asc) order.
fn ap_oracle(s: &[f64], y: &[bool]) -> f64 {
    let ahead = |j: usize, i: usize| s[j] > s[i] || (s[j] == s[i] && j < i);
    let positives: Vec<usize> = (0..s.len()).filter(|&i| y[i]).collect();
    let total: f64 = positives
        .iter()
        .map(|&i| {
            let k = (0..s.len()).filter(|&j| ahead(j, i)).count();
            let hits = (0..s.len()).filter(|&j| y[j] && ahead(j, i)).count();
            (hits + 1) as f64 / (k + 1) as f64
        })
        .sum();
    total / positives.len() as f64
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..=20);
        // Coarse grid so ties are common.
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            continue;
        }
        done += 1;
        worst = worst.max((auc(&s, &y).unwrap() - auc_oracle(&s, &y)).abs());
        worst = worst.max((average_precision(&s, &y).unwrap() - ap_oracle(&s, &y)).abs());
        let t = rng.random_range(0..=10) as f64 / 10.0;
        let m = thresholded_metrics(&s, &y, t).unwrap();
        let count = |pred: bool, truth: bool| s.iter().zip(&y).filter(|&(&v, &l)| (v >= t) == pred && l == truth).count();
        let (tp, fp, tn, fn_) = (count(true, true), count(true, false), count(false, false), count(false, true));
        let [tpf, fpf, tnf, fnf] = [tp, fp, tn, fn_].map(|v| v as f64);
        let den = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
        let mcc = if den == 0.0 { 0.0 } else { (tpf * tnf - fpf * fnf) / den.sqrt() };
        let acc = (tpf + tnf) / n as f64;
        let c = m.confusion;
        if (c.tp, c.fp, c.tn, c.fn_) != (tp, fp, tn, fn_) || m.mcc != mcc || m.accuracy != acc {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-9 && mismatches == 0 && secs < 5.0,
        format!("200 instances, max AUC/AP deviation {worst:.1e}, {mismatches} confusion/MCC mismatches, {secs:.2} s"),
    )
}

fn density_reproduction() -> Outcome {
    let g = em_reference_graph(1);
    let d = density(&g).map_err(|e| e.to_string())?;
    ensure(
        g.n_nodes() == 101 && g.n_edges() == 489 && (d - 0.09683).abs() <= 5e-6,
        format!("{} nodes, {} edges, density {d:.6}", g.n_nodes(), g.n_edges()),
    )
}

fn manifest_bytes(b: &SplitBundle) -> Vec<u8> {
    let mut out = Vec::new();
    b.write_manifest(&mut out).unwrap();
    out
}

fn determinism() -> Outcome {
    let mut differing = Vec::new();
    let mut check = |stage: &str, same: bool| {
        if !same {
            differing.push(stage.to_string());
        }
    };
    let cfg = ScenarioConfig::em(4);
    let (t1, t2) = (generate_scenario(&cfg).unwrap(), generate_scenario(&cfg).unwrap());
    check("synth", t1 == t2);
    let (mut c1, mut c2) = (Vec::new(), Vec::new());
    t1.write_csv(&mut c1).unwrap();
    t2.write_csv(&mut c2).unwrap();
    check("trace csv", c1 == c2);
    let (g1, g2) = (trace_to_graph(&t1).unwrap(), trace_to_graph(&t2).unwrap());
    check("graph", g1 == g2);

    let shape = RwShape::desk(12, 300);
    let (r1, r2) = (rw_like_tables(shape, 5).into_graph().unwrap(), rw_like_tables(shape, 5).into_graph().unwrap());
    let tables = |g: &AttributedGraph| {
        let (mut n, mut e) = (Vec::new(), Vec::new());
        write_tables(g, &mut n, &mut e).unwrap();
        (n, e)
    };
    check("ingest", r1 == r2 && tables(&r1) == tables(&r2));

    let (b1, b2) = (split_with_negatives(&g1, DEFAULT_RATIOS, 4).unwrap(), split_with_negatives(&g1, DEFAULT_RATIOS, 4).unwrap());
    check("split", manifest_bytes(&b1) == manifest_bytes(&b2));

    let vcfg = TrainConfig::vgae().with_seed(4);
    let (v1, v2) = (train_vgae(&g1, &b1, &vcfg).unwrap(), train_vgae(&g1, &b1, &vcfg).unwrap());
    check("vgae", v1.model.to_checkpoint().to_text() == v2.model.to_checkpoint().to_text() && v1.curve == v2.curve);
    let scfg = TrainConfig { max_epochs: 6, patience: 5, ..TrainConfig::seal().with_seed(4) };
    let (s1, s2) = (train_seal(&g1, &b1, &scfg).unwrap(), train_seal(&g1, &b1, &scfg).unwrap());
    check("seal", s1.model.to_checkpoint().to_text() == s2.model.to_checkpoint().to_text() && s1.curve == s2.curve);

    let (pairs, labels) = b1.labeled(Part::Test);
    let labels: Vec<bool> = labels.iter().map(|&l| l > 0.5).collect();
    let input = GraphInput::new(&g1, &b1.message_edges).unwrap();
    let (p1, p2) = (v1.model.predict_links(&input, &pairs).unwrap(), v1.model.predict_links(&input, &pairs).unwrap());
    check("eval", EvalReport::compute(&p1, &labels, 0.5).unwrap() == EvalReport::compute(&p2, &labels, 0.5).unwrap());

    let events = ground_truth_next_cell(&t1);
    let scorer = EmbeddingScorer::vgae(&v1.model, &g1).unwrap();
    let decide = || {
        let r = replay(&t1, &events, &scorer, &ReplayConfig::default()).unwrap();
        r.decisions.iter().map(|d| (d.predicted, d.correct, d.pingpong)).collect::<Vec<_>>()
    };
    check("replay", decide() == decide());

    ensure(differing.is_empty(), format!("9 stages compared, differing: {differing:?}"))
}

struct SeedRuns {
    vgae_auc: Vec<f64>,
    vgae_ap: Vec<f64>,
    vgae_epochs: Vec<usize>,
    vgae_train_s: Vec<f64>,
    vgae_infer_s: Vec<f64>,
    seal_auc: Vec<f64>,
    seal_train_s: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn seed_runs() -> SeedRuns {
    let mut r = SeedRuns {
        vgae_auc: vec![],
        vgae_ap: vec![],
        vgae_epochs: vec![],
        vgae_train_s: vec![],
        vgae_infer_s: vec![],
        seal_auc: vec![],
        seal_train_s: vec![],
    };
    for seed in SEEDS {
        let g = em_graph(seed);
        let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).unwrap();
        let v = train_vgae(&g, &b, &TrainConfig::vgae().with_seed(seed)).unwrap();
        r.vgae_auc.push(v.best_val_auc);
        r.vgae_ap.push(v.curve[v.best_epoch - 1].ap);
        r.vgae_epochs.push(v.epochs_run);
        r.vgae_train_s.push(v.train_time_s);
        let all_pairs: Vec<(usize, usize)> = g.ue_nodes().flat_map(|u| g.cell_nodes().map(move |c| (u, c))).collect();
        let (scores, infer_s) = timing(|| {
            let input = GraphInput::new(&g, &g.edge_pairs()).unwrap();
            v.model.predict_links(&input, &all_pairs).unwrap()
        });
        assert_eq!(scores.len(), all_pairs.len());
        r.vgae_infer_s.push(infer_s);
        let s = train_seal(&g, &b, &TrainConfig::seal().with_seed(seed)).unwrap();
        r.seal_auc.push(s.best_val_auc);
        r.seal_train_s.push(s.train_time_s);
    }
    r
}

fn vgae_quality(r: &SeedRuns) -> Outcome {
    let (a, p) = (mean(&r.vgae_auc), mean(&r.vgae_ap));
    let epochs = r.vgae_epochs.iter().sum::<usize>() as f64 / r.vgae_epochs.len() as f64;
    let max_epochs = r.vgae_epochs.iter().max().copied().unwrap_or(0);
    ensure(
        a >= 0.75 && p >= 0.75 && epochs <= 100.0,
        format!("mean val AUC {a:.3}, AP {p:.3}, mean stop epoch {epochs:.1} (max {max_epochs})"),
    )
}

fn seal_quality(r: &SeedRuns) -> Outcome {
    let a = mean(&r.seal_auc);
    let (tv, ts) = (mean(&r.vgae_train_s), mean(&r.seal_train_s));
    ensure(
        a >= 0.70 && tv < ts,
        format!("SEAL mean val AUC {a:.3}; train time VGAE {tv:.3} s vs SEAL {ts:.3} s ({:.1}% less)", 100.0 * (1.0 - tv / ts)),
    )
}

fn vgae_inference(r: &SeedRuns) -> Outcome {
    let worst = r.vgae_infer_s.iter().copied().fold(0.0, f64::max);
    ensure(worst < 1.0, format!("all 2170 UE-cell pairs scored in at most {worst:.4} s"))
}

fn scaling() -> Outcome {
    let rows = scaling_bench(&[1.0, 2.0, 4.0], &[1, 2, 3], 30, 5).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n_nodes as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.train_s).collect();
    let fit = linear_fit(&xs, &ys).ok_or("degenerate fit")?;
    let per = |f: f64| mean(&rows.iter().filter(|r| r.factor == f).map(|r| r.train_s).collect::<Vec<_>>());
    let base = per(1.0);
    ensure(
        fit.r2 >= 0.9,
        format!("R2 {:.3} over n, 2n, 4n nodes; time ratios 1 : {:.2} : {:.2}", fit.r2, per(2.0) / base, per(4.0) / base),
    )
}

fn replay_vs_baseline() -> Outcome {
    let (mut acc, mut base, mut worst_latency, mut wins) = (vec![], vec![], 0.0f64, 0);
    for seed in SEEDS {
        let cfg = ScenarioConfig::em(seed);
        let trace = generate_scenario(&cfg).unwrap();
        let cut = 0.7 * cfg.duration_s;
        let g = trace_to_graph(&trace.split_at_time(cut).0).unwrap();
        let b = split_with_negatives(&g, DEFAULT_RATIOS, seed).unwrap();
        let out = train_vgae(&g, &b, &TrainConfig::vgae().with_seed(seed)).unwrap();
        let (history, events): (Vec<_>, Vec<_>) = ground_truth_next_cell(&trace).into_iter().partition(|e| e.t < cut);
        let scorer = EmbeddingScorer::vgae(&out.model, &g).unwrap();
        let report = replay(&trace, &events, &scorer, &ReplayConfig { threshold: out.threshold, ..Default::default() }).unwrap();
        let b = baseline_next_cell(&history, &events).unwrap();
        wins += usize::from(report.next_cell_accuracy > b);
        acc.push(report.next_cell_accuracy);
        base.push(b);
        worst_latency = worst_latency.max(report.max_decision_latency_s);
    }
    let (a, b) = (mean(&acc), mean(&base));
    ensure(
        a > b && worst_latency < 1.0,
        format!("mean accuracy {a:.3} vs majority baseline {b:.3} (model ahead on {wins}/10 seeds), max latency {worst_latency:.2e} s"),
    )
}

fn main() {
    let start = Instant::now();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {name}: {detail}");
    };
    report(1, "split hygiene", split_hygiene());
    report(2, "gradient correctness", gradient_correctness());
    report(3, "metric oracles", metric_oracles());
    report(4, "density", density_reproduction());
    report(5, "determinism", determinism());
    let runs = seed_runs();
    report(6, "VGAE quality", vgae_quality(&runs));
    report(7, "SEAL quality and cost", seal_quality(&runs));
    report(8, "VGAE inference time", vgae_inference(&runs));
    report(9, "linear scaling", scaling());
    report(10, "replay", replay_vs_baseline());
    println!("acceptance: {} of 10 passed in {:.1} s", 10 - failures, start.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
