//! Scratch experiment: synthetic end-to-end convergence and timing.

use hlg_core::config::RunConfig;
use hlg_core::fewshot::{evaluate, split_classes, train};
use hlg_core::metrics::{binary_metrics, multiclass_metrics};
use hlg_core::synth::{generate, SynthConfig};
use std::time::Instant;

fn main() {
    let synth = SynthConfig {
        n: 16,
        benign_sessions: 200,
        sessions_per_family: 100,
        families: 2,
        seed: 7,
    };
    let dataset = generate(&synth);
    let split = split_classes(&dataset, 1, 7).unwrap();
    let (train_ds, test_ds) = split.apply(&dataset);
    println!(
        "train malicious {:?}, test malicious {:?}; train {} records, test {}",
        split.train_malicious,
        split.test_malicious,
        train_ds.records.len(),
        test_ds.records.len()
    );

    let cfg = RunConfig {
        d: 16,
        d_k: 16,
        way: 2,
        shot: 5,
        n_query: 15,
        episodes: 300,
        seed: 7,
        ..Default::default()
    };
    cfg.validate().unwrap();

    let t0 = Instant::now();
    let out = train::<f32>(&cfg, &train_ds).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    for chunk in out.losses.chunks(25) {
        let mean: f64 = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("loss mean over 25 episodes: {mean:.4}");
    }
    println!("training took {train_secs:.1} s ({:.0} ms/episode)", 1000.0 * train_secs / 300.0);

    let t1 = Instant::now();
    let eval = evaluate(&out.params, &cfg, &test_ds, 200, None).unwrap();
    let eval_secs = t1.elapsed().as_secs_f64();
    let b = binary_metrics(&eval.binary);
    let m = multiclass_metrics(&eval.confusion);
    println!(
        "eval 200 episodes in {eval_secs:.1} s: accuracy {:?}, recall {:?}, fpr {:?} (multi acc {:?})",
        b.accuracy, b.recall, b.fpr, m.accuracy
    );
}
