//! Quick timing + recovery probe (not part of the test suite).
use gfa_core::analysis::{match_factors, summarize_chains};
use gfa_core::model::{HyperParams, Model, ModelFamily, ModelSpec, ParamLayout};
use gfa_core::sampler::{run_chains, SamplerConfig};
use gfa_core::stats::cosine_similarity;
use gfa_core::synth::{generate, SyntheticScenario};
use std::time::Instant;

fn main() {
    let scenario = SyntheticScenario { seed: 1, ..SyntheticScenario::default() };
    let (data, truth) = generate(&scenario).unwrap();
    let spec = ModelSpec::new(
        ModelFamily::SparseGfa,
        scenario.view_dims.clone(),
        scenario.n_samples(),
        5,
        HyperParams::default_for(&scenario.view_dims),
    )
    .unwrap();
    let model = Model::new(&spec, &data).unwrap();
    let layout = ParamLayout::new(&spec).unwrap();

    let config = SamplerConfig {
        chains: 2,
        warmup: 1000,
        samples: 1500,
        inits: 1,
        seed: 1,
        ..SamplerConfig::default()
    };
    let t0 = Instant::now();
    let out = run_chains(&model, &config, None).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    for (i, c) in out.chains.iter().enumerate() {
        println!(
            "chain {i}: step={:.2e} div={} wdiv={} depth_hits={}/{} accept={:.2} mean_lj={:.1}",
            c.step_size, c.divergences, c.warmup_divergences, c.max_depth_hits,
            c.log_joint.len(), c.accept_mean,
            c.log_joint.iter().sum::<f64>() / c.log_joint.len() as f64
        );
    }
    println!("2 chains x 1500 iters took {dt:.1}s");

    // Factor recovery vs truth
    let summary = summarize_chains(&out, &layout).unwrap();
    let true_w = truth.stacked_loadings();
    for chain in 0..2 {
        let w = &summary.loadings[chain];
        for t in 0..3 {
            let tw: Vec<f64> = true_w.column(t).to_vec();
            let best = (0..5)
                .map(|f| {
                    let col: Vec<f64> = w.column(f).to_vec();
                    cosine_similarity(&tw, &col).map(|c| c.abs()).unwrap_or(0.0)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            print!("  chain {chain} truth {t}: best |cos| = {best:.3}");
        }
        println!();
    }
    let robust = match_factors(&summary, 0.8).unwrap();
    println!("robust factors at 0.8 with 2 chains: {}", robust.factors.len());
}
