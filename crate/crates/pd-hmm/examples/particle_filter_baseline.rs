//! Bootstrap particle filter versus the exact filter.
//!
//! The particle filter targets the same posterior by simulating latent
//! frequency vectors; it is a stochastic baseline whose evidence
//! estimate converges to the exact marginal likelihood as the particle
//! count grows. This example shows the convergence and the cost gap.

use pd_hmm::bpf::bpf_filter;
use pd_hmm::dual::PredictMode;
use pd_hmm::filter::{filter, Pruning};
use pd_hmm::harness::{simulate_experiment, ExperimentConfig, Schedule, Sizes};
use std::time::Instant;

fn main() -> pd_hmm::Result<()> {
    let cfg = ExperimentConfig {
        alpha: 0.1,
        theta: 1.0,
        grid: None,
        times: None,
        schedule: Some(Schedule {
            start: 0.0,
            step: 0.01,
            count: 10,
        }),
        sizes: Sizes::Uniform(10),
        mode: Default::default(),
        pruning: Default::default(),
        eps: 1e-4,
        seed: 5,
        draws: 1000,
        kappa: 0.05,
    };
    let sim = simulate_experiment(&cfg)?;
    let params = cfg.params()?;

    let start = Instant::now();
    let exact = filter(&params, &sim.seq, PredictMode::Exact, Pruning::TopK(100))?;
    let exact_time = start.elapsed();
    println!(
        "exact filter:    log evidence {:.4}   ({:.2?})",
        exact.log_evidence, exact_time
    );

    for particles in [500, 5_000, 20_000] {
        let start = Instant::now();
        let bpf = bpf_filter(&params, &sim.seq, particles, cfg.eps, 31)?;
        println!(
            "bpf M = {particles:>6}: log evidence {:.4}   ({:.2?})",
            bpf.log_evidence,
            start.elapsed()
        );
    }

    let bpf = bpf_filter(&params, &sim.seq, 20_000, cfg.eps, 31)?;
    println!("\nper-step effective sample size at M = 20000:");
    for step in &bpf.steps {
        println!(
            "  t = {:<5.2} ESS = {:>8.0}  resampled = {}",
            step.time, step.ess, step.resampled
        );
    }
    Ok(())
}
