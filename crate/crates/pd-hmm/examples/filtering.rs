//! Exact forward filtering on a simulated observation sequence.
//!
//! Simulates a latent Poisson–Dirichlet diffusion observed through
//! paintbox partitions, runs the exact filter, and prints the posterior
//! mixture support and heterozygosity summary at each time.

use pd_hmm::filter::{filter, Pruning};
use pd_hmm::harness::{simulate_experiment, summarize_states, ExperimentConfig, Schedule, Sizes};

fn main() -> pd_hmm::Result<()> {
    let cfg = ExperimentConfig {
        alpha: 0.1,
        theta: 1.5,
        grid: None,
        times: None,
        schedule: Some(Schedule {
            start: 0.0,
            step: 0.025,
            count: 10,
        }),
        sizes: Sizes::Uniform(20),
        mode: Default::default(),
        pruning: Default::default(),
        eps: 1e-4,
        seed: 20,
        draws: 5_000,
        kappa: 0.05,
    };
    let sim = simulate_experiment(&cfg)?;
    println!("observations:");
    for (t, pi) in sim.seq.times().iter().zip(sim.seq.partitions()) {
        println!("  t = {t:.3}  partition = {pi}");
    }

    let params = cfg.params()?;
    // support grows with every update: keep the 50 heaviest components and
    // let prediction switch to Monte Carlo when the support is large
    let out = filter(&params, &sim.seq, cfg.predict_mode(), Pruning::TopK(50))?;
    println!("\nlog evidence: {:.4}", out.log_evidence);

    let rows = summarize_states(
        &params,
        &out.states,
        cfg.draws,
        cfg.eps,
        cfg.kappa,
        cfg.seed,
        Some(&sim.truth_h2),
    )?;
    println!("\nfiltering posterior of the heterozygosity H2:");
    println!("  time   support   mean    95% interval      truth");
    for (row, (state, (_, support))) in rows
        .iter()
        .zip(out.states.iter().zip(&out.support_sizes))
    {
        println!(
            "  {:<6.3} {:>6}    {:.3}   [{:.3}, {:.3}]    {:.3}",
            row.time,
            state.support_size().max(*support),
            row.mean,
            row.lower,
            row.upper,
            row.truth.unwrap()
        );
    }
    Ok(())
}
