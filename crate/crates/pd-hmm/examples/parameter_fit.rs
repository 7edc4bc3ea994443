//! Grid maximum-likelihood estimation of (alpha, theta).
//!
//! Simulates a sequence at known parameters, evaluates the exact
//! marginal likelihood over a parameter grid in parallel, and prints
//! the evidence table with the argmax.

use pd_hmm::filter::{fit_grid, Pruning};
use pd_hmm::harness::{simulate_experiment, ExperimentConfig, GridSpec, Schedule, Sizes};

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
        sizes: Sizes::Uniform(25),
        mode: Default::default(),
        pruning: Default::default(),
        eps: 1e-4,
        seed: 11,
        draws: 1000,
        kappa: 0.05,
    };
    let sim = simulate_experiment(&cfg)?;
    println!(
        "simulated {} observations of size 25 at (alpha, theta) = (0.1, 1.5)",
        sim.seq.len()
    );

    let grid = GridSpec {
        alpha: vec![0.0, 0.1, 0.2, 0.3],
        theta: vec![0.5, 1.0, 1.5, 2.0],
    };
    let (best, table) = fit_grid(
        &sim.seq,
        &grid.points()?,
        cfg.predict_mode(),
        Pruning::TopK(25),
    )?;

    println!("\nlog evidence over the grid (rows alpha, columns theta):");
    print!("{:>8}", "");
    for &t in &grid.theta {
        print!("{t:>10.2}");
    }
    println!();
    for &a in &grid.alpha {
        print!("{a:>8.2}");
        for &t in &grid.theta {
            let ev = table
                .iter()
                .find(|(p, _)| p.alpha() == a && p.theta() == t)
                .unwrap()
                .1;
            print!("{ev:>10.3}");
        }
        println!();
    }
    println!(
        "\nargmax: (alpha, theta) = ({}, {})",
        best.alpha(),
        best.theta()
    );
    Ok(())
}
