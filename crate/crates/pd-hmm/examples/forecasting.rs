//! Forecasting future latent states and future partitions.
//!
//! Runs the filter on a short record, propagates the terminal posterior
//! forward over increasing horizons, and draws forecast partitions.
//! Over long horizons the predictive mixture collapses to the
//! stationary law: all mass on the empty and singleton components, and
//! drawn partitions distributed by the unconditional sampling formula.

use pd_hmm::filter::{ObservationSequence, Pruning};
use pd_hmm::partition;
use pd_hmm::smoother::{forecast_partition, Smoother};
use pd_hmm::{EPParams, Partition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn main() -> pd_hmm::Result<()> {
    let params = EPParams::new(0.1, 1.5)?;
    let seq = ObservationSequence::new(
        vec![0.0, 0.05, 0.1],
        vec![partition![3, 2], partition![4, 1], partition![2, 2, 1]],
    )?;
    let smoother = Smoother::new(params, &seq, Default::default(), Pruning::None)?;

    println!("terminal posterior at t = 0.1, then forecast mixtures:");
    for horizon in [0.01, 0.1, 1.0, 10.0] {
        let state = smoother.forecast_state(0.1 + horizon)?;
        let trivial: f64 = state
            .components
            .iter()
            .filter(|(p, _)| p.size() <= 1)
            .map(|(_, w)| w)
            .sum();
        println!(
            "  horizon {horizon:>5}: {} components, mass on {{empty, singleton}} = {:.4}",
            state.support_size(),
            trivial
        );
    }

    // draw forecast partitions of 5 new squares at a moderate horizon
    let state = smoother.forecast_state(0.35)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts: BTreeMap<Partition, u32> = BTreeMap::new();
    let draws = 20_000;
    for _ in 0..draws {
        *counts
            .entry(forecast_partition(&params, &state, 5, &mut rng))
            .or_insert(0) += 1;
    }
    println!("\nforecast law of a future 5-square partition at t = 0.35:");
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    for (pi, c) in ranked.iter().take(5) {
        println!("  {pi}  {:.4}", f64::from(*c) / f64::from(draws));
    }
    Ok(())
}
