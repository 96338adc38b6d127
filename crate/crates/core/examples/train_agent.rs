//! Trains a routing agent on a small static lattice, then compares it with
//! shortest path on a fresh test run.
//!
//! ```text
//! cargo run --release --example train_agent -- [n] [t_train] [seed]
//! ```

use std::sync::Arc;
use std::time::Instant;

use relroute::experiment::{test, train_with_progress};
use relroute::scenario::{PolicyKind, ScenarioConfig};

fn main() -> relroute::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(16) as usize;
    let t_train = args.get(1).copied().unwrap_or(10_000);
    let seed = args.get(2).copied().unwrap_or(1);
    let cfg = ScenarioConfig::preset("static-lattice-low")?
        .with_n(n)
        .with_seed(seed);

    let start = Instant::now();
    println!("round  pct_delivered  delay  rows  pairs  loss  elapsed");
    let outcome = train_with_progress(&cfg, t_train, |m, t| {
        println!(
            "{:>5}  {:>13.4}  {:>5.2}  {:>6}  {:>6}  {:.4}  {:.1?}",
            m.round,
            m.pct_delivered,
            m.delay_per_packet,
            t.rows_total,
            t.pairs_trained,
            t.mean_loss,
            start.elapsed()
        );
    })?;
    println!("training took {:.1?}", start.elapsed());

    let model = Arc::new(outcome.model);
    let test_cfg = cfg.clone().with_seed(seed + 1000);
    for policy in [PolicyKind::Sp, PolicyKind::Drl] {
        let records = test(&test_cfg, policy, Some(model.clone()), 10_000)?;
        let last = records.last().unwrap();
        println!(
            "{policy}: pct_delivered {:.4} delay {:.2}",
            last.pct_delivered, last.delay_per_packet
        );
    }
    Ok(())
}
