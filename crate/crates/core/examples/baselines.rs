//! Shortest path against backpressure on a preset, same seed for both so
//! they face identical links and traffic.
//!
//! ```text
//! cargo run --release --example baselines -- [preset] [n] [timesteps]
//! ```

use relroute::experiment::test;
use relroute::scenario::{PolicyKind, ScenarioConfig};

fn main() -> relroute::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map(String::as_str).unwrap_or("static-lattice-high");
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(25);
    let steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let cfg = ScenarioConfig::preset(preset)?.with_n(n);
    println!("{preset}, N={n}, {steps} steps");
    for policy in [PolicyKind::Sp, PolicyKind::Bp] {
        let records = test(&cfg, policy, None, steps)?;
        let last = records.last().expect("at least one round");
        println!(
            "{policy}: delivered {:.4}  delay {:>7.2}  avg queue {:>7.3}  generated {}",
            last.pct_delivered, last.delay_per_packet, last.avg_queue_len, last.generated
        );
    }
    Ok(())
}
