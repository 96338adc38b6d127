//! Small parallel grid over device counts and seeds with 95% confidence
//! intervals on the final-round metrics.

use relroute::experiment::{sweep, SweepSpec};
use relroute::scenario::{PolicyKind, ScenarioConfig};

fn main() -> relroute::Result<()> {
    let base = ScenarioConfig::preset("static-lattice-low")?;
    let report = sweep(
        &base,
        &SweepSpec {
            ns: vec![9, 16, 25],
            seeds: (1..=5).collect(),
            policies: vec![PolicyKind::Sp, PolicyKind::Bp],
            t_test: 5000,
            model: None,
        },
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.to_csv("static-lattice-low seeds=1..5"));
    Ok(())
}
