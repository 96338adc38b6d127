//! Lists the presets, dumps one as a config file, edits it and reads it
//! back.

use relroute::scenario::{ScenarioConfig, PRESET_NAMES};

fn main() -> relroute::Result<()> {
    for name in PRESET_NAMES {
        let cfg = ScenarioConfig::preset(name)?;
        println!(
            "{name:<28} alpha={} beta={} lambda_p={} t_train={}",
            cfg.alpha, cfg.beta, cfg.lambda_p, cfg.t_train
        );
    }
    let text = ScenarioConfig::preset("dynamic-lattice-high")?.to_text();
    println!("\n{text}");
    let edited = text.replace("n = 25", "n = 64").replace("name = dynamic-lattice-high", "name = dynamic-64");
    let cfg = ScenarioConfig::from_text(&edited)?;
    println!("{}: N={} lambda_f={}", cfg.name, cfg.n_devices, cfg.lambda_f());
    Ok(())
}
