//! Driving an experiment from code: defaults, a partial JSON document and
//! dotted overrides are merged, validated and run; the run writes CSV tables
//! and `metadata.json`.

use emwalk::experiments::{run_experiment, validate_config, ExperimentConfig, ExperimentKind};
use serde_json::json;

fn main() -> emwalk::Result<()> {
    let out = std::env::temp_dir().join("emwalk-run-config-example");
    let doc = json!({ "params": { "e_values": [0.16, 0.64], "steps": 100 } });
    let cfg = ExperimentConfig::build(ExperimentKind::Bloch, Some(&doc), &[format!("out_dir={}", out.display())])?;

    let mut bad = cfg.clone();
    bad.walk.eps_a = -1.0;
    println!("diagnostics for a bad config: {:?}", validate_config(&bad));

    let art = run_experiment(&cfg)?;
    for p in &art.csv_paths {
        println!("wrote {}", p.display());
    }
    println!("periods: {}", art.metadata["summary"]["periods"]);
    Ok(())
}
