//! Runs every pipeline stage on the toy synthetic config and prints the
//! report table. Stages already complete for the same config are skipped.

use chatdqn::experiment::{run_experiment, ExperimentConfig};

fn main() -> chatdqn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "toy-run".into());
    let mut cfg = ExperimentConfig::toy();
    cfg.output_dir = out.into();
    let dir = run_experiment(cfg)?;
    let report = dir.join("report.csv");
    print!("{}", std::fs::read_to_string(&report).map_err(|e| chatdqn::Error::io(&report, e))?);
    Ok(())
}
