//! Load a flat TOML sweep config with overrides, run it and write the CSV and
//! summary JSON that the command-line tool produces.

use lrtransfer::harness::{run_sweep, write_records_csv, SweepConfig};

const CONFIG: &str = r#"
experiment = "example"
param = ["mup", "ntp"]
widths = [64, 128]
depth = 2
eta_points = 8
seeds = [0, 1]
"#;

fn main() -> lrtransfer::Result<()> {
    let cfg = SweepConfig::from_toml(CONFIG, &["steps=1,3".to_string()])?;
    let result = run_sweep(&cfg)?;
    let dir = std::env::temp_dir().join("lrtransfer-example");
    std::fs::create_dir_all(&dir)?;
    write_records_csv(&dir.join("results.csv"), &result.records)?;
    result.summarize().write(&dir.join("summary.json"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    println!("{} records written to {}", result.records.len(), dir.display());
    Ok(())
}
