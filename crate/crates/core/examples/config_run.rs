//! Driving a run from a TOML configuration, as the command line tool does.

use param_lyap::bench::{run, write_csv, RunConfig};

const CONFIG: &str = r#"
problem = "vibration"
backend = "smw"

[vibration]
d = 20
s = 4
positions = [[3, 30], [8, 25]]
tol = 1e-4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    cfg.validate()?;
    let report = run(&cfg)?;
    write_csv(&report.rows, std::io::stdout().lock())?;
    for line in &report.summary {
        eprintln!("{line}");
    }
    Ok(())
}
