//! A small seeded NMSE sweep driven from code instead of the CLI.
//!
//! cargo run --release --example sweep [trials]

use otfs_csep::experiment::{run, ExperimentConfig, ExperimentKind};

fn main() -> otfs_csep::Result<()> {
    let mut config = ExperimentConfig::new(ExperimentKind::NmseVsSnr, true);
    config.trials = std::env::args().nth(1).map_or(10, |s| s.parse().expect("trials"));
    config.snr_db = vec![0.0, 10.0, 20.0];
    let out = run(&config)?;
    for f in &out.failures {
        eprintln!("failed trial: {f}");
    }
    print!("{}", out.text);
    Ok(())
}
