use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use otfs_csep::experiment::{
    describe_layout, parse_pilots, parse_snr_range, run, write_output, ConfigFile, ExperimentConfig,
    ExperimentKind,
};
use otfs_csep::Error;

#[derive(Parser)]
#[command(name = "otfs-csep", version, about = "Multi-user MIMO-OTFS channel-estimation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE of the DDS channel estimate against SNR.
    Nmse(Common),
    /// LS-detected 16-QAM BER against SNR, estimated and perfect CSI.
    Ber(Common),
    /// Spectral efficiency against SNR.
    Se(Common),
    /// NMSE against the number of paths per user.
    Paths(PathsArgs),
    /// Cross-user coherence map of the CSEP dictionary.
    Coherence(CoherenceArgs),
    /// Pilot-region bounds, overheads and coherence admissibility.
    Layout(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// SNR grid as `a:step:b` (dB, inclusive) or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Monte-Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Pilot kinds, comma-separated (`csep`, `conventional`).
    #[arg(long)]
    pilot: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat TOML file of overrides; flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Use the reduced desk frame instead of the Table II frame.
    #[arg(long)]
    desk_scale: bool,
    /// Print the layout report to stderr before running.
    #[arg(long)]
    describe_layout: bool,
    /// Number of users.
    #[arg(long)]
    users: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct PathsArgs {
    #[command(flatten)]
    common: Common,
    /// Path counts, comma-separated.
    #[arg(long)]
    paths: Option<String>,
}

#[derive(Args, Clone)]
struct CoherenceArgs {
    #[command(flatten)]
    common: Common,
    /// 1-based user pair `s,t`.
    #[arg(long)]
    pair: Option<String>,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("otfs-csep: configuration error: {msg}");
    ExitCode::from(2)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Error> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Parse(format!("bad {what} `{s}`"))))
        .collect()
}

fn build_config(
    kind: ExperimentKind,
    common: &Common,
    paths: Option<&str>,
    pair: Option<&str>,
) -> Result<ExperimentConfig, Error> {
    let file = match &common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(k) = file.kind {
        if k != kind {
            return Err(Error::InvalidParameter(format!(
                "config file is for {k:?}, subcommand runs {kind:?}"
            )));
        }
    }
    let desk = common.desk_scale || file.desk_scale.unwrap_or(false);
    let mut cfg = ExperimentConfig::new(kind, desk);
    cfg.apply_file(&file)?;
    if let Some(s) = &common.snr {
        cfg.snr_db = parse_snr_range(s)?;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(p) = &common.pilot {
        cfg.pilots = parse_pilots(p)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(u) = common.users {
        cfg.params.users = u;
    }
    if let Some(o) = &common.output {
        cfg.output = Some(o.clone());
    }
    if let Some(p) = paths {
        cfg.path_counts = parse_list(p, "path count")?;
    }
    if let Some(p) = pair {
        match parse_list::<usize>(p, "user index")?.as_slice() {
            [s, t] => cfg.pair = (*s, *t),
            _ => return Err(Error::Parse(format!("--pair expects `s,t`, got `{p}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, paths, pair) = match &cli.command {
        Command::Nmse(c) => (ExperimentKind::NmseVsSnr, c, None, None),
        Command::Ber(c) => (ExperimentKind::BerVsSnr, c, None, None),
        Command::Se(c) => (ExperimentKind::SeVsSnr, c, None, None),
        Command::Paths(a) => (ExperimentKind::NmseVsPaths, &a.common, a.paths.as_deref(), None),
        Command::Coherence(a) => (ExperimentKind::CoherenceMap, &a.common, None, a.pair.as_deref()),
        Command::Layout(c) => (ExperimentKind::LayoutReport, c, None, None),
    };
    let cfg = match build_config(kind, common, paths, pair) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(t) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return config_error(e);
        }
    }
    if common.describe_layout && kind != ExperimentKind::LayoutReport {
        match describe_layout(&cfg) {
            Ok(text) => eprint!("{text}"),
            Err(e) => return config_error(e),
        }
    }
    let out = match run(&cfg) {
        Ok(o) => o,
        Err(e @ (Error::InvalidParameter(_) | Error::LayoutOverflow(_) | Error::Parse(_))) => {
            return config_error(e)
        }
        Err(e) => {
            eprintln!("otfs-csep: {e}");
            return ExitCode::from(1);
        }
    };
    for f in &out.failures {
        eprintln!("otfs-csep: trial failed: {f}");
    }
    match write_output(&cfg, &out.text) {
        Ok(Some(path)) => eprintln!("otfs-csep: wrote {}", path.display()),
        Ok(None) => print!("{}", out.text),
        Err(e) => {
            eprintln!("otfs-csep: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}
