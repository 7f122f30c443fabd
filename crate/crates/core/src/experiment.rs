//! Seeded Monte-Carlo sweeps and their CSV output.
//!
//! Every `(point, trial)` cell draws from its own ChaCha stream keyed by
//! `(base seed, point, trial)`, so results do not depend on the worker count.
//! Both pilot kinds in a cell see the same channel draw.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{
    ber_ls, coherence_bound, coherence_closed_form, empirical_sinr, max_cross_coherence, nmse,
    random_qam16, se, PeakTap, DESK_SCALE_LIMIT,
};
use crate::channel::{max_doppler_taps, sample_channel, UserChannel};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorOptions};
use crate::geometry::{OtfsParams, PilotKind};
use crate::modem::{propagate, DdFrame};
use crate::pilots::{overhead, PilotLayout};

/// Which sweep to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NmseVsSnr,
    BerVsSnr,
    SeVsSnr,
    NmseVsPaths,
    CoherenceMap,
    LayoutReport,
}

impl ExperimentKind {
    /// Whether the sweep needs the LS detector (and hence a small frame).
    pub fn detects(self) -> bool {
        matches!(self, ExperimentKind::BerVsSnr | ExperimentKind::SeVsSnr)
    }

    /// CSV header of the sweep's output.
    pub fn csv_header(self) -> &'static str {
        match self {
            ExperimentKind::NmseVsSnr => "pilot,snr_db,nmse_mean,nmse_stderr,trials,failures,config_hash",
            ExperimentKind::BerVsSnr => {
                "pilot,snr_db,ber_mean,ber_stderr,ber_perfect_mean,ber_perfect_stderr,trials,failures,config_hash"
            }
            ExperimentKind::SeVsSnr => {
                "pilot,snr_db,se_mean,se_stderr,se_perfect_mean,se_perfect_stderr,eta,trials,failures,config_hash"
            }
            ExperimentKind::NmseVsPaths => "pilot,paths,nmse_mean,nmse_stderr,trials,failures,config_hash",
            ExperimentKind::CoherenceMap => "dnu,dl,mu,config_hash",
            ExperimentKind::LayoutReport => "",
        }
    }
}

/// Optional overrides from a flat TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: Option<ExperimentKind>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub m_cp: Option<usize>,
    pub delta_f: Option<f64>,
    pub f_c: Option<f64>,
    pub m_g: Option<usize>,
    pub n_g: Option<usize>,
    pub m_p: Option<usize>,
    pub n_p: Option<usize>,
    pub users: Option<usize>,
    pub n_bs: Option<usize>,
    pub paths: Option<usize>,
    pub d_over_lambda: Option<f64>,
    /// `"a:step:b"`.
    pub snr: Option<String>,
    pub snr_db: Option<Vec<f64>>,
    pub path_counts: Option<Vec<usize>>,
    pub paths_snr_db: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub pilots: Option<Vec<PilotKind>>,
    pub v_max_kmh: Option<f64>,
    pub p_s: Option<f64>,
    pub sigma_pl: Option<f64>,
    pub pair: Option<[usize; 2]>,
    pub coherence_steps: Option<usize>,
    pub n_rounds: Option<usize>,
    pub compensate_leakage: Option<bool>,
    pub desk_scale: Option<bool>,
    pub output: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: OtfsParams,
    pub snr_db: Vec<f64>,
    pub path_counts: Vec<usize>,
    /// SNR of the path-count sweep.
    pub paths_snr_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub pilots: Vec<PilotKind>,
    pub v_max_kmh: f64,
    /// Average symbol power.
    pub p_s: f64,
    /// Channel gain scale; the total path power is `σ_PL²`.
    pub sigma_pl: f64,
    /// 1-based user pair of the coherence map.
    pub pair: (usize, usize),
    /// Doppler grid points per side in the coherence map.
    pub coherence_steps: usize,
    pub estimator: EstimatorOptions,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults: Table II frame, or the reduced desk frame with `desk_scale`
    /// (the LS-detector frame for BER/SE sweeps).
    pub fn new(kind: ExperimentKind, desk_scale: bool) -> Self {
        let params = match (desk_scale, kind.detects()) {
            (false, _) => OtfsParams::table_ii(),
            (true, true) => OtfsParams::desk_ber(),
            (true, false) => OtfsParams::desk_sweep(),
        };
        ExperimentConfig {
            kind,
            params,
            snr_db: parse_snr_range("-10:5:20").expect("default grid"),
            path_counts: (2..=6).collect(),
            paths_snr_db: 15.0,
            trials: 200,
            seed: 1,
            pilots: vec![PilotKind::Csep, PilotKind::Conventional],
            v_max_kmh: 300.0,
            p_s: 1.0,
            sigma_pl: 1.0,
            pair: (1, 2),
            coherence_steps: 40,
            estimator: EstimatorOptions::default(),
            output: None,
        }
    }

    /// Applies every value present in `file`.
    pub fn apply_file(&mut self, file: &ConfigFile) -> Result<()> {
        let p = &mut self.params;
        macro_rules! take {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = file.$src.clone() { $dst = v; })*
            };
        }
        take!(
            m => p.m, n => p.n, m_cp => p.m_cp, delta_f => p.delta_f, f_c => p.f_c,
            m_g => p.m_g, n_g => p.n_g, m_p => p.m_p, n_p => p.n_p, users => p.users,
            n_bs => p.n_bs, paths => p.paths, d_over_lambda => p.d_over_lambda,
            snr_db => self.snr_db, path_counts => self.path_counts,
            paths_snr_db => self.paths_snr_db, trials => self.trials, seed => self.seed,
            pilots => self.pilots, v_max_kmh => self.v_max_kmh, p_s => self.p_s,
            sigma_pl => self.sigma_pl, coherence_steps => self.coherence_steps,
            n_rounds => self.estimator.n_rounds,
            compensate_leakage => self.estimator.compensate_leakage,
        );
        if let Some(s) = &file.snr {
            self.snr_db = parse_snr_range(s)?;
        }
        if let Some([s, t]) = file.pair {
            self.pair = (s, t);
        }
        if let Some(o) = &file.output {
            self.output = Some(o.clone());
        }
        Ok(())
    }

    /// Checks the settings against the sweep's needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        if !(self.p_s > 0.0) || !(self.sigma_pl > 0.0) {
            return bad("P_s and σ_PL must be positive".into());
        }
        if !(self.v_max_kmh >= 0.0) {
            return bad("v_max must be ≥ 0".into());
        }
        if self.pilots.is_empty() {
            return bad("at least one pilot kind is required".into());
        }
        match self.kind {
            ExperimentKind::NmseVsSnr | ExperimentKind::BerVsSnr | ExperimentKind::SeVsSnr => {
                if self.snr_db.is_empty() {
                    return bad("SNR grid is empty".into());
                }
                self.check_paths(self.params.paths)?;
                for &k in &self.pilots {
                    self.params.check_fit(k)?;
                }
                let cells = self.params.grid_cells();
                if self.kind.detects() && cells > DESK_SCALE_LIMIT {
                    return Err(Error::DeskScale {
                        cells,
                        limit: DESK_SCALE_LIMIT,
                    });
                }
            }
            ExperimentKind::NmseVsPaths => {
                if self.path_counts.is_empty() {
                    return bad("path-count grid is empty".into());
                }
                for &p in &self.path_counts {
                    self.check_paths(p)?;
                }
                for &k in &self.pilots {
                    self.params.check_fit(k)?;
                }
            }
            ExperimentKind::CoherenceMap => {
                self.params.check_fit(PilotKind::Csep)?;
                let (s, t) = self.pair;
                let k = self.params.users;
                if s == 0 || t == 0 || s > k || t > k {
                    return bad(format!("pair ({s}, {t}) outside users 1..={k}"));
                }
                if self.coherence_steps == 0 {
                    return bad("coherence_steps must be ≥ 1".into());
                }
            }
            ExperimentKind::LayoutReport => {
                self.params.check_fit(PilotKind::Conventional)?;
                self.params.check_fit(PilotKind::Csep)?;
            }
        }
        Ok(())
    }

    fn check_paths(&self, paths: usize) -> Result<()> {
        if paths == 0 || paths >= self.params.n_bs {
            return Err(Error::InvalidParameter(format!(
                "P = {paths} paths need 1 ≤ P < N_BS = {}",
                self.params.n_bs
            )));
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the resolved settings
    /// (the output path excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let digest = Sha256::digest(format!("{c:?}").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn noise_snr_db(&self, snr_db: f64) -> f64 {
        // σ_n² = P_s σ_PL² / SNR
        snr_db - 10.0 * (self.p_s * self.sigma_pl * self.sigma_pl).log10()
    }

    fn noise_var(&self, snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            0.0
        } else {
            self.p_s * self.sigma_pl * self.sigma_pl * 10f64.powf(-snr_db / 10.0)
        }
    }
}

/// Parses `a:step:b` (inclusive) or a comma-separated list of dB values.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad SNR value `{s}`")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || !(b >= a) {
                return Err(Error::Parse(format!("SNR range `{text}` needs step > 0 and a ≤ b")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + step * i as f64).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(Error::Parse(format!("SNR range `{text}` is not a:step:b"))),
    }
}

/// Parses a comma-separated pilot list.
pub fn parse_pilots(text: &str) -> Result<Vec<PilotKind>> {
    text.split(',').map(str::parse).collect()
}

/// Seed of cell `(point, trial)`.
pub fn cell_seed(base: u64, point: u64, trial: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ point) ^ trial)
}

fn kind_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Mean and standard error of the finite samples; `None` entries are failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub failures: usize,
}

pub fn summarize(samples: &[Option<f64>]) -> Summary {
    let ok: Vec<f64> = samples.iter().flatten().copied().filter(|v| !v.is_nan()).collect();
    let failures = samples.len() - ok.len();
    let n = ok.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            stderr: f64::NAN,
            count: 0,
            failures,
        };
    }
    let mean = ok.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 || !mean.is_finite() {
        0.0
    } else {
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Summary {
        mean,
        stderr,
        count: n,
        failures,
    }
}

/// Sweep output plus the per-trial failure messages.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub text: String,
    pub failures: Vec<String>,
}

/// Runs the configured sweep.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.kind {
        ExperimentKind::NmseVsSnr => nmse_sweep(config, false),
        ExperimentKind::NmseVsPaths => nmse_sweep(config, true),
        ExperimentKind::BerVsSnr | ExperimentKind::SeVsSnr => detection_sweep(config),
        ExperimentKind::CoherenceMap => Ok(RunOutput {
            text: coherence_map(config)?,
            failures: Vec::new(),
        }),
        ExperimentKind::LayoutReport => Ok(RunOutput {
            text: describe_layout(config)?,
            failures: Vec::new(),
        }),
    }
}

/// Writes `text` to the configured output, or returns it for stdout.
pub fn write_output(config: &ExperimentConfig, text: &str) -> Result<Option<PathBuf>> {
    match &config.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            Ok(Some(path.clone()))
        }
        None => Ok(None),
    }
}

struct Trial {
    channels: Vec<UserChannel>,
}

fn draw_trial(config: &ExperimentConfig, params: &OtfsParams, seed: u64) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = config.v_max_kmh / 3.6;
    let channels = (0..params.users)
        .map(|u| {
            let mut ch = sample_channel(params, u, v, &mut rng)?;
            for p in &mut ch.paths {
                p.alpha *= config.sigma_pl;
            }
            Ok(ch)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trial { channels })
}

/// Frames for every user, symbols scaled to average power `P_s`.
fn transmit(
    config: &ExperimentConfig,
    layout: &PilotLayout,
    params: &OtfsParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<Complex64>>, Vec<DdFrame>)> {
    let cells = layout.data_cells(params).len();
    let amp = Complex64::new(config.p_s.sqrt(), 0.0);
    let data: Vec<Vec<Complex64>> = (0..params.users).map(|_| random_qam16(rng, cells)).collect();
    let frames = data
        .iter()
        .enumerate()
        .map(|(u, d)| {
            let mut f = layout.build_frame(u, d, params)?;
            f.grid *= amp;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, frames))
}

fn nmse_trial(
    config: &ExperimentConfig,
    params: &OtfsParams,
    snr_db: f64,
    seed: u64,
) -> Vec<std::result::Result<f64, String>> {
    let trial = match draw_trial(config, params, seed) {
        Ok(t) => t,
        Err(e) => return vec![Err(e.to_string()); config.pilots.len()],
    };
    let truth: Vec<_> = trial.channels.iter().map(|c| c.dds_matrix(params)).collect();
    config
        .pilots
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let mut rng = kind_stream(seed, j);
            let layout = PilotLayout::new(kind, params).map_err(|e| e.to_string())?;
            let (_, frames) = transmit(config, &layout, params, &mut rng).map_err(|e| e.to_string())?;
            let cube = propagate(&frames, &trial.channels, params, config.noise_snr_db(snr_db), &mut rng)
                .map_err(|e| e.to_string())?;
            let report = estimate(&cube, &layout, params, config.estimator);
            let est = report
                .users
                .into_iter()
                .map(|r| r.map(|u| u.h_dds))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.to_string())?;
            nmse(&est, &truth).map_err(|e| e.to_string())
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6e}")
}

fn nmse_sweep(config: &ExperimentConfig, over_paths: bool) -> Result<RunOutput> {
    let points: Vec<(OtfsParams, f64, String)> = if over_paths {
        config
            .path_counts
            .iter()
            .map(|&p| {
                let mut params = config.params.clone();
                params.paths = p;
                (params, config.paths_snr_db, p.to_string())
            })
            .collect()
    } else {
        config
            .snr_db
            .iter()
            .map(|&s| (config.params.clone(), s, s.to_string()))
            .collect()
    };
    let trials = config.trials;
    let cells: Vec<Vec<std::result::Result<f64, String>>> = (0..points.len() * trials)
        .into_par_iter()
        .map(|c| {
            let (pi, ti) = (c / trials, c % trials);
            let (params, snr, _) = &points[pi];
            nmse_trial(config, params, *snr, cell_seed(config.seed, pi as u64, ti as u64))
        })
        .collect();

    let hash = config.hash();
    let mut text = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(text, "{}", config.kind.csv_header());
    for (j, kind) in config.pilots.iter().enumerate() {
        for (pi, (_, _, label)) in points.iter().enumerate() {
            let samples: Vec<Option<f64>> = (0..trials)
                .map(|ti| match &cells[pi * trials + ti][j] {
                    Ok(v) => Some(*v),
                    Err(e) => {
                        failures.push(format!("{kind} point {label} trial {ti}: {e}"));
                        None
                    }
                })
                .collect();
            let s = summarize(&samples);
            let _ = writeln!(
                text,
                "{kind},{label},{},{},{trials},{},{hash}",
                fmt_num(s.mean),
                fmt_num(s.stderr),
                s.failures
            );
        }
    }
    Ok(RunOutput { text, failures })
}

/// BER and SINR of one trial with estimated and with perfect CSI.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DetectionSample {
    ber: f64,
    ber_perfect: f64,
    sinr: f64,
    sinr_perfect: f64,
}

fn detection_trial(
    config: &ExperimentConfig,
    snr_db: f64,
    seed: u64,
) -> Vec<std::result::Result<DetectionSample, String>> {
    let params = &config.params;
    let trial = match draw_trial(config, params, seed) {
        Ok(t) => t,
        Err(e) => return vec![Err(e.to_string()); config.pilots.len()],
    };
    let lambda = config.noise_var(snr_db);
    let amp = config.p_s.sqrt();
    // effective gains seen by unit-power symbols
    let perfect: Vec<UserChannel> = trial
        .channels
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for p in &mut c.paths {
                p.alpha *= amp;
            }
            c
        })
        .collect();
    config
        .pilots
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let err = |e: Error| e.to_string();
            let mut rng = kind_stream(seed, j);
            let layout = PilotLayout::new(kind, params).map_err(err)?;
            let (data, frames) = transmit(config, &layout, params, &mut rng).map_err(err)?;
            let cube = propagate(&frames, &trial.channels, params, config.noise_snr_db(snr_db), &mut rng)
                .map_err(err)?;
            let report = estimate(&cube, &layout, params, config.estimator);
            let csi = report
                .users
                .into_iter()
                .map(|r| r.map(|u| UserChannel { user: u.user, paths: u.paths }))
                .collect::<Result<Vec<_>>>()
                .map_err(err)?;
            let est = ber_ls(&data, &cube, &csi, &layout, params, lambda).map_err(err)?;
            let ideal = ber_ls(&data, &cube, &perfect, &layout, params, lambda).map_err(err)?;
            let sent = data.concat();
            Ok(DetectionSample {
                ber: est.ber(),
                ber_perfect: ideal.ber(),
                sinr: empirical_sinr(&sent, &est.equalized.concat()),
                sinr_perfect: empirical_sinr(&sent, &ideal.equalized.concat()),
            })
        })
        .collect()
}

fn detection_sweep(config: &ExperimentConfig) -> Result<RunOutput> {
    let trials = config.trials;
    let cells: Vec<Vec<std::result::Result<DetectionSample, String>>> = (0..config.snr_db.len() * trials)
        .into_par_iter()
        .map(|c| {
            let (pi, ti) = (c / trials, c % trials);
            detection_trial(config, config.snr_db[pi], cell_seed(config.seed, pi as u64, ti as u64))
        })
        .collect();

    let hash = config.hash();
    let mut text = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(text, "{}", config.kind.csv_header());
    for (j, &kind) in config.pilots.iter().enumerate() {
        let eta = overhead(kind, &config.params);
        for (pi, snr) in config.snr_db.iter().enumerate() {
            let samples: Vec<Option<DetectionSample>> = (0..trials)
                .map(|ti| match &cells[pi * trials + ti][j] {
                    Ok(v) => Some(*v),
                    Err(e) => {
                        failures.push(format!("{kind} point {snr} trial {ti}: {e}"));
                        None
                    }
                })
                .collect();
            let pick = |f: &dyn Fn(&DetectionSample) -> f64| -> Summary {
                summarize(&samples.iter().map(|s| s.as_ref().map(f)).collect::<Vec<_>>())
            };
            let (a, b) = if config.kind == ExperimentKind::BerVsSnr {
                (pick(&|s| s.ber), pick(&|s| s.ber_perfect))
            } else {
                (pick(&|s| se(eta, s.sinr)), pick(&|s| se(eta, s.sinr_perfect)))
            };
            let _ = write!(
                text,
                "{kind},{snr},{},{},{},{}",
                fmt_num(a.mean),
                fmt_num(a.stderr),
                fmt_num(b.mean),
                fmt_num(b.stderr)
            );
            if config.kind == ExperimentKind::SeVsSnr {
                let _ = write!(text, ",{}", fmt_num(eta));
            }
            let _ = writeln!(text, ",{trials},{},{hash}", a.failures);
        }
    }
    Ok(RunOutput { text, failures })
}

/// Closed-form coherence between the configured user pair over a grid of
/// Doppler differences and net delay offsets `l_t − l_s`.
pub fn coherence_map(config: &ExperimentConfig) -> Result<String> {
    let params = &config.params;
    let layout = PilotLayout::new(PilotKind::Csep, params)?;
    let (s, t) = (config.pair.0 - 1, config.pair.1 - 1);
    let span = (params.n_g - 1) as f64;
    let steps = config.coherence_steps as i64;
    let hash = config.hash();
    let mut text = String::new();
    let _ = writeln!(text, "{}", ExperimentKind::CoherenceMap.csv_header());
    let mg = params.m_g as i64;
    for i in -steps..=steps {
        let dnu = span * i as f64 / steps as f64;
        for dl in -(mg - 1)..=(mg - 1) {
            let ls = (-dl).max(0) as usize;
            let lt = (ls as i64 + dl) as usize;
            let mu = coherence_closed_form(
                PeakTap::new(0, dnu, ls),
                PeakTap::new(0, 0.0, lt),
                s,
                t,
                &layout,
                params,
            );
            let _ = writeln!(text, "{dnu},{dl},{},{hash}", fmt_num(mu));
        }
    }
    Ok(text)
}

/// Per-user region bounds of both layouts, the overheads and the coherence
/// admissibility test.
pub fn describe_layout(config: &ExperimentConfig) -> Result<String> {
    let params = &config.params;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "frame: M = {}, N = {}, M_CP = {}, M_g = {}, N_g = {}, M_p = {}, N_p = {}, K = {}, N_BS = {}, P = {}",
        params.m,
        params.n,
        params.m_cp,
        params.m_g,
        params.n_g,
        params.m_p,
        params.n_p,
        params.users,
        params.n_bs,
        params.paths
    );
    let _ = writeln!(
        text,
        "Doppler extent at {} km/h: {:.3} bins",
        config.v_max_kmh,
        max_doppler_taps(config.v_max_kmh / 3.6, params)
    );
    for kind in [PilotKind::Conventional, PilotKind::Csep] {
        params.check_fit(kind)?;
        let layout = PilotLayout::new(kind, params)?;
        let _ = writeln!(text);
        text.push_str(&layout.describe(params));
    }
    let eta_i = overhead(PilotKind::Conventional, params);
    let eta_o = overhead(PilotKind::Csep, params);
    let _ = writeln!(text);
    let _ = writeln!(text, "overhead: conventional η^i = {eta_i:.4}, csep η^o = {eta_o:.4}");
    let _ = writeln!(text, "ratio η^o/η^i = {:.4}", eta_o / eta_i);
    for eps in [1e-2, 1e-3] {
        let b = coherence_bound(params, params.users, eps);
        let _ = writeln!(
            text,
            "ε = {eps:.0e}: KM_p = {} {} {:.1}, {}; μ_max = {:.3e}",
            params.users * params.m_p,
            if b.admissible { "<" } else { "≥" },
            b.km_p_limit,
            if b.admissible { "admissible" } else { "not admissible" },
            b.mu_max
        );
    }
    if params.users > 1 {
        let layout = PilotLayout::new(PilotKind::Csep, params)?;
        let mu = max_cross_coherence(&layout, params, (params.n_g - 1) as f64, 20);
        let _ = writeln!(text, "max cross-user coherence (|Δν| ≤ N_g − 1): {mu:.3e}");
    }
    Ok(text)
}
