//! Random multi-user delay-Doppler-angle channels and their DDS response.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{guard_position, OtfsParams, SPEED_OF_LIGHT};
use crate::kernel::{dirichlet_xi, steering_element};

/// Margin keeping drawn fractional parts away from exactly ±1/2.
const FRACTION_MARGIN: f64 = 1e-6;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub alpha: Complex64,
    pub l_int: i64,
    /// Fractional delay in (−1/2, 1/2].
    pub iota: f64,
    pub k_int: i64,
    /// Fractional Doppler in (−1/2, 1/2].
    pub kappa: f64,
    /// Angle of arrival in radians.
    pub theta: f64,
}

impl PathParams {
    pub fn on_grid(alpha: Complex64, l_int: i64, k_int: i64, theta: f64) -> Self {
        PathParams {
            alpha,
            l_int,
            iota: 0.0,
            k_int,
            kappa: 0.0,
            theta,
        }
    }

    /// Delay in bins, `l + ι`.
    pub fn delay(&self) -> f64 {
        self.l_int as f64 + self.iota
    }

    /// Doppler in bins, `k + κ`.
    pub fn doppler(&self) -> f64 {
        self.k_int as f64 + self.kappa
    }

    /// Value of this path's DDS channel at guard bin `(k', l')` on antenna `antenna`.
    pub fn dds_kernel(&self, k: i64, l: i64, antenna: usize, params: &OtfsParams) -> Complex64 {
        self.alpha
            * steering_element(self.theta, antenna, params.d_over_lambda)
            * self.dd_response(k, l, params)
    }

    /// Antenna-independent part `Ξ_N(k'−k−κ)·Ξ_M(−(l'−l−ι))`.
    pub fn dd_response(&self, k: i64, l: i64, params: &OtfsParams) -> Complex64 {
        dirichlet_xi(params.n, k as f64 - self.doppler())
            * dirichlet_xi(params.m, -(l as f64 - self.delay()))
    }

    /// `Φ(l) = exp(j2π(k+κ)(M_CP + l − l_int − ι)/(N(M+M_CP)))` for absolute delay row `l`.
    pub fn phase_factor(&self, l: usize, params: &OtfsParams) -> Complex64 {
        let arg = 2.0 * PI * self.doppler() * (params.m_cp as f64 + l as f64 - self.delay())
            / params.phase_span();
        Complex64::from_polar(1.0, arg)
    }
}

/// All paths of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub user: usize,
    pub paths: Vec<PathParams>,
}

impl UserChannel {
    /// Checks the support bounds and the distinct-tap rule against `params`.
    pub fn validate(&self, params: &OtfsParams) -> Result<()> {
        let mut taps = HashSet::new();
        for (i, p) in self.paths.iter().enumerate() {
            if p.delay() < 0.0 || p.l_int < 0 || p.l_int >= params.m_g as i64 {
                return Err(Error::InvalidParameter(format!(
                    "path {i}: delay {:.3} outside guard [0, {})",
                    p.delay(),
                    params.m_g
                )));
            }
            if p.doppler().abs() > params.half_ng() as f64 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "path {i}: Doppler {:.3} outside ±{}",
                    p.doppler(),
                    params.half_ng()
                )));
            }
            if !taps.insert((p.l_int, p.k_int)) {
                return Err(Error::InvalidParameter(format!(
                    "path {i}: repeated tap (l={}, k={})",
                    p.l_int, p.k_int
                )));
            }
        }
        Ok(())
    }

    /// The DDS channel over the guard window, `N_BS × M_gN_g`.
    pub fn dds_matrix(&self, params: &OtfsParams) -> DMatrix<Complex64> {
        dds_matrix(&self.paths, params)
    }
}

/// Sum of the path kernels over the guard window, `N_BS × M_gN_g`.
pub fn dds_matrix(paths: &[PathParams], params: &OtfsParams) -> DMatrix<Complex64> {
    let atoms = params.guard_atoms();
    let mut h = DMatrix::zeros(params.n_bs, atoms);
    for path in paths {
        let dd: Vec<Complex64> = (0..atoms)
            .map(|q| {
                let (k, l) = guard_position(q, params.n_g);
                path.dd_response(k, l as i64, params)
            })
            .collect();
        for ant in 0..params.n_bs {
            let w = path.alpha * steering_element(path.theta, ant, params.d_over_lambda);
            for (q, v) in dd.iter().enumerate() {
                h[(ant, q)] += w * v;
            }
        }
    }
    h
}

/// Doppler extent in bins for a user moving at `v_max` m/s.
pub fn max_doppler_taps(v_max: f64, params: &OtfsParams) -> f64 {
    v_max * params.f_c / SPEED_OF_LIGHT * params.n as f64 * params.t_sym()
}

/// Draws one user's channel.
///
/// Delay taps are uniform over the guard, fractional parts uniform, total
/// Doppler bounded by both `max_doppler_taps(v_max)` and the Doppler guard,
/// angles uniform on (0, π) and gains `CN(0, 1/P)`.
pub fn sample_channel<R: Rng + ?Sized>(
    params: &OtfsParams,
    user: usize,
    v_max: f64,
    rng: &mut R,
) -> Result<UserChannel> {
    if !(v_max >= 0.0) {
        return Err(Error::InvalidParameter("v_max must be ≥ 0".into()));
    }
    let doppler_limit = max_doppler_taps(v_max, params).min(params.half_ng() as f64);
    let k_span = doppler_limit.round() as i64;
    let distinct_taps = params.m_g * (2 * k_span as usize + 1);
    if params.paths > distinct_taps {
        return Err(Error::InvalidParameter(format!(
            "P = {} paths cannot take distinct taps among {distinct_taps}",
            params.paths
        )));
    }
    let half = 0.5 - FRACTION_MARGIN;
    let gain_std = (0.5 / params.paths as f64).sqrt();
    let mut taps = HashSet::new();
    let mut paths = Vec::with_capacity(params.paths);
    while paths.len() < params.paths {
        let l_int = rng.gen_range(0..params.m_g as i64);
        let iota = if l_int == 0 {
            rng.gen_range(0.0..=half)
        } else {
            rng.gen_range(-half..=half)
        };
        let (k_int, kappa) = if doppler_limit < FRACTION_MARGIN {
            (0, 0.0)
        } else {
            loop {
                let k = rng.gen_range(-k_span..=k_span);
                let kappa = rng.gen_range(-half..=half);
                if (k as f64 + kappa).abs() <= doppler_limit {
                    break (k, kappa);
                }
            }
        };
        if !taps.insert((l_int, k_int)) {
            continue;
        }
        let theta = loop {
            let t: f64 = rng.gen_range(0.0..PI);
            if t > 0.0 {
                break t;
            }
        };
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        paths.push(PathParams {
            alpha: Complex64::new(re, im) * gain_std,
            l_int,
            iota,
            k_int,
            kappa,
            theta,
        });
    }
    Ok(UserChannel { user, paths })
}

/// Text fixture: one path per line `u l_int iota k_int kappa theta re im`.
pub fn channels_to_text(channels: &[UserChannel]) -> String {
    let mut out = String::from("# u l_int iota k_int kappa theta re_alpha im_alpha\n");
    for ch in channels {
        for p in &ch.paths {
            let _ = writeln!(
                out,
                "{} {} {:e} {} {:e} {:e} {:e} {:e}",
                ch.user, p.l_int, p.iota, p.k_int, p.kappa, p.theta, p.alpha.re, p.alpha.im
            );
        }
    }
    out
}

pub fn channels_from_text(text: &str) -> Result<Vec<UserChannel>> {
    let mut channels: Vec<UserChannel> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let int = |s: &str| s.parse::<i64>().map_err(|_| bad("bad integer"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let user = int(f[0])?;
        if user < 0 {
            return Err(bad("negative user"));
        }
        let path = PathParams {
            l_int: int(f[1])?,
            iota: real(f[2])?,
            k_int: int(f[3])?,
            kappa: real(f[4])?,
            theta: real(f[5])?,
            alpha: Complex64::new(real(f[6])?, real(f[7])?),
        };
        match channels.iter_mut().find(|c| c.user == user as usize) {
            Some(c) => c.paths.push(path),
            None => channels.push(UserChannel {
                user: user as usize,
                paths: vec![path],
            }),
        }
    }
    Ok(channels)
}
