//! Column coherence of the CSEP dictionary and link-level metrics
//! (NMSE, LS-detected 16-QAM BER, spectral efficiency).

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::channel::{PathParams, UserChannel};
use crate::error::{Error, Result};
use crate::estimator::user_nmse;
use crate::geometry::{guard_index, OtfsParams};
use crate::kernel::{dirichlet_xi, dirichlet_xi_abs, steering_element};
use crate::linalg::CMatrix;
use crate::modem::ReceivedCube;
use crate::pilots::PilotLayout;

/// Largest `M·N` accepted by the LS detector.
pub const DESK_SCALE_LIMIT: usize = 4096;
/// Relative gradient norm at which CGLS stops.
pub const CGLS_TOL: f64 = 1e-10;
pub const CGLS_MAX_ITERS: usize = 500;

/// Peak position of a path in the delay-Doppler plane: integer Doppler bin
/// `k`, fractional part `kappa` and integer delay bin `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakTap {
    pub k: i64,
    pub kappa: f64,
    pub l: usize,
}

impl PeakTap {
    pub fn new(k: i64, kappa: f64, l: usize) -> Self {
        PeakTap { k, kappa, l }
    }

    pub fn doppler(&self) -> f64 {
        self.k as f64 + self.kappa
    }
}

fn user_shift(layout: &PilotLayout, u: usize) -> i64 {
    match layout.kind {
        crate::geometry::PilotKind::Conventional => 0,
        crate::geometry::PilotKind::Csep => (u * layout.m_p) as i64,
    }
}

/// Closed-form coherence between the peak columns of path `tap_s` of user
/// `s` and path `tap_t` of user `t` (users 0-based):
/// `|sin(πLΔν/D)| / |L sin(π(Δν/D + Δl/L))|` with `L = KM_p`,
/// `D = N(M+M_CP)`, `Δν = ν_s − ν_t` and `Δl = (l_t − l_s) + (l_pt − l_ps)`.
///
/// Valid when the integer Dopplers are congruent modulo `N_p`; otherwise the
/// Doppler factors of the two columns are orthogonal and the coherence is 0.
pub fn coherence_closed_form(
    tap_s: PeakTap,
    tap_t: PeakTap,
    s: usize,
    t: usize,
    layout: &PilotLayout,
    params: &OtfsParams,
) -> f64 {
    let len = layout.pattern_period();
    let dnu = tap_s.doppler() - tap_t.doppler();
    let dl = (tap_t.l as i64 - tap_s.l as i64) + (user_shift(layout, t) - user_shift(layout, s));
    dirichlet_xi_abs(len, len as f64 * dnu / params.phase_span() + dl as f64)
}

/// Peak column of user `u`'s dictionary for `tap`: the measurement column at
/// `(k, l)` weighted by the path's own delay-Doppler phase.
pub fn peak_column(tap: PeakTap, u: usize, layout: &PilotLayout, params: &OtfsParams) -> Result<Vec<Complex64>> {
    let half = params.half_ng();
    if tap.k < -half || tap.k > half || tap.l >= params.m_g {
        return Err(Error::InvalidParameter(format!(
            "tap (k = {}, l = {}) outside the guard window",
            tap.k, tap.l
        )));
    }
    let q = guard_index(tap.k, tap.l, params.n_g);
    let span = params.phase_span();
    let col = layout.measurement_column(u, q);
    Ok(col
        .into_iter()
        .enumerate()
        .map(|(p, v)| {
            let (_, l) = layout.obs_position(u, p);
            let arg = 2.0 * PI * tap.doppler() * (params.m_cp as f64 + l as f64 - tap.l as f64) / span;
            v * Complex64::from_polar(1.0, arg)
        })
        .collect())
}

/// Coherence `|c_tᴴ c_s|` computed from explicitly built peak columns.
pub fn column_coherence(
    tap_s: PeakTap,
    tap_t: PeakTap,
    s: usize,
    t: usize,
    layout: &PilotLayout,
    params: &OtfsParams,
) -> Result<f64> {
    let cs = peak_column(tap_s, s, layout, params)?;
    let ct = peak_column(tap_t, t, layout, params)?;
    Ok(cs.iter().zip(&ct).map(|(a, b)| b.conj() * a).sum::<Complex64>().norm())
}

/// Worst-case coherence and the admissibility test for a user count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceBound {
    /// `KM_p < εN(M+M_CP)/N_g`.
    pub admissible: bool,
    /// Coherence at `Δν = N_g` and a unit net delay offset.
    pub mu_max: f64,
    /// Largest `KM_p` that passes the test.
    pub km_p_limit: f64,
}

/// Maximum cross-user coherence for `users` users sharing the CSEP block.
pub fn coherence_bound(params: &OtfsParams, users: usize, epsilon: f64) -> CoherenceBound {
    let len = (users * params.m_p) as f64;
    let span = params.phase_span();
    let ng = params.n_g as f64;
    let num = (PI * len * ng / span).sin().abs();
    let den = (len * (PI * (ng / span - 1.0 / len)).sin()).abs();
    let limit = epsilon * span / ng;
    CoherenceBound {
        admissible: len < limit,
        mu_max: if den == 0.0 { 1.0 } else { num / den },
        km_p_limit: limit,
    }
}

/// Largest closed-form coherence between any two distinct users' peak
/// columns, with Doppler differences on a uniform grid of `steps` points
/// per side in `[−dnu_max, dnu_max]` and every pair of guard delays.
pub fn max_cross_coherence(layout: &PilotLayout, params: &OtfsParams, dnu_max: f64, steps: usize) -> f64 {
    let mut best: f64 = 0.0;
    let steps = steps.max(1);
    for s in 0..layout.users {
        for t in 0..layout.users {
            if s == t {
                continue;
            }
            for i in -(steps as i64)..=(steps as i64) {
                let dnu = dnu_max * i as f64 / steps as f64;
                for ls in 0..params.m_g {
                    for lt in 0..params.m_g {
                        let mu = coherence_closed_form(
                            PeakTap::new(0, dnu, ls),
                            PeakTap::new(0, 0.0, lt),
                            s,
                            t,
                            layout,
                            params,
                        );
                        best = best.max(mu);
                    }
                }
            }
        }
    }
    best
}

/// Worst adjacent-user coherence at `Δν = N_g` over all guard delay pairs.
pub fn worst_sign_coherence(layout: &PilotLayout, params: &OtfsParams) -> f64 {
    let mut best: f64 = 0.0;
    let ng = params.n_g as f64;
    for ls in 0..params.m_g {
        for lt in 0..params.m_g {
            // user 1 shifted ahead of user 0: opposite signs of Δν and Δl
            let mu = coherence_closed_form(
                PeakTap::new(0, ng, ls),
                PeakTap::new(0, 0.0, lt),
                1.min(layout.users - 1),
                0,
                layout,
                params,
            );
            best = best.max(mu);
        }
    }
    best
}

/// Mean over users of `‖Ĥ_u − H_u‖²_F / ‖H_u‖²_F`.
pub fn nmse(estimates: &[CMatrix], truths: &[CMatrix]) -> Result<f64> {
    if estimates.len() != truths.len() || truths.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} users",
            estimates.len(),
            truths.len()
        )));
    }
    let mut sum = 0.0;
    for (e, h) in estimates.iter().zip(truths) {
        sum += user_nmse(e, h)?;
    }
    Ok(sum / truths.len() as f64)
}

const QAM_LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
// Gray labels of the four levels, left to right: 00, 01, 11, 10
const QAM_GRAY: [u8; 4] = [0b00, 0b01, 0b11, 0b10];

fn qam_scale() -> f64 {
    1.0 / 10f64.sqrt()
}

fn level_of(bits: u8) -> f64 {
    let idx = QAM_GRAY.iter().position(|&g| g == bits & 0b11).expect("2-bit label");
    QAM_LEVELS[idx]
}

fn bits_of(x: f64) -> u8 {
    let idx = if x < -2.0 {
        0
    } else if x < 0.0 {
        1
    } else if x < 2.0 {
        2
    } else {
        3
    };
    QAM_GRAY[idx]
}

/// Unit-energy Gray-mapped 16-QAM symbol for the low four bits of `bits`
/// (high pair on the in-phase axis).
pub fn qam16_map(bits: u8) -> Complex64 {
    Complex64::new(level_of(bits >> 2), level_of(bits)) * qam_scale()
}

/// Nearest-point hard decision returning the four bits.
pub fn qam16_demap(x: Complex64) -> u8 {
    let s = 1.0 / qam_scale();
    (bits_of(x.re * s) << 2) | bits_of(x.im * s)
}

/// `count` independent uniformly drawn 16-QAM symbols.
pub fn random_qam16<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<Complex64> {
    (0..count).map(|_| qam16_map(rng.gen_range(0..16u8))).collect()
}

/// Bit errors between transmitted symbols and hard decisions on `decided`.
pub fn bit_errors(sent: &[Complex64], decided: &[Complex64]) -> usize {
    sent.iter()
        .zip(decided)
        .map(|(&a, &b)| (qam16_demap(a) ^ qam16_demap(b)).count_ones() as usize)
        .sum()
}

/// `(1 − η)·log2(1 + SINR)`.
pub fn se(eta: f64, sinr: f64) -> f64 {
    (1.0 - eta) * (1.0 + sinr).log2()
}

/// Post-equalization `Σ|x|² / Σ|x̂ − x|²` (infinite for exact recovery).
pub fn empirical_sinr(sent: &[Complex64], equalized: &[Complex64]) -> f64 {
    let sig: f64 = sent.iter().map(|v| v.norm_sqr()).sum();
    let err: f64 = sent.iter().zip(equalized).map(|(a, b)| (b - a).norm_sqr()).sum();
    if err == 0.0 {
        f64::INFINITY
    } else {
        sig / err
    }
}

struct Fft2 {
    n: usize,
    m: usize,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            m,
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
        }
    }

    fn apply(&self, grid: &CMatrix, along_n: &dyn Fft<f64>, along_m: &dyn Fft<f64>) -> CMatrix {
        // column-major: each column (length N) is contiguous
        let mut cols = grid.clone();
        along_n.process(cols.as_mut_slice());
        let mut rows = cols.transpose();
        along_m.process(rows.as_mut_slice());
        rows.transpose()
    }

    fn forward(&self, grid: &CMatrix) -> CMatrix {
        self.apply(grid, self.fwd_n.as_ref(), self.fwd_m.as_ref())
    }

    fn inverse(&self, grid: &CMatrix) -> CMatrix {
        let scale = Complex64::new(1.0 / (self.n * self.m) as f64, 0.0);
        self.apply(grid, self.inv_n.as_ref(), self.inv_m.as_ref()) * scale
    }
}

struct PathOperator {
    user: usize,
    /// 2-D DFT of the path's delay-Doppler kernel.
    spectrum: CMatrix,
    /// Per-delay phase `Φ(l)`.
    phase: Vec<Complex64>,
    /// `α·a(θ)` per antenna.
    weights: Vec<Complex64>,
}

/// The DD-domain map from users' frames to the received cube, applied as
/// per-path circular convolutions followed by delay-dependent phases.
pub struct ChannelOperator {
    fft: Fft2,
    users: usize,
    n_bs: usize,
    paths: Vec<PathOperator>,
}

impl ChannelOperator {
    pub fn new(channels: &[UserChannel], params: &OtfsParams) -> Self {
        let (n, m) = (params.n, params.m);
        let fft = Fft2::new(n, m);
        let users = channels.iter().map(|c| c.user + 1).max().unwrap_or(0);
        let paths = channels
            .iter()
            .flat_map(|ch| ch.paths.iter().map(move |p| (ch.user, p)))
            .map(|(user, p): (usize, &PathParams)| {
                let kernel = CMatrix::from_fn(n, m, |kr, l| {
                    dirichlet_xi(n, kr as f64 - p.doppler()) * dirichlet_xi(m, p.delay() - l as f64)
                });
                PathOperator {
                    user,
                    spectrum: fft.forward(&kernel),
                    phase: (0..m).map(|l| p.phase_factor(l, params)).collect(),
                    weights: (0..params.n_bs)
                        .map(|a| p.alpha * steering_element(p.theta, a, params.d_over_lambda))
                        .collect(),
                }
            })
            .collect();
        ChannelOperator {
            fft,
            users,
            n_bs: params.n_bs,
            paths,
        }
    }

    /// Noiseless received grids, one per antenna, for per-user frames.
    pub fn apply(&self, frames: &[CMatrix]) -> Vec<CMatrix> {
        let (n, m) = (self.fft.n, self.fft.m);
        let spectra: Vec<Option<CMatrix>> = (0..self.users)
            .map(|u| frames.get(u).map(|f| self.fft.forward(f)))
            .collect();
        let mut out = vec![CMatrix::zeros(n, m); self.n_bs];
        for path in &self.paths {
            let Some(Some(x)) = spectra.get(path.user) else { continue };
            let mut z = self.fft.inverse(&path.spectrum.component_mul(x));
            for (l, ph) in path.phase.iter().enumerate() {
                for v in z.column_mut(l).iter_mut() {
                    *v *= ph;
                }
            }
            for (acc, w) in out.iter_mut().zip(&path.weights) {
                acc.zip_apply(&z, |a, v| *a += w * v);
            }
        }
        out
    }

    /// Adjoint of [`apply`](Self::apply): per-user grids from antenna grids.
    pub fn adjoint(&self, grids: &[CMatrix]) -> Vec<CMatrix> {
        let (n, m) = (self.fft.n, self.fft.m);
        let mut out = vec![CMatrix::zeros(n, m); self.users];
        for path in &self.paths {
            let mut r = CMatrix::zeros(n, m);
            for (g, w) in grids.iter().zip(&path.weights) {
                let wc = w.conj();
                r.zip_apply(g, |a, v| *a += wc * v);
            }
            for (l, ph) in path.phase.iter().enumerate() {
                let pc = ph.conj();
                for v in r.column_mut(l).iter_mut() {
                    *v *= pc;
                }
            }
            let back = self
                .fft
                .inverse(&path.spectrum.map(|s| s.conj()).component_mul(&self.fft.forward(&r)));
            out[path.user] += back;
        }
        out
    }
}

/// Outcome of one LS detection.
#[derive(Debug, Clone, PartialEq)]
pub struct LsDetection {
    /// Soft estimates on the data cells, per user.
    pub equalized: Vec<Vec<Complex64>>,
    pub bit_errors: usize,
    pub bits: usize,
    pub iterations: usize,
}

impl LsDetection {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Ridge-regularized LS detection of every user's data symbols.
///
/// The known pilots are removed with the same `csi` used for detection, then
/// `min ‖Ax − b‖² + λ‖x‖²` over the data cells of all users is solved by
/// CGLS. `sent` holds each user's transmitted data symbols in
/// [`PilotLayout::data_cells`] order and is used only for error counting.
pub fn ber_ls(
    sent: &[Vec<Complex64>],
    cube: &ReceivedCube,
    csi: &[UserChannel],
    layout: &PilotLayout,
    params: &OtfsParams,
    lambda: f64,
) -> Result<LsDetection> {
    let cells = params.grid_cells();
    if cells > DESK_SCALE_LIMIT {
        return Err(Error::DeskScale {
            cells,
            limit: DESK_SCALE_LIMIT,
        });
    }
    if sent.len() != layout.users || cube.n_bs() != params.n_bs {
        return Err(Error::DimensionMismatch(format!(
            "{} users' symbols and {} antennas for K = {}, N_BS = {}",
            sent.len(),
            cube.n_bs(),
            layout.users,
            params.n_bs
        )));
    }
    let data_cells = layout.data_cells(params);
    if let Some(bad) = sent.iter().find(|s| s.len() != data_cells.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{} data symbols for {} data cells",
            bad.len(),
            data_cells.len()
        )));
    }
    let mut channels: Vec<UserChannel> = csi.to_vec();
    channels.retain(|c| c.user < layout.users);
    // keep every user in the operator even without paths
    if !channels.iter().any(|c| c.user + 1 == layout.users) {
        channels.push(UserChannel {
            user: layout.users - 1,
            paths: Vec::new(),
        });
    }
    let op = ChannelOperator::new(&channels, params);
    let users = layout.users;

    let pilots: Vec<CMatrix> = (0..users).map(|u| layout.pilot_frame(u, params).grid).collect();
    let known = op.apply(&pilots);
    let b: Vec<CMatrix> = cube.antennas.iter().zip(&known).map(|(y, p)| y - p).collect();

    let d = data_cells.len();
    let embed = |x: &[Complex64]| -> Vec<CMatrix> {
        (0..users)
            .map(|u| {
                let mut g = CMatrix::zeros(params.n, params.m);
                for (&(row, l), v) in data_cells.iter().zip(&x[u * d..(u + 1) * d]) {
                    g[(row, l)] = *v;
                }
                g
            })
            .collect()
    };
    let restrict = |grids: &[CMatrix]| -> Vec<Complex64> {
        grids
            .iter()
            .flat_map(|g| data_cells.iter().map(move |&(row, l)| g[(row, l)]))
            .collect()
    };
    let flat = |grids: &[CMatrix]| -> Vec<Complex64> { grids.iter().flat_map(|g| g.iter().copied()).collect() };

    let unknowns = users * d;
    let mut x = vec![Complex64::new(0.0, 0.0); unknowns];
    let mut r = flat(&b);
    let mut s = restrict(&op.adjoint(&b));
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;
    let mut iterations = 0;
    while iterations < CGLS_MAX_ITERS && gamma > CGLS_TOL * CGLS_TOL * gamma0 && gamma > 0.0 {
        iterations += 1;
        let q = flat(&op.apply(&embed(&p)));
        let delta = dot(&q, &q) + lambda * dot(&p, &p);
        if delta <= 0.0 {
            break;
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        let r_grids: Vec<CMatrix> = r
            .chunks(params.grid_cells())
            .map(|c| CMatrix::from_column_slice(params.n, params.m, c))
            .collect();
        s = restrict(&op.adjoint(&r_grids));
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= xi * lambda;
        }
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
    }

    let equalized: Vec<Vec<Complex64>> = x.chunks(d).map(|c| c.to_vec()).collect();
    let bit_errors = sent
        .iter()
        .zip(&equalized)
        .map(|(tx, rx)| bit_errors(tx, rx))
        .sum();
    Ok(LsDetection {
        equalized,
        bit_errors,
        bits: 4 * unknowns,
        iterations,
    })
}

/// Hard-decision constellation point nearest to `x`.
pub fn qam16_slice(x: Complex64) -> Complex64 {
    qam16_map(qam16_demap(x))
}

/// In-phase/quadrature levels of the unit-energy constellation.
pub fn qam16_constellation() -> Vec<Complex64> {
    (0..16u8).map(qam16_map).collect()
}
