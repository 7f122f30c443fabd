//! Channel estimation for the conventional and CSEP pilot layouts.
//!
//! Both pipelines combine a subspace angle estimate over the array, a
//! simultaneous OMP search over the delay-Doppler guard dictionary and a
//! magnitude-ratio refinement of the fractional taps. An optional clean-up
//! then re-estimates each path against the pilot residual of the others,
//! which separates paths that share an angle but not a delay-Doppler tap.

use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::channel::{dds_matrix, PathParams, UserChannel};
use crate::error::{Error, Result};
use crate::geometry::{guard_index, guard_position, OtfsParams, PilotKind};
use crate::kernel::{dirichlet_xi, steering_vector};
use crate::linalg::{condition_number, eigenvalues, fro2, hermitian_eig_desc, pinv, CMatrix};
use crate::modem::ReceivedCube;
use crate::pilots::{PilotLayout, ResponseModel};

/// Smallest admissible `λ_P/λ_1` for the signal subspace.
pub const SUBSPACE_RATIO_MIN: f64 = 1e-10;
/// Fixed-point iterations of the leakage compensation.
pub const LEAKAGE_ITERS: usize = 30;
/// Neighbour magnitudes below this fraction of the peak count as zero.
pub const NEIGHBOUR_FLOOR: f64 = 1e-12;
/// Largest admissible condition number of the estimated steering matrix.
pub const STEERING_COND_MAX: f64 = 1e8;
/// Relative residual drop a clean-up sweep must achieve to be kept.
pub const CLEANUP_MIN_GAIN: f64 = 1e-9;
/// Absolute tolerance of the clean-up line searches.
const LINE_TOL: f64 = 1e-9;
/// Line-search half-width around a warm start, as a fraction of a grid step.
const WARM_BRACKET: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Passes with the refined phase matrix after the coarse pass.
    pub n_rounds: usize,
    /// Half-width of the neighbourhood added around each selected atom.
    pub radius: usize,
    /// Remove each path's own pilot leakage before the ratio refinement in
    /// the refined passes.
    pub compensate_leakage: bool,
    /// Joint re-estimation sweeps run after the pipeline (0 disables).
    pub cleanup_sweeps: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            n_rounds: 2,
            radius: 1,
            compensate_leakage: true,
            cleanup_sweeps: 2,
        }
    }
}

/// One user's estimated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEstimate {
    pub user: usize,
    pub paths: Vec<PathParams>,
    /// Reconstructed DDS channel over the guard window, `N_BS × M_gN_g`.
    pub h_dds: CMatrix,
    /// Residual norm after each pass (coarse first).
    pub residual_norms: Vec<f64>,
    /// SOMP iterations run in total.
    pub iterations: usize,
}

/// Estimates for every user; failures are kept per user.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub kind: PilotKind,
    pub users: Vec<Result<UserEstimate>>,
}

/// Support and least-squares fit returned by [`somp`].
#[derive(Debug, Clone, PartialEq)]
pub struct SompFit {
    /// Selected guard atoms, ascending.
    pub support: Vec<usize>,
    /// `|support| × L` coefficients, rows in `support` order.
    pub coeffs: CMatrix,
    /// Residual Frobenius norm after each iteration.
    pub residual_norms: Vec<f64>,
}

impl SompFit {
    /// Coefficients of observation column `col` scattered onto all `atoms`.
    pub fn dense(&self, col: usize, atoms: usize) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); atoms];
        for (i, &q) in self.support.iter().enumerate() {
            h[q] = self.coeffs[(i, col)];
        }
        h
    }
}

/// Delay-Doppler part of a refined path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapEstimate {
    pub k_int: i64,
    pub kappa: f64,
    pub l_int: i64,
    pub iota: f64,
    pub alpha: Complex64,
}

impl TapEstimate {
    pub fn doppler(&self) -> f64 {
        self.k_int as f64 + self.kappa
    }

    pub fn delay(&self) -> f64 {
        self.l_int as f64 + self.iota
    }
}

/// `N_BS × obs_len` matrix of user `u`'s pilot observations.
pub fn extract_pilot_observations(cube: &ReceivedCube, layout: &PilotLayout, u: usize) -> Result<CMatrix> {
    let (nb, n, m) = cube.dims();
    if u >= layout.users {
        return Err(Error::InvalidParameter(format!("user {u} of {}", layout.users)));
    }
    if layout.obs_start(u) + layout.obs_width() > m || layout.band_rows > n {
        return Err(Error::DimensionMismatch(format!(
            "pilot region of user {u} outside the {n}×{m} grid"
        )));
    }
    Ok(CMatrix::from_fn(nb, layout.obs_len(), |ant, p| {
        let (k, l) = layout.obs_position(u, p);
        cube.at(ant, k, l)
    }))
}

/// Shift-invariance angle estimates from the row space of `y` (`N_BS × m`).
pub fn esprit_aoa(y: &CMatrix, paths: usize, d_over_lambda: f64) -> Result<Vec<f64>> {
    let nb = y.nrows();
    if paths == 0 || nb <= paths {
        return Err(Error::InvalidParameter(format!(
            "ESPRIT needs N_BS > P (got {nb} ≤ {paths})"
        )));
    }
    let (vals, vecs) = hermitian_eig_desc(&(y * y.adjoint()));
    let ratio = if vals[0] > 0.0 { vals[paths - 1] / vals[0] } else { 0.0 };
    if !(ratio >= SUBSPACE_RATIO_MIN) {
        return Err(Error::DegenerateSubspace {
            ratio,
            threshold: SUBSPACE_RATIO_MIN,
        });
    }
    let us = vecs.columns(0, paths);
    let upper = us.rows(0, nb - 1).into_owned();
    let lower = us.rows(1, nb - 1).into_owned();
    let rotation = pinv(&upper) * lower;
    let scale = 2.0 * PI * d_over_lambda;
    Ok(eigenvalues(&rotation)?
        .into_iter()
        .map(|z| (z.arg() / scale).clamp(-1.0, 1.0).acos())
        .collect())
}

/// Steering matrix `[a(θ_1), …, a(θ_P)]`.
pub fn steering_matrix(angles: &[f64], n_bs: usize, d_over_lambda: f64) -> CMatrix {
    let mut a = CMatrix::zeros(n_bs, angles.len());
    for (i, &t) in angles.iter().enumerate() {
        for (n, v) in steering_vector(t, n_bs, d_over_lambda).into_iter().enumerate() {
            a[(n, i)] = v;
        }
    }
    a
}

/// `(ÂᴴÂ)⁻¹Âᴴ Y`: one row per angle.
pub fn spatial_project(y: &CMatrix, angles: &[f64], d_over_lambda: f64) -> Result<CMatrix> {
    let a = steering_matrix(angles, y.nrows(), d_over_lambda);
    let cond = condition_number(&a);
    if !(cond <= STEERING_COND_MAX) {
        return Err(Error::NearCollinearAngles { cond });
    }
    Ok(pinv(&a) * y)
}

/// Guard atoms within `radius` of `q` in both delay and Doppler.
pub fn neighbourhood(q: usize, radius: usize, n_g: usize, m_g: usize) -> Vec<usize> {
    let (k, l) = guard_position(q, n_g);
    let half = (n_g / 2) as i64;
    let r = radius as i64;
    let mut out = Vec::new();
    for dl in -r..=r {
        let ll = l as i64 + dl;
        if ll < 0 || ll >= m_g as i64 {
            continue;
        }
        for dk in -r..=r {
            let kk = k + dk;
            if kk.abs() <= half {
                out.push(guard_index(kk, ll as usize, n_g));
            }
        }
    }
    out
}

/// Simultaneous OMP over the columns of `y` (`rows × L`).
///
/// Each iteration adds the atom with the largest summed squared correlation
/// against the residual, plus its `radius` neighbourhood, then refits by
/// least squares over the whole support.
pub fn somp(
    dict: &CMatrix,
    y: &CMatrix,
    iterations: usize,
    radius: usize,
    n_g: usize,
    m_g: usize,
) -> Result<SompFit> {
    let atoms = dict.ncols();
    if dict.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} rows, observations {}",
            dict.nrows(),
            y.nrows()
        )));
    }
    if atoms != n_g * m_g {
        return Err(Error::DimensionMismatch(format!(
            "{atoms} atoms for a {m_g}×{n_g} guard"
        )));
    }
    if iterations == 0 || iterations > atoms {
        return Err(Error::SupportOverflow {
            support: iterations,
            columns: atoms,
        });
    }
    let mut support = BTreeSet::new();
    let mut residual = y.clone();
    let mut coeffs = CMatrix::zeros(0, y.ncols());
    let mut norms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let corr = dict.adjoint() * &residual;
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for q in 0..atoms {
            if support.contains(&q) {
                continue;
            }
            let score: f64 = corr.row(q).iter().map(|v| v.norm_sqr()).sum();
            if score > best_score {
                best_score = score;
                best = Some(q);
            }
        }
        let Some(best) = best else { break };
        support.extend(neighbourhood(best, radius, n_g, m_g));
        let cols: Vec<usize> = support.iter().copied().collect();
        if cols.len() > dict.nrows() {
            return Err(Error::SupportOverflow {
                support: cols.len(),
                columns: dict.nrows(),
            });
        }
        let sub = dict.select_columns(&cols);
        coeffs = pinv(&sub) * y;
        residual = y - &sub * &coeffs;
        norms.push(fro2(&residual).sqrt());
    }
    Ok(SompFit {
        support: support.into_iter().collect(),
        coeffs,
        residual_norms: norms,
    })
}

/// Integer peak, fractional offsets and gain of one path from its guard
/// coefficients `h` (length `M_gN_g`), searching the peak among `window`.
///
/// The fractional part points toward the stronger neighbour with magnitude
/// `|h'|/(|h|+|h'|)`; the gain divides the peak by the kernel value at the
/// estimated offsets.
pub fn refine_path(h: &[Complex64], window: &[usize], params: &OtfsParams) -> Result<TapEstimate> {
    refine_sided(h, window, params, None)
}

/// [`refine_path`] with the neighbour side optionally forced per dimension
/// (`(doppler_side, delay_side)`, each `±1`).
fn refine_sided(
    h: &[Complex64],
    window: &[usize],
    params: &OtfsParams,
    sides: Option<(i64, i64)>,
) -> Result<TapEstimate> {
    let n_g = params.n_g;
    let peak = window
        .iter()
        .copied()
        .fold(None::<usize>, |best, q| match best {
            Some(b) if h[b].norm() >= h[q].norm() => Some(b),
            _ => Some(q),
        })
        .ok_or(Error::NoPath)?;
    let peak_mag = h[peak].norm();
    if !(peak_mag > 0.0) {
        return Err(Error::NoPath);
    }
    let (k, l) = guard_position(peak, n_g);
    let half = params.half_ng();
    let floor = NEIGHBOUR_FLOOR * peak_mag;
    let at = |kk: i64, ll: i64| -> f64 {
        if kk.abs() > half || ll < 0 || ll >= params.m_g as i64 {
            return 0.0;
        }
        let v = h[guard_index(kk, ll as usize, n_g)].norm();
        if v > floor {
            v
        } else {
            0.0
        }
    };
    let fraction = |minus: f64, plus: f64, side: Option<i64>| -> f64 {
        let side = side.unwrap_or(if plus >= minus { 1 } else { -1 });
        let v = if side > 0 { plus } else { minus };
        if v == 0.0 {
            0.0
        } else {
            side as f64 * v / (peak_mag + v)
        }
    };
    let kappa = fraction(at(k - 1, l as i64), at(k + 1, l as i64), sides.map(|s| s.0));
    let iota = fraction(at(k, l as i64 - 1), at(k, l as i64 + 1), sides.map(|s| s.1));
    let kernel = dirichlet_xi(params.n, -kappa) * dirichlet_xi(params.m, iota);
    Ok(TapEstimate {
        k_int: k,
        kappa,
        l_int: l as i64,
        iota,
        alpha: h[peak] / kernel,
    })
}

/// Least-squares coefficients on `support` (scattered over all atoms) that
/// the estimated path alone would produce.
fn predicted_coeffs(
    tap: &TapEstimate,
    support: &[usize],
    sub_pinv: &CMatrix,
    model: &ResponseModel,
    params: &OtfsParams,
) -> Vec<Complex64> {
    let response = model.response(tap.doppler(), tap.delay());
    let y = CMatrix::from_iterator(response.len(), 1, response.into_iter().map(|v| v * tap.alpha));
    let fitted = sub_pinv * y;
    let mut out = vec![Complex64::new(0.0, 0.0); params.guard_atoms()];
    for (i, &q) in support.iter().enumerate() {
        out[q] = fitted[(i, 0)];
    }
    out
}

/// Fixed-point refinement with the estimated path's own pilot leakage
/// removed from `h`.
///
/// Leakage is the gap between the predicted coefficients and the ideal
/// kernel samples. Small fractional offsets leave two self-consistent
/// neighbour choices, so every side combination is iterated and the one
/// whose prediction best fits `h` on the support wins.
fn refine_compensated(
    h: &[Complex64],
    window: &[usize],
    support: &[usize],
    sub_pinv: &CMatrix,
    model: &ResponseModel,
    params: &OtfsParams,
) -> Result<TapEstimate> {
    let mut best: Option<(f64, TapEstimate)> = None;
    for sides in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        let mut tap = refine_sided(h, window, params, Some(sides))?;
        let mut predicted = predicted_coeffs(&tap, support, sub_pinv, model, params);
        for _ in 0..LEAKAGE_ITERS {
            let corrected: Vec<Complex64> = (0..h.len())
                .map(|q| {
                    if !support.contains(&q) {
                        return h[q];
                    }
                    let (k, l) = guard_position(q, params.n_g);
                    let ideal = tap.alpha
                        * dirichlet_xi(params.n, k as f64 - tap.doppler())
                        * dirichlet_xi(params.m, tap.delay() - l as f64);
                    h[q] - (predicted[q] - ideal)
                })
                .collect();
            let next = refine_sided(&corrected, window, params, Some(sides))?;
            let step = (next.doppler() - tap.doppler()).abs()
                + (next.delay() - tap.delay()).abs()
                + (next.alpha - tap.alpha).norm();
            tap = next;
            predicted = predicted_coeffs(&tap, support, sub_pinv, model, params);
            if step < 1e-13 {
                break;
            }
        }
        let misfit: f64 = support.iter().map(|&q| (h[q] - predicted[q]).norm_sqr()).sum();
        if best.as_ref().map_or(true, |(m, _)| misfit < *m) {
            best = Some((misfit, tap));
        }
    }
    Ok(best.expect("four candidates").1)
}

fn with_angle(t: TapEstimate, theta: f64) -> PathParams {
    PathParams {
        alpha: t.alpha,
        l_int: t.l_int,
        iota: t.iota,
        k_int: t.k_int,
        kappa: t.kappa,
        theta,
    }
}

/// Pilot-region residual `‖Y − Σ α a(θ) rᵀ‖²` of a path set.
fn pilot_residual(y: &CMatrix, paths: &[PathParams], model: &ResponseModel, d_over_lambda: f64) -> f64 {
    let mut r = y.clone();
    for p in paths {
        subtract_path(&mut r, p, &model.response(p.doppler(), p.delay()), d_over_lambda);
    }
    fro2(&r)
}

fn subtract_path(r: &mut CMatrix, p: &PathParams, resp: &[Complex64], d_over_lambda: f64) {
    let a = steering_vector(p.theta, r.nrows(), d_over_lambda);
    for (ant, av) in a.iter().enumerate() {
        let w = p.alpha * av;
        for (col, rv) in resp.iter().enumerate() {
            r[(ant, col)] -= w * rv;
        }
    }
}

/// `R·r̄`, the residual matched to one path signature.
fn match_signature(r: &CMatrix, resp: &[Complex64]) -> Vec<Complex64> {
    (0..r.nrows())
        .map(|ant| r.row(ant).iter().zip(resp).map(|(v, s)| v * s.conj()).sum())
        .collect()
}

/// Maximizer of `f` on `[lo, hi]` by Brent's parabolic/golden search.
fn line_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + g * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let tol = LINE_TOL + 1e-10 * x.abs();
        if (x - mid).abs() <= 2.0 * tol - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < 2.0 * tol || b - u < 2.0 * tol {
                    d = if mid >= x { tol } else { -tol };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { a - x } else { b - x };
            d = g * e;
        }
        let u = if d.abs() >= tol { x + d } else { x + tol.copysign(d) };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    x
}

fn split(x: f64) -> (i64, f64) {
    let i = x.round();
    (i as i64, x - i)
}

/// One path re-estimated from the residual that excludes all other paths:
/// integer tap by multi-antenna matched filtering over the guard atoms,
/// fractional offsets by maximizing the matched-filter energy, then angle
/// and gain by beamforming the path's own signature.
fn reacquire(
    r: &CMatrix,
    atoms: &CMatrix,
    model: &ResponseModel,
    params: &OtfsParams,
    hint: Option<&PathParams>,
) -> Option<PathParams> {
    let scores = r * atoms;
    let best = (0..atoms.ncols()).max_by(|&a, &b| {
        let sa: f64 = scores.column(a).iter().map(|v| v.norm_sqr()).sum();
        let sb: f64 = scores.column(b).iter().map(|v| v.norm_sqr()).sum();
        sa.total_cmp(&sb).then(b.cmp(&a))
    })?;
    let (k0, l0) = guard_position(best, params.n_g);
    let energy_of = |resp: &[Complex64]| -> f64 {
        let norm: f64 = resp.iter().map(|v| v.norm_sqr()).sum();
        if norm == 0.0 {
            return 0.0;
        }
        match_signature(r, resp).iter().map(|v| v.norm_sqr()).sum::<f64>() / norm
    };
    let nu_lim = params.half_ng() as f64 + 0.5;
    let tau_hi = params.m_g as f64 - 0.5;
    let (nu_lo, nu_hi) = ((k0 as f64 - 1.0).max(-nu_lim), (k0 as f64 + 1.0).min(nu_lim));
    let (tau_lo, tau_top) = ((l0 as f64 - 1.0).max(0.0), (l0 as f64 + 1.0).min(tau_hi));
    // coarse grid over the main lobe unless the previous estimate already
    // sits in it, then coordinate line searches
    const GRID: usize = 4;
    let mut step_nu = (nu_hi - nu_lo) / GRID as f64;
    let mut step_tau = (tau_top - tau_lo) / GRID as f64;
    let warm = hint
        .map(|h| (h.doppler(), h.delay()))
        .filter(|&(nu, tau)| (nu - k0 as f64).abs() < 0.5 && (tau - l0 as f64).abs() < 0.5);
    let (mut nu, mut tau) = match warm {
        Some(start) => {
            step_nu *= WARM_BRACKET;
            step_tau *= WARM_BRACKET;
            start
        }
        None => {
            let nus: Vec<f64> = (0..=GRID).map(|i| nu_lo + step_nu * i as f64).collect();
            let taus: Vec<f64> = (0..=GRID).map(|j| tau_lo + step_tau * j as f64).collect();
            let row_f: Vec<Vec<Complex64>> = nus.iter().map(|&nu| model.doppler_factor(nu)).collect();
            let col_f: Vec<Vec<Complex64>> = taus.iter().map(|&tau| model.delay_factor(tau)).collect();
            let mut start = (nus[0], taus[0], f64::NEG_INFINITY);
            for (nu, rows) in nus.iter().zip(&row_f) {
                for (tau, cols) in taus.iter().zip(&col_f) {
                    let e = energy_of(&model.assemble(rows, cols, *nu, *tau));
                    if e > start.2 {
                        start = (*nu, *tau, e);
                    }
                }
            }
            (start.0, start.1)
        }
    };
    for _ in 0..3 {
        let (prev_nu, prev_tau) = (nu, tau);
        let cols = model.delay_factor(tau);
        nu = line_max(
            &|x| energy_of(&model.assemble(&model.doppler_factor(x), &cols, x, tau)),
            (nu - step_nu).max(nu_lo),
            (nu + step_nu).min(nu_hi),
        );
        let rows = model.doppler_factor(nu);
        tau = line_max(
            &|x| energy_of(&model.assemble(&rows, &model.delay_factor(x), nu, x)),
            (tau - step_tau).max(tau_lo),
            (tau + step_tau).min(tau_top),
        );
        if (nu - prev_nu).abs() + (tau - prev_tau).abs() < 10.0 * LINE_TOL {
            break;
        }
    }
    let resp = model.response(nu, tau);
    let norm: f64 = resp.iter().map(|v| v.norm_sqr()).sum();
    if !(norm > 0.0) {
        return None;
    }
    let z: Vec<Complex64> = match_signature(r, &resp).into_iter().map(|v| v / norm).collect();
    let nb = z.len();
    let beam = |c: f64| -> f64 {
        let theta = c.clamp(-1.0, 1.0).acos();
        steering_vector(theta, nb, params.d_over_lambda)
            .iter()
            .zip(&z)
            .map(|(a, v)| a.conj() * v)
            .sum::<Complex64>()
            .norm_sqr()
    };
    let grid = 16 * nb;
    let c0 = (0..=grid)
        .map(|i| -1.0 + 2.0 * i as f64 / grid as f64)
        .map(|c| (c, beam(c)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?
        .0;
    let step = 2.0 / grid as f64;
    let c = line_max(&beam, (c0 - step).max(-1.0), (c0 + step).min(1.0));
    let theta = c.clamp(-1.0, 1.0).acos();
    let a = steering_vector(theta, nb, params.d_over_lambda);
    let alpha = a.iter().zip(&z).map(|(av, v)| av.conj() * v).sum::<Complex64>() / nb as f64;
    let (k_int, kappa) = split(nu);
    let (l_int, iota) = split(tau);
    Some(PathParams {
        alpha,
        l_int,
        iota,
        k_int,
        kappa,
        theta,
    })
}

/// Joint least-squares gains for fixed delays, Dopplers and angles.
fn refit_gains(y: &CMatrix, paths: &mut [PathParams], model: &ResponseModel, d_over_lambda: f64) {
    let (nb, len) = y.shape();
    let mut b = CMatrix::zeros(nb * len, paths.len());
    for (j, p) in paths.iter().enumerate() {
        let resp = model.response(p.doppler(), p.delay());
        let a = steering_vector(p.theta, nb, d_over_lambda);
        for col in 0..len {
            for ant in 0..nb {
                b[(col * nb + ant, j)] = a[ant] * resp[col];
            }
        }
    }
    let rhs = CMatrix::from_column_slice(nb * len, 1, y.as_slice());
    let alpha = pinv(&b) * rhs;
    for (j, p) in paths.iter_mut().enumerate() {
        p.alpha = alpha[(j, 0)];
    }
}

/// Alternating per-path re-estimation against the pilot observations `y`
/// (`N_BS × obs_len`), started both from the pipeline's paths and from a
/// greedy successive acquisition. The path set with the smallest pilot
/// residual wins; the pipeline's own paths are kept unless beaten.
fn joint_cleanup(
    y: &CMatrix,
    paths: Vec<PathParams>,
    layout: &PilotLayout,
    u: usize,
    params: &OtfsParams,
    sweeps: usize,
    residual_norms: &mut Vec<f64>,
) -> Vec<PathParams> {
    if sweeps == 0 || paths.is_empty() {
        return paths;
    }
    let model = layout.response_model(u, params);
    let d = params.d_over_lambda;
    // conjugated unit-norm atoms for the integer search
    let mut atoms = layout
        .measurement_matrix(u)
        .component_mul(&layout.phase_matrix_coarse(u, params));
    atoms.iter_mut().for_each(|v| *v = v.conj());

    let mut greedy = Vec::with_capacity(paths.len());
    let mut r = y.clone();
    for _ in 0..paths.len() {
        let Some(p) = reacquire(&r, &atoms, &model, params, None) else { break };
        subtract_path(&mut r, &p, &model.response(p.doppler(), p.delay()), d);
        greedy.push(p);
    }

    let base_res = pilot_residual(y, &paths, &model, d);
    let mut best = (base_res, paths.clone());
    let starts = if greedy.len() == paths.len() { vec![paths, greedy] } else { vec![paths] };
    for start in starts {
        let (res, cand) = sweep_paths(y, start, &atoms, &model, params, sweeps);
        if res < best.0 * (1.0 - CLEANUP_MIN_GAIN) {
            best = (res, cand);
        }
    }
    residual_norms.push(best.0.sqrt());
    best.1
}

/// Up to `sweeps` rounds of per-path re-acquisition plus a joint gain refit,
/// stopping when a round no longer lowers the residual.
fn sweep_paths(
    y: &CMatrix,
    mut paths: Vec<PathParams>,
    atoms: &CMatrix,
    model: &ResponseModel,
    params: &OtfsParams,
    sweeps: usize,
) -> (f64, Vec<PathParams>) {
    let d = params.d_over_lambda;
    refit_gains(y, &mut paths, model, d);
    let mut res = pilot_residual(y, &paths, model, d);
    for _ in 0..sweeps {
        let mut cand = paths.clone();
        for i in 0..cand.len() {
            let mut r = y.clone();
            for (j, p) in cand.iter().enumerate() {
                if j != i {
                    subtract_path(&mut r, p, &model.response(p.doppler(), p.delay()), d);
                }
            }
            if let Some(p) = reacquire(&r, atoms, model, params, Some(&cand[i])) {
                cand[i] = p;
            }
        }
        refit_gains(y, &mut cand, model, d);
        let next = pilot_residual(y, &cand, model, d);
        if next < res * (1.0 - CLEANUP_MIN_GAIN) {
            paths = cand;
            res = next;
        } else {
            break;
        }
    }
    (res, paths)
}

/// `g·(A ⊙ Φ)`.
fn dictionary(a: &CMatrix, phi: &CMatrix, gain: f64) -> CMatrix {
    a.component_mul(phi) * Complex64::new(gain, 0.0)
}

/// Conventional-layout estimation for every user.
pub fn estimate_conventional(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
) -> EstimateReport {
    let users = (0..layout.users)
        .into_par_iter()
        .map(|u| estimate_conventional_user(cube, layout, params, opts, u))
        .collect();
    EstimateReport {
        kind: PilotKind::Conventional,
        users,
    }
}

fn estimate_conventional_user(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
    u: usize,
) -> Result<UserEstimate> {
    let y = extract_pilot_observations(cube, layout, u)?;
    let angles = esprit_aoa(&y, params.paths, params.d_over_lambda)?;
    let z = spatial_project(&y, &angles, params.d_over_lambda)?;
    let a = layout.measurement_matrix(u);
    let model = layout.response_model(u, params);
    let gain = layout.pilot_gain();
    let coarse = dictionary(&a, &layout.phase_matrix_coarse(u, params), gain);
    let atoms = params.guard_atoms();

    let mut residual_norms = Vec::new();
    let mut iterations = 0;
    let mut taps = Vec::with_capacity(angles.len());
    let mut supports = Vec::with_capacity(angles.len());
    let mut pass_norm = 0.0;
    for i in 0..angles.len() {
        let zi = CMatrix::from_iterator(z.ncols(), 1, z.row(i).iter().copied());
        let fit = somp(&coarse, &zi, 1, opts.radius, params.n_g, params.m_g)?;
        iterations += 1;
        pass_norm += fit.residual_norms.last().copied().unwrap_or(0.0).powi(2);
        taps.push(refine_path(&fit.dense(0, atoms), &fit.support, params)?);
        supports.push(fit.support);
    }
    residual_norms.push(pass_norm.sqrt());

    for _ in 0..opts.n_rounds {
        let mut pass_norm = 0.0;
        for i in 0..angles.len() {
            let phi = layout.phase_matrix_refined(
                u,
                taps[i].k_int as f64 + taps[i].kappa,
                taps[i].l_int as f64 + taps[i].iota,
                &supports[i],
                params,
            );
            let dict = dictionary(&a, &phi, gain);
            let zi = CMatrix::from_iterator(z.ncols(), 1, z.row(i).iter().copied());
            let fit = somp(&dict, &zi, 1, opts.radius, params.n_g, params.m_g)?;
            iterations += 1;
            pass_norm += fit.residual_norms.last().copied().unwrap_or(0.0).powi(2);
            let h = fit.dense(0, atoms);
            taps[i] = if opts.compensate_leakage {
                let sub_pinv = pinv(&dict.select_columns(&fit.support));
                refine_compensated(&h, &fit.support, &fit.support, &sub_pinv, &model, params)?
            } else {
                refine_path(&h, &fit.support, params)?
            };
            supports[i] = fit.support;
        }
        residual_norms.push(pass_norm.sqrt());
    }

    let paths: Vec<PathParams> = taps.into_iter().zip(&angles).map(|(t, &th)| with_angle(t, th)).collect();
    let paths = joint_cleanup(&y, paths, layout, u, params, opts.cleanup_sweeps, &mut residual_norms);
    Ok(UserEstimate {
        user: u,
        h_dds: dds_matrix(&paths, params),
        paths,
        residual_norms,
        iterations,
    })
}

/// CSEP-layout estimation for every user.
pub fn estimate_csep(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
) -> EstimateReport {
    let users: Vec<Result<UserEstimate>> = (0..layout.users)
        .into_par_iter()
        .map(|u| estimate_csep_user(cube, layout, params, opts, u))
        .collect();
    let users = match cross_user_cleanup(cube, layout, params, opts, &users) {
        Ok(Some(refined)) => refined,
        _ => users,
    };
    EstimateReport {
        kind: PilotKind::Csep,
        users,
    }
}

/// One interference-cancellation pass over the shared CSEP observations:
/// each user's clean-up is rerun after removing the other users' estimated
/// pilot responses. `None` when clean-up is disabled or there is one user.
fn cross_user_cleanup(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
    users: &[Result<UserEstimate>],
) -> Result<Option<Vec<Result<UserEstimate>>>> {
    if opts.cleanup_sweeps == 0 || users.len() < 2 {
        return Ok(None);
    }
    let y = extract_pilot_observations(cube, layout, 0)?;
    let d = params.d_over_lambda;
    let models: Vec<ResponseModel> = (0..users.len()).map(|u| layout.response_model(u, params)).collect();
    let contributions: Vec<CMatrix> = users
        .iter()
        .zip(&models)
        .map(|(est, model)| {
            let mut c = CMatrix::zeros(y.nrows(), y.ncols());
            if let Ok(est) = est {
                for p in &est.paths {
                    subtract_path(&mut c, p, &model.response(p.doppler(), p.delay()), d);
                }
            }
            -c
        })
        .collect();
    let refined = users
        .par_iter()
        .enumerate()
        .map(|(u, est)| {
            let est = est.as_ref().map_err(Clone::clone)?;
            let mut y_u = y.clone();
            for (v, c) in contributions.iter().enumerate() {
                if v != u {
                    y_u -= c;
                }
            }
            let mut residual_norms = est.residual_norms.clone();
            let paths = joint_cleanup(&y_u, est.paths.clone(), layout, u, params, opts.cleanup_sweeps, &mut residual_norms);
            Ok(UserEstimate {
                user: u,
                h_dds: dds_matrix(&paths, params),
                paths,
                residual_norms,
                iterations: est.iterations,
            })
        })
        .collect();
    Ok(Some(refined))
}

/// Runs the pipeline matching `layout.kind`.
pub fn estimate(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
) -> EstimateReport {
    match layout.kind {
        PilotKind::Conventional => estimate_conventional(cube, layout, params, opts),
        PilotKind::Csep => estimate_csep(cube, layout, params, opts),
    }
}

/// Per-path peak windows: support atoms assigned to the path whose projected
/// coefficient is largest there.
fn assign_windows(z: &CMatrix, support: &[usize]) -> Vec<Vec<usize>> {
    let mut windows = vec![Vec::new(); z.nrows()];
    for &q in support {
        let owner = (0..z.nrows())
            .max_by(|&i, &j| z[(i, q)].norm().total_cmp(&z[(j, q)].norm()).then(j.cmp(&i)))
            .unwrap_or(0);
        windows[owner].push(q);
    }
    windows
}

fn estimate_csep_user(
    cube: &ReceivedCube,
    layout: &PilotLayout,
    params: &OtfsParams,
    opts: EstimatorOptions,
    u: usize,
) -> Result<UserEstimate> {
    let y = extract_pilot_observations(cube, layout, u)?;
    let yt = y.transpose();
    let a = layout.measurement_matrix(u);
    let model = layout.response_model(u, params);
    let gain = layout.pilot_gain();
    let atoms = params.guard_atoms();
    let coarse = dictionary(&a, &layout.phase_matrix_coarse(u, params), gain);

    let scatter = |fit: &SompFit| -> CMatrix {
        let mut h = CMatrix::zeros(params.n_bs, atoms);
        for (i, &q) in fit.support.iter().enumerate() {
            for ant in 0..params.n_bs {
                h[(ant, q)] = fit.coeffs[(i, ant)];
            }
        }
        h
    };

    let fit = somp(&coarse, &yt, params.paths, opts.radius, params.n_g, params.m_g)?;
    let mut iterations = fit.residual_norms.len();
    let mut residual_norms = vec![fit.residual_norms.last().copied().unwrap_or(0.0)];
    let h_hat = scatter(&fit);
    let angles = esprit_aoa(&h_hat, params.paths, params.d_over_lambda)?;
    let z = spatial_project(&h_hat, &angles, params.d_over_lambda)?;
    let windows = assign_windows(&z, &fit.support);
    let mut taps = Vec::with_capacity(angles.len());
    for (i, w) in windows.iter().enumerate() {
        let row: Vec<Complex64> = z.row(i).iter().copied().collect();
        let window = if w.is_empty() { &fit.support } else { w };
        taps.push(refine_path(&row, window, params)?);
    }
    let mut owned = windows;

    for _ in 0..opts.n_rounds {
        let mut phi = CMatrix::from_element(layout.obs_len(), atoms, Complex64::new(1.0, 0.0));
        for (t, w) in taps.iter().zip(&owned) {
            let refined = layout.phase_matrix_refined(
                u,
                t.k_int as f64 + t.kappa,
                t.l_int as f64 + t.iota,
                w,
                params,
            );
            for &q in w {
                phi.set_column(q, &refined.column(q));
            }
        }
        let dict = dictionary(&a, &phi, gain);
        let fit = somp(&dict, &yt, params.paths, opts.radius, params.n_g, params.m_g)?;
        iterations += fit.residual_norms.len();
        residual_norms.push(fit.residual_norms.last().copied().unwrap_or(0.0));
        let h_hat = scatter(&fit);
        let z = spatial_project(&h_hat, &angles, params.d_over_lambda)?;
        owned = assign_windows(&z, &fit.support);
        let sub_pinv = opts
            .compensate_leakage
            .then(|| pinv(&dict.select_columns(&fit.support)));
        for (i, w) in owned.iter().enumerate() {
            let row: Vec<Complex64> = z.row(i).iter().copied().collect();
            let window = if w.is_empty() { &fit.support } else { w };
            taps[i] = match &sub_pinv {
                Some(sp) => refine_compensated(&row, window, &fit.support, sp, &model, params)?,
                None => refine_path(&row, window, params)?,
            };
        }
    }

    let paths: Vec<PathParams> = taps.into_iter().zip(&angles).map(|(t, &th)| with_angle(t, th)).collect();
    let paths = joint_cleanup(&y, paths, layout, u, params, opts.cleanup_sweeps, &mut residual_norms);
    Ok(UserEstimate {
        user: u,
        h_dds: dds_matrix(&paths, params),
        paths,
        residual_norms,
        iterations,
    })
}

/// `‖Ĥ − H‖²/‖H‖²` for one user over the guard window.
pub fn user_nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let den = fro2(truth);
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(fro2(&(estimate - truth)) / den)
}

/// Greedy pairing of estimated to true paths by delay-Doppler distance.
pub fn match_paths(truth: &[PathParams], est: &[PathParams]) -> Vec<(usize, Option<usize>)> {
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            let d = (t.delay() - e.delay()).powi(2) + (t.doppler() - e.doppler()).powi(2);
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out: Vec<(usize, Option<usize>)> = (0..truth.len()).map(|i| (i, None)).collect();
    let mut used = vec![false; est.len()];
    for (_, i, j) in pairs {
        if out[i].1.is_none() && !used[j] {
            out[i].1 = Some(j);
            used[j] = true;
        }
    }
    out
}

/// CSV header of [`EstimateReport::csv_rows`].
pub const REPORT_CSV_HEADER: &str = "seed,user,path,true_delay,true_doppler,true_theta,true_re,true_im,est_delay,est_doppler,est_theta,est_re,est_im,user_nmse";

impl EstimateReport {
    /// One CSV row per true path, paired with its closest estimate.
    pub fn csv_rows(&self, seed: u64, truth: &[UserChannel], params: &OtfsParams) -> String {
        let mut out = String::new();
        for (u, ch) in truth.iter().enumerate() {
            let est = self.users.get(u).and_then(|r| r.as_ref().ok());
            let nmse = est
                .and_then(|e| user_nmse(&e.h_dds, &ch.dds_matrix(params)).ok())
                .unwrap_or(f64::NAN);
            let paired = match est {
                Some(e) => match_paths(&ch.paths, &e.paths),
                None => (0..ch.paths.len()).map(|i| (i, None)).collect(),
            };
            for (i, j) in paired {
                let t = &ch.paths[i];
                let _ = write!(
                    out,
                    "{seed},{},{},{},{},{},{},{}",
                    u + 1,
                    i + 1,
                    t.delay(),
                    t.doppler(),
                    t.theta,
                    t.alpha.re,
                    t.alpha.im
                );
                match j.and_then(|j| est.map(|e| &e.paths[j])) {
                    Some(e) => {
                        let _ = write!(
                            out,
                            ",{},{},{},{},{}",
                            e.delay(),
                            e.doppler(),
                            e.theta,
                            e.alpha.re,
                            e.alpha.im
                        );
                    }
                    None => out.push_str(",NaN,NaN,NaN,NaN,NaN"),
                }
                let _ = writeln!(out, ",{nmse}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::modem::{complex_gaussian, propagate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn array_data(angles: &[f64], n_bs: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = steering_matrix(angles, n_bs, 0.5);
        let s = CMatrix::from_fn(angles.len(), cols, |_, _| complex_gaussian(rng, 1.0));
        a * s
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn esprit_single_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = array_data(&[deg(60.0)], 16, 20, &mut rng);
        let est = esprit_aoa(&y, 1, 0.5).unwrap();
        assert!((est[0] - deg(60.0)).abs() < 1e-6);
    }

    #[test]
    fn esprit_three_angles_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = [deg(40.0), deg(75.0), deg(110.0)];
        let y = array_data(&truth, 16, 30, &mut rng);
        let est = sorted(esprit_aoa(&y, 3, 0.5).unwrap());
        for (e, t) in est.iter().zip(truth) {
            assert!((e - t).abs() < 1e-6, "{e} vs {t}");
        }
        let scaled = &y * Complex64::new(-3.0, 0.7);
        let again = sorted(esprit_aoa(&scaled, 3, 0.5).unwrap());
        for (a, b) in est.iter().zip(&again) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn esprit_rejects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = array_data(&[deg(50.0)], 8, 10, &mut rng);
        assert!(matches!(esprit_aoa(&y, 2, 0.5), Err(Error::DegenerateSubspace { .. })));
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = array_data(&[deg(70.0)], 8, 5, &mut rng);
        let a = steering_matrix(&[deg(70.0)], 8, 0.5);
        let got = spatial_project(&y, &[deg(70.0)], 0.5).unwrap();
        let want = a.adjoint() * &y / Complex64::new(8.0, 0.0);
        assert!((got - want).norm() < 1e-12);

        let angles = [deg(35.0), deg(120.0)];
        let steer = steering_matrix(&angles, 16, 0.5);
        let eye = spatial_project(&steer, &angles, 0.5).unwrap();
        assert!((eye - CMatrix::identity(2, 2)).norm() < 1e-10);

        let s = CMatrix::from_fn(2, 7, |_, _| complex_gaussian(&mut rng, 1.0));
        let only_first = CMatrix::from_fn(2, 7, |i, j| if i == 0 { s[(i, j)] } else { Complex64::new(0.0, 0.0) });
        let rows = spatial_project(&(&steer * only_first), &angles, 0.5).unwrap();
        assert!(rows.row(1).iter().all(|v| v.norm() < 1e-9));
        assert!(matches!(
            spatial_project(&steer, &[deg(60.0), deg(60.0)], 0.5),
            Err(Error::NearCollinearAngles { .. })
        ));
    }

    #[test]
    fn somp_single_atom_exact() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let a = lay.measurement_matrix(0);
        let q = guard_index(1, 7, p.n_g);
        let alpha = Complex64::new(0.4, 0.9);
        let y = CMatrix::from_iterator(a.nrows(), 1, a.column(q).iter().map(|v| v * alpha));
        let fit = somp(&a, &y, 1, 0, p.n_g, p.m_g).unwrap();
        assert_eq!(fit.support, vec![q]);
        assert!((fit.coeffs[(0, 0)] - alpha).norm() < 1e-10);
    }

    #[test]
    fn somp_residual_is_non_increasing() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        let a = lay.measurement_matrix(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = CMatrix::from_fn(a.nrows(), 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let fit = somp(&a, &y, 5, 1, p.n_g, p.m_g).unwrap();
        assert!(fit.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(somp(&a, &y, 0, 1, p.n_g, p.m_g).is_err());
        assert!(somp(&a, &y, p.guard_atoms() + 1, 1, p.n_g, p.m_g).is_err());
    }

    #[test]
    fn refine_on_grid_is_exact() {
        let p = OtfsParams::desk_sweep();
        let path = PathParams::on_grid(Complex64::new(1.0, 0.0), 5, -1, 1.0);
        let h: Vec<Complex64> = (0..p.guard_atoms())
            .map(|q| {
                let (k, l) = guard_position(q, p.n_g);
                path.dds_kernel(k, l as i64, 0, &p)
            })
            .collect();
        let all: Vec<usize> = (0..p.guard_atoms()).collect();
        let t = refine_path(&h, &all, &p).unwrap();
        assert_eq!((t.k_int, t.l_int), (-1, 5));
        assert_eq!((t.kappa, t.iota), (0.0, 0.0));
        assert!((t.alpha - 1.0).norm() < 1e-10);
        assert!(matches!(refine_path(&vec![Complex64::new(0.0, 0.0); p.guard_atoms()], &all, &p), Err(Error::NoPath)));
    }

    #[test]
    fn refine_fractional_doppler_n31() {
        let mut p = OtfsParams::desk_sweep();
        p.n = 31;
        p.n_g = 7;
        p.n_p = 7;
        let path = PathParams {
            alpha: Complex64::new(1.0, 0.0),
            l_int: 3,
            iota: 0.0,
            k_int: 0,
            kappa: 0.3,
            theta: 1.0,
        };
        let h: Vec<Complex64> = (0..p.guard_atoms())
            .map(|q| {
                let (k, l) = guard_position(q, p.n_g);
                path.dds_kernel(k, l as i64, 0, &p)
            })
            .collect();
        let all: Vec<usize> = (0..p.guard_atoms()).collect();
        let t = refine_path(&h, &all, &p).unwrap();
        assert!((t.kappa - 0.3).abs() < 5e-3, "{}", t.kappa);
        assert_eq!(t.iota, 0.0);
    }

    fn single_path_run(kind: PilotKind, path: PathParams, params: &OtfsParams) -> (UserEstimate, f64) {
        let lay = PilotLayout::new(kind, params).unwrap();
        let cube = propagate(
            &[lay.pilot_frame(0, params)],
            &[UserChannel { user: 0, paths: vec![path] }],
            params,
            f64::INFINITY,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let mut report = estimate(&cube, &lay, params, EstimatorOptions::default());
        let est = report.users.remove(0).unwrap();
        let nmse = user_nmse(&est.h_dds, &dds_matrix(&[path], params)).unwrap();
        (est, nmse)
    }

    fn one_path_params() -> OtfsParams {
        let mut p = OtfsParams::desk_sweep();
        p.users = 1;
        p.paths = 1;
        p
    }

    #[test]
    fn conventional_on_grid_single_path_is_exact() {
        let p = one_path_params();
        let path = PathParams::on_grid(Complex64::new(0.6, -0.8), 7, 1, 1.1);
        let (est, nmse) = single_path_run(PilotKind::Conventional, path, &p);
        assert!(nmse < 1e-18, "{nmse}");
        assert!((est.paths[0].theta - 1.1).abs() < 1e-9);
    }

    #[test]
    fn conventional_fractional_single_path() {
        let p = one_path_params();
        let path = PathParams {
            alpha: Complex64::new(0.6, -0.8),
            l_int: 7,
            iota: -0.2,
            k_int: 0,
            kappa: 0.3,
            theta: 1.1,
        };
        let (_, nmse) = single_path_run(PilotKind::Conventional, path, &p);
        assert!(nmse < 1e-3, "{nmse}");
    }

    #[test]
    fn csep_single_user_matches_conventional() {
        let p = one_path_params();
        let path = PathParams::on_grid(Complex64::new(-0.3, 0.5), 4, -2, 2.0);
        let (a, na) = single_path_run(PilotKind::Conventional, path, &p);
        let (b, nb) = single_path_run(PilotKind::Csep, path, &p);
        assert!(na < 1e-18 && nb < 1e-18);
        assert!((a.h_dds - b.h_dds).norm() < 1e-9);
    }

    #[test]
    fn csep_two_users_on_grid() {
        let mut p = OtfsParams::desk_sweep();
        p.paths = 1;
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let chans = vec![
            UserChannel {
                user: 0,
                paths: vec![PathParams::on_grid(Complex64::new(0.8, 0.1), 3, 1, deg(50.0))],
            },
            UserChannel {
                user: 1,
                paths: vec![PathParams::on_grid(Complex64::new(-0.2, 0.7), 9, -1, deg(120.0))],
            },
        ];
        let frames: Vec<_> = (0..2).map(|u| lay.pilot_frame(u, &p)).collect();
        let cube = propagate(&frames, &chans, &p, f64::INFINITY, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let report = estimate_csep(&cube, &lay, &p, EstimatorOptions::default());
        for (u, ch) in chans.iter().enumerate() {
            let est = report.users[u].as_ref().unwrap();
            let (t, e) = (&ch.paths[0], &est.paths[0]);
            assert_eq!((e.l_int, e.k_int), (t.l_int, t.k_int));
            assert!((e.theta - t.theta).abs() < 1e-6);
            assert!((e.alpha - t.alpha).norm() < 2e-3);
        }
    }

    #[test]
    fn csep_somp_avoids_other_user_atoms() {
        let mut p = OtfsParams::desk_sweep();
        p.paths = 1;
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mk = |rng: &mut ChaCha8Rng| {
                PathParams::on_grid(
                    complex_gaussian(rng, 1.0),
                    rng.gen_range(0..p.m_g as i64),
                    rng.gen_range(-2..=2),
                    rng.gen_range(0.2..2.9),
                )
            };
            let (p1, p2) = (mk(&mut rng), mk(&mut rng));
            let chans = vec![
                UserChannel { user: 0, paths: vec![p1] },
                UserChannel { user: 1, paths: vec![p2] },
            ];
            let frames: Vec<_> = (0..2).map(|u| lay.pilot_frame(u, &p)).collect();
            let cube = propagate(&frames, &chans, &p, f64::INFINITY, &mut rng).unwrap();
            let y = extract_pilot_observations(&cube, &lay, 0).unwrap().transpose();
            let dict = dictionary(&lay.measurement_matrix(0), &lay.phase_matrix_coarse(0, &p), lay.pilot_gain());
            let fit = somp(&dict, &y, 1, 0, p.n_g, p.m_g).unwrap();
            let (k, l) = guard_position(fit.support[0], p.n_g);
            assert_eq!((k, l as i64), (p1.k_int, p1.l_int));
        }
    }

    #[test]
    fn estimates_are_deterministic() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let chans: Vec<_> = (0..p.users).map(|u| sample_channel(&p, u, 80.0, &mut rng).unwrap()).collect();
        let frames: Vec<_> = (0..p.users).map(|u| lay.pilot_frame(u, &p)).collect();
        let cube = propagate(&frames, &chans, &p, 10.0, &mut rng).unwrap();
        let a = estimate_csep(&cube, &lay, &p, EstimatorOptions::default());
        let b = estimate_csep(&cube, &lay, &p, EstimatorOptions::default());
        assert_eq!(a, b);
        let rows = a.csv_rows(12, &chans, &p);
        assert_eq!(rows.lines().count(), p.users * p.paths);
        assert_eq!(rows.lines().next().unwrap().split(',').count(), REPORT_CSV_HEADER.split(',').count());
    }

    #[test]
    fn nmse_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = CMatrix::from_fn(4, 6, |_, _| complex_gaussian(&mut rng, 1.0));
        assert_eq!(user_nmse(&h, &h).unwrap(), 0.0);
        assert!((user_nmse(&CMatrix::zeros(4, 6), &h).unwrap() - 1.0).abs() < 1e-15);
        let eps = 0.01;
        assert!((user_nmse(&(&h * Complex64::new(1.0 + eps, 0.0)), &h).unwrap() - eps * eps).abs() < 1e-12);
        assert!(matches!(user_nmse(&h, &CMatrix::zeros(4, 6)), Err(Error::ZeroNorm)));
    }
}
