//! ISFFT/SFFT and time-frequency-domain propagation of DD frames.
//!
//! Grids are stored as `N × M` matrices: row `k mod N` (Doppler), column `l`
//! (delay). In the time-frequency domain the same shape holds with row `n`
//! (symbol slot) and column `m` (subcarrier).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::channel::{PathParams, UserChannel};
use crate::error::{Error, Result};
use crate::geometry::{doppler_row, OtfsParams};
use crate::kernel::{dirichlet_xi, steering_element};
use crate::linalg::CMatrix;

/// One user's delay-Doppler symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    pub user: usize,
    /// `N × M`, rows indexed by `k mod N`.
    pub grid: CMatrix,
}

impl DdFrame {
    pub fn zeros(user: usize, params: &OtfsParams) -> Self {
        DdFrame {
            user,
            grid: CMatrix::zeros(params.n, params.m),
        }
    }

    /// Symbol at centered Doppler `k`, delay `l`.
    pub fn at(&self, k: i64, l: usize) -> Complex64 {
        self.grid[(doppler_row(k, self.grid.nrows()), l)]
    }

    pub fn set(&mut self, k: i64, l: usize, v: Complex64) {
        let row = doppler_row(k, self.grid.nrows());
        self.grid[(row, l)] = v;
    }
}

/// Received DD-domain samples on every base-station antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedCube {
    /// One `N × M` grid per antenna.
    pub antennas: Vec<CMatrix>,
}

impl ReceivedCube {
    pub fn zeros(params: &OtfsParams) -> Self {
        ReceivedCube {
            antennas: vec![CMatrix::zeros(params.n, params.m); params.n_bs],
        }
    }

    pub fn n_bs(&self) -> usize {
        self.antennas.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let (n, m) = self.antennas.first().map_or((0, 0), |g| g.shape());
        (self.antennas.len(), n, m)
    }

    /// `Y[k, l]` on antenna `antenna`, with centered Doppler `k`.
    pub fn at(&self, antenna: usize, k: i64, l: usize) -> Complex64 {
        let g = &self.antennas[antenna];
        g[(doppler_row(k, g.nrows()), l)]
    }

    /// Binary dump: 8 little-endian `i64` header values `(N_BS, N, M, 0, 0, 0, 0, 0)`
    /// followed by interleaved `f64` real/imaginary parts in `[antenna][k][l]` order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let (nb, n, m) = self.dims();
        let header = [nb as i64, n as i64, m as i64, 0, 0, 0, 0, 0];
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for g in &self.antennas {
            for k in 0..n {
                for l in 0..m {
                    w.write_all(&g[(k, l)].re.to_le_bytes())?;
                    w.write_all(&g[(k, l)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0i64; 8];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = i64::from_le_bytes(word);
        }
        if header[..3].iter().any(|&v| v <= 0) || header[3..].iter().any(|&v| v != 0) {
            return Err(Error::Parse(format!("bad cube header {header:?}")));
        }
        let (nb, n, m) = (header[0] as usize, header[1] as usize, header[2] as usize);
        let mut antennas = Vec::with_capacity(nb);
        for _ in 0..nb {
            let mut g = CMatrix::zeros(n, m);
            for k in 0..n {
                for l in 0..m {
                    r.read_exact(&mut word)?;
                    let re = f64::from_le_bytes(word);
                    r.read_exact(&mut word)?;
                    let im = f64::from_le_bytes(word);
                    g[(k, l)] = Complex64::new(re, im);
                }
            }
            antennas.push(g);
        }
        Ok(ReceivedCube { antennas })
    }
}

/// Cached FFT plans for an `N × M` grid.
#[derive(Clone)]
pub struct GridFft {
    n: usize,
    m: usize,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
}

impl GridFft {
    pub fn new(n: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        GridFft {
            n,
            m,
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
        }
    }

    pub fn for_params(params: &OtfsParams) -> Self {
        Self::new(params.n, params.m)
    }

    /// Applies `along_n` to every column and `along_m` to every row, then scales.
    fn transform(&self, grid: &CMatrix, along_n: &dyn Fft<f64>, along_m: &dyn Fft<f64>) -> CMatrix {
        assert_eq!(grid.shape(), (self.n, self.m), "grid shape");
        let mut out = grid.clone();
        for mut col in out.column_iter_mut() {
            along_n.process(col.as_mut_slice());
        }
        let mut row = vec![Complex64::new(0.0, 0.0); self.m];
        for r in 0..self.n {
            for (c, v) in row.iter_mut().enumerate() {
                *v = out[(r, c)];
            }
            along_m.process(&mut row);
            for (c, v) in row.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        out * Complex64::new(1.0 / ((self.n * self.m) as f64).sqrt(), 0.0)
    }

    /// `X^TF[n,m] = (1/√(NM)) Σ_{k,l} X[k,l] e^{−j2π(ml/M − nk/N)}`.
    pub fn isfft(&self, dd: &CMatrix) -> CMatrix {
        self.transform(dd, self.inv_n.as_ref(), self.fwd_m.as_ref())
    }

    /// Inverse of [`GridFft::isfft`].
    pub fn sfft(&self, tf: &CMatrix) -> CMatrix {
        self.transform(tf, self.fwd_n.as_ref(), self.inv_m.as_ref())
    }

    /// Unit-gain TF response of one path to the TF grid `x_tf`.
    ///
    /// Row `n` is `e^{j2πν(nT_sym + T_CP − τ)} Σ_{m'} X[n,m'] e^{−j2πm'Δfτ} Ξ_M(m − m' − ν_s M)`
    /// with `ν_s` the Doppler shift per sample. The inner convolution is done
    /// through the sample domain.
    fn path_tf_response(&self, x_tf: &CMatrix, path: &PathParams, params: &OtfsParams) -> CMatrix {
        let (n, m) = (self.n, self.m);
        let nu = path.doppler();
        let tau = path.delay();
        let per_sample = nu / params.phase_span();
        let ramp: Vec<Complex64> = (0..m)
            .map(|s| Complex64::from_polar(1.0 / m as f64, 2.0 * PI * per_sample * s as f64))
            .collect();
        let delay_phase: Vec<Complex64> = (0..m)
            .map(|mm| Complex64::from_polar(1.0, -2.0 * PI * mm as f64 * tau / m as f64))
            .collect();
        let mut out = CMatrix::zeros(n, m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for row in 0..n {
            for (c, v) in buf.iter_mut().enumerate() {
                *v = x_tf[(row, c)] * delay_phase[c];
            }
            self.inv_m.process(&mut buf);
            for (v, r) in buf.iter_mut().zip(&ramp) {
                *v *= r;
            }
            self.fwd_m.process(&mut buf);
            let slot = Complex64::from_polar(
                1.0,
                2.0 * PI
                    * (nu * row as f64 / n as f64 + per_sample * (params.m_cp as f64 - tau)),
            );
            for (c, v) in buf.iter().enumerate() {
                out[(row, c)] = slot * v;
            }
        }
        out
    }
}

/// Spec-form cross-ambiguity
/// `A′(−τ, f) = (1/M) Σ_p e^{−j2πf(pT/M + τ)}` over the `M` integer samples
/// starting at `p₀ = ⌈M_CP − MΔfτ⌉`.
pub fn cross_ambiguity(tau: f64, f_off: f64, params: &OtfsParams) -> Result<Complex64> {
    check_delay(tau * params.m as f64 * params.delta_f, params)?;
    let p0 = (params.m_cp as f64 - params.m as f64 * params.delta_f * tau).ceil();
    let x = f_off / params.delta_f;
    // Σ_{s<M} e^{−j2πxs/M} = M·Ξ_M(x)
    let lead = Complex64::from_polar(1.0, -2.0 * PI * f_off * (p0 * params.t() / params.m as f64 + tau));
    Ok(lead * dirichlet_xi(params.m, x))
}

/// Ambiguity over the `M` samples kept after CP removal,
/// `(1/M) Σ_{s<M} e^{−j2πf·sT/M} = Ξ_M(f/Δf)`. This is the window that
/// reproduces the DD-domain input-output relation exactly.
pub fn aligned_ambiguity(f_off: f64, params: &OtfsParams) -> Complex64 {
    dirichlet_xi(params.m, f_off / params.delta_f)
}

fn check_delay(delay_bins: f64, params: &OtfsParams) -> Result<()> {
    if !(delay_bins >= 0.0) || delay_bins >= params.m_cp as f64 {
        return Err(Error::CpViolation {
            delay_bins,
            cp_bins: params.m_cp,
        });
    }
    Ok(())
}

fn check_inputs(frames: &[DdFrame], channels: &[UserChannel], params: &OtfsParams) -> Result<()> {
    if frames.len() != channels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames for {} channels",
            frames.len(),
            channels.len()
        )));
    }
    for f in frames {
        if f.grid.shape() != (params.n, params.m) {
            return Err(Error::DimensionMismatch(format!(
                "frame of user {} is {:?}, expected ({}, {})",
                f.user,
                f.grid.shape(),
                params.n,
                params.m
            )));
        }
    }
    for ch in channels {
        for p in &ch.paths {
            check_delay(p.delay(), params)?;
        }
    }
    Ok(())
}

/// Noise variance per complex sample for unit signal power.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Circular complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Passes every user's frame through its channel and sums at the array.
///
/// `snr_db = +∞` gives a noiseless cube. Noise of variance `10^(−SNR/10)`
/// is added in the TF domain before the SFFT.
pub fn propagate<R: Rng + ?Sized>(
    frames: &[DdFrame],
    channels: &[UserChannel],
    params: &OtfsParams,
    snr_db: f64,
    rng: &mut R,
) -> Result<ReceivedCube> {
    check_inputs(frames, channels, params)?;
    let fft = GridFft::for_params(params);
    let tf_in: Vec<CMatrix> = frames.par_iter().map(|f| fft.isfft(&f.grid)).collect();
    let jobs: Vec<(usize, &PathParams)> = channels
        .iter()
        .enumerate()
        .flat_map(|(u, ch)| ch.paths.iter().map(move |p| (u, p)))
        .collect();
    let responses: Vec<CMatrix> = jobs
        .par_iter()
        .map(|&(u, p)| fft.path_tf_response(&tf_in[u], p, params))
        .collect();

    let var = noise_variance(snr_db);
    let noise: Vec<Option<CMatrix>> = (0..params.n_bs)
        .map(|_| {
            (var > 0.0).then(|| {
                DMatrix::from_fn(params.n, params.m, |_, _| complex_gaussian(rng, var))
            })
        })
        .collect();

    let antennas = noise
        .into_par_iter()
        .enumerate()
        .map(|(ant, noise)| {
            let mut acc = noise.unwrap_or_else(|| CMatrix::zeros(params.n, params.m));
            for ((_, p), resp) in jobs.iter().zip(&responses) {
                let w = p.alpha * steering_element(p.theta, ant, params.d_over_lambda);
                acc.zip_apply(resp, |a, r| *a += w * r);
            }
            fft.sfft(&acc)
        })
        .collect();
    Ok(ReceivedCube { antennas })
}

/// Direct evaluation of the DD-domain input-output relation
/// `Y[k,l] = Σ_i Φ_i(l) Σ_{k',l'} h_i[k',l'] X[[k−k']_N, [l−l']_M]`
/// over the full grid of `(k', l')`. Costs `O((NM)²)` per path; meant for
/// small grids and cross-checks.
pub fn dd_reference(
    frames: &[DdFrame],
    channels: &[UserChannel],
    params: &OtfsParams,
) -> Result<ReceivedCube> {
    check_inputs(frames, channels, params)?;
    let (n, m) = (params.n, params.m);
    let mut cube = ReceivedCube::zeros(params);
    for (frame, ch) in frames.iter().zip(channels) {
        for path in &ch.paths {
            let mut h = CMatrix::zeros(n, m);
            for kr in 0..n {
                for lp in 0..m {
                    h[(kr, lp)] = dirichlet_xi(n, kr as f64 - path.doppler())
                        * dirichlet_xi(m, path.delay() - lp as f64);
                }
            }
            let mut y = CMatrix::zeros(n, m);
            for k in 0..n {
                for l in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for kp in 0..n {
                        for lp in 0..m {
                            acc += h[(kp, lp)] * frame.grid[((k + n - kp) % n, (l + m - lp) % m)];
                        }
                    }
                    y[(k, l)] = acc * path.phase_factor(l, params);
                }
            }
            for (ant, g) in cube.antennas.iter_mut().enumerate() {
                let w = path.alpha * steering_element(path.theta, ant, params.d_over_lambda);
                g.zip_apply(&y, |a, v| *a += w * v);
            }
        }
    }
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(n: usize, m: usize) -> OtfsParams {
        OtfsParams {
            m,
            n,
            m_cp: 4,
            delta_f: 60e3,
            f_c: 15e9,
            m_g: 2,
            n_g: 3,
            m_p: 2,
            n_p: 3,
            users: 1,
            n_bs: 2,
            paths: 1,
            d_over_lambda: 0.5,
        }
    }

    fn random_grid(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, m, |_, _| complex_gaussian(rng, 1.0))
    }

    fn max_dev(a: &ReceivedCube, b: &ReceivedCube) -> f64 {
        a.antennas
            .iter()
            .zip(&b.antennas)
            .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_maps_to_constant() {
        let fft = GridFft::new(4, 6);
        let mut x = CMatrix::zeros(4, 6);
        x[(0, 0)] = Complex64::new(1.0, 0.0);
        let tf = fft.isfft(&x);
        let c = 1.0 / 24f64.sqrt();
        assert!(tf.iter().all(|v| (v - c).norm() < 1e-15));
        assert!((fft.sfft(&tf) - x).norm() < 1e-14);
    }

    #[test]
    fn isfft_matches_definition() {
        let (n, m) = (5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_grid(n, m, &mut rng);
        let tf = GridFft::new(n, m).isfft(&x);
        for nn in 0..n {
            for mm in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    for l in 0..m {
                        let arg = -2.0 * PI * ((mm * l) as f64 / m as f64 - (nn * k) as f64 / n as f64);
                        acc += x[(k, l)] * Complex64::from_polar(1.0, arg);
                    }
                }
                acc /= ((n * m) as f64).sqrt();
                assert!((acc - tf[(nn, mm)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transforms_are_unitary_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m) in [(1, 1), (2, 3), (8, 8), (16, 64), (31, 17), (64, 64)] {
            let fft = GridFft::new(n, m);
            let x = random_grid(n, m, &mut rng);
            let y = random_grid(n, m, &mut rng);
            let tf = fft.isfft(&x);
            assert!((fft.sfft(&tf) - &x).norm() < 1e-12 * (1.0 + x.norm()));
            assert!((fft.isfft(&fft.sfft(&x)) - &x).norm() < 1e-12 * (1.0 + x.norm()));
            assert!((tf.norm() - x.norm()).abs() < 1e-12 * x.norm());
            let a = Complex64::new(0.3, -1.2);
            let b = Complex64::new(-2.0, 0.5);
            let lhs = fft.sfft(&(&x * a + &y * b));
            let rhs = fft.sfft(&x) * a + fft.sfft(&y) * b;
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + x.norm() + y.norm()));
        }
    }

    fn cross_ambiguity_direct(tau: f64, f_off: f64, p: &OtfsParams) -> Complex64 {
        let p0 = (p.m_cp as f64 - p.m as f64 * p.delta_f * tau).ceil();
        (0..p.m)
            .map(|s| {
                let pp = p0 + s as f64;
                Complex64::from_polar(1.0, -2.0 * PI * f_off * (pp * p.t() / p.m as f64 + tau))
            })
            .sum::<Complex64>()
            / p.m as f64
    }

    #[test]
    fn cross_ambiguity_examples() {
        let p = OtfsParams::desk_sweep();
        assert!((cross_ambiguity(0.0, 0.0, &p).unwrap() - 1.0).norm() < 1e-15);
        for q in [1.0, -3.0, 7.0] {
            assert!(cross_ambiguity(0.0, q * p.delta_f, &p).unwrap().norm() < 1e-12);
        }
        assert!(matches!(
            cross_ambiguity(p.t_cp(), 0.0, &p),
            Err(Error::CpViolation { .. })
        ));
    }

    #[test]
    fn cross_ambiguity_closed_form_matches_sum() {
        let p = OtfsParams::desk_sweep();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let tau = rng.gen_range(0.0..p.t_cp());
            let f_off = rng.gen_range(-20.0..20.0) * p.delta_f;
            let a = cross_ambiguity(tau, f_off, &p).unwrap();
            let b = cross_ambiguity_direct(tau, f_off, &p);
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-3), "{a} {b}");
        }
    }

    #[test]
    fn aligned_ambiguity_is_window_sum() {
        let p = OtfsParams::desk_ber();
        for f in [0.0, 0.37, -2.6, 5.0] {
            let direct: Complex64 = (0..p.m)
                .map(|s| Complex64::from_polar(1.0, -2.0 * PI * f * s as f64 / p.m as f64))
                .sum::<Complex64>()
                / p.m as f64;
            assert!((aligned_ambiguity(f * p.delta_f, &p) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_channel_passes_frame() {
        let p = OtfsParams::desk_ber();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = DdFrame {
            user: 0,
            grid: random_grid(p.n, p.m, &mut rng),
        };
        let ch = UserChannel {
            user: 0,
            paths: vec![PathParams::on_grid(Complex64::new(1.0, 0.0), 0, 0, PI / 2.0)],
        };
        let cube = propagate(&[frame.clone()], &[ch], &p, f64::INFINITY, &mut rng).unwrap();
        for g in &cube.antennas {
            assert!((g - &frame.grid).iter().all(|v| v.norm() < 1e-10));
        }
    }

    #[test]
    fn on_grid_delay_is_a_circular_shift() {
        let p = OtfsParams::desk_ber();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame = DdFrame {
            user: 0,
            grid: random_grid(p.n, p.m, &mut rng),
        };
        let alpha = Complex64::new(0.6, -0.3);
        let path = PathParams::on_grid(alpha, 3, 0, 1.0);
        let ch = UserChannel { user: 0, paths: vec![path] };
        let cube = propagate(&[frame.clone()], &[ch], &p, f64::INFINITY, &mut rng).unwrap();
        for ant in 0..p.n_bs {
            let a = steering_element(1.0, ant, 0.5);
            for k in 0..p.n {
                for l in 0..p.m {
                    let want = alpha * a * frame.grid[(k, (l + p.m - 3) % p.m)];
                    assert!((cube.antennas[ant][(k, l)] - want).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fractional_paths_match_dd_reference() {
        let p = small(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = DdFrame {
            user: 0,
            grid: random_grid(p.n, p.m, &mut rng),
        };
        let ch = UserChannel {
            user: 0,
            paths: vec![
                PathParams {
                    alpha: Complex64::new(0.8, 0.1),
                    l_int: 1,
                    iota: 0.37,
                    k_int: 1,
                    kappa: -0.21,
                    theta: 0.9,
                },
                PathParams {
                    alpha: Complex64::new(-0.2, 0.5),
                    l_int: 2,
                    iota: -0.45,
                    k_int: -1,
                    kappa: 0.33,
                    theta: 2.2,
                },
            ],
        };
        let fast = propagate(&[frame.clone()], &[ch.clone()], &p, f64::INFINITY, &mut rng).unwrap();
        let slow = dd_reference(&[frame], &[ch], &p).unwrap();
        assert!(max_dev(&fast, &slow) < 1e-8, "{}", max_dev(&fast, &slow));
    }

    #[test]
    fn propagation_is_linear() {
        let p = small(6, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let path = PathParams {
            alpha: Complex64::new(1.0, 0.0),
            l_int: 2,
            iota: 0.2,
            k_int: 0,
            kappa: 0.4,
            theta: 1.3,
        };
        let ch = UserChannel { user: 0, paths: vec![path] };
        let x1 = random_grid(p.n, p.m, &mut rng);
        let x2 = random_grid(p.n, p.m, &mut rng);
        let a = Complex64::new(0.5, 2.0);
        let run = |g: CMatrix, ch: &UserChannel, rng: &mut ChaCha8Rng| {
            propagate(&[DdFrame { user: 0, grid: g }], &[ch.clone()], &p, f64::INFINITY, rng).unwrap()
        };
        let lhs = run(&x1 * a + &x2, &ch, &mut rng);
        let r1 = run(x1.clone(), &ch, &mut rng);
        let r2 = run(x2, &ch, &mut rng);
        for ant in 0..p.n_bs {
            let want = &r1.antennas[ant] * a + &r2.antennas[ant];
            assert!((&lhs.antennas[ant] - want).norm() < 1e-10);
        }
        let mut scaled = ch.clone();
        scaled.paths[0].alpha *= a;
        let rs = run(x1, &scaled, &mut rng);
        for ant in 0..p.n_bs {
            assert!((&rs.antennas[ant] - &r1.antennas[ant] * a).norm() < 1e-10);
        }
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let mut p = OtfsParams::desk_sweep();
        p.n_bs = 245; // 245·16·256 ≈ 1.0e6 samples
        let frame = DdFrame::zeros(0, &p);
        let ch = UserChannel {
            user: 0,
            paths: vec![PathParams::on_grid(Complex64::new(1.0, 0.0), 0, 0, 1.0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cube = propagate(&[frame], &[ch], &p, 10.0, &mut rng).unwrap();
        let count = (p.n_bs * p.n * p.m) as f64;
        let power: f64 = cube.antennas.iter().map(|g| g.norm_squared()).sum::<f64>() / count;
        assert!((power / 0.1 - 1.0).abs() < 0.03, "{power}");
    }

    #[test]
    fn cp_violation_is_reported() {
        let p = OtfsParams::desk_ber();
        let ch = UserChannel {
            user: 0,
            paths: vec![PathParams::on_grid(Complex64::new(1.0, 0.0), p.m_cp as i64, 0, 1.0)],
        };
        let err = propagate(&[DdFrame::zeros(0, &p)], &[ch], &p, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::CpViolation { .. })));
    }

    #[test]
    fn cube_binary_round_trip() {
        let p = small(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cube = ReceivedCube {
            antennas: (0..p.n_bs).map(|_| random_grid(p.n, p.m, &mut rng)).collect(),
        };
        let mut bytes = Vec::new();
        cube.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 64 + 16 * p.n_bs * p.n * p.m);
        assert_eq!(ReceivedCube::read_binary(bytes.as_slice()).unwrap(), cube);
    }
}
