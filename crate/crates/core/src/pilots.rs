//! Embedded pilot layouts, frame assembly and per-user dictionaries.
//!
//! Both layouts occupy delay columns `0..W` of a Doppler band of `N_p + N_g`
//! rows. The green pilot block spans Doppler rows `k_p..k_p+N_p` with
//! `k_p = −⌊N_p/2⌋`; the band extends it cyclically by `⌈N_g/2⌉` rows below and
//! `⌊N_g/2⌋` rows above, so every Doppler shift in the guard sees a full
//! period of the pilot.
//!
//! Conventional, per user `u`: `M_g` cyclic-extension columns followed by the
//! `M_p`-column green block, then one trailing `M_g`-column zero guard after
//! the last user. CSEP: `M_g` extension columns, a shared `K·M_p`-column green
//! block and an `M_g`-column zero guard; user `u` sends the ZC product shifted
//! by `u·M_p` in delay.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{guard_position, OtfsParams, PilotKind};
use crate::kernel::dirichlet_xi;
use crate::linalg::CMatrix;
use crate::modem::DdFrame;
use crate::sequence::zc_entry;

/// Placement of the pilot region for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotLayout {
    pub kind: PilotKind,
    pub users: usize,
    /// First Doppler row of the green block (centered index).
    pub k_p: i64,
    /// First Doppler row of the extended band.
    pub band_start: i64,
    pub band_rows: usize,
    /// Delay width of the reserved region, starting at column 0.
    pub region_width: usize,
    /// Start column of the observed green block of each user.
    pub l_pu: Vec<usize>,
    pub m_p: usize,
    pub n_p: usize,
    pub m_g: usize,
    pub n_g: usize,
}

impl PilotLayout {
    pub fn new(kind: PilotKind, params: &OtfsParams) -> Result<Self> {
        params.check_fit(kind)?;
        let k_p = -((params.n_p / 2) as i64);
        let l_pu = (0..params.users)
            .map(|u| match kind {
                PilotKind::Conventional => params.m_g + u * (params.m_p + params.m_g),
                PilotKind::Csep => params.m_g + u * params.m_p,
            })
            .collect();
        Ok(PilotLayout {
            kind,
            users: params.users,
            k_p,
            band_start: k_p - params.n_g.div_ceil(2) as i64,
            band_rows: params.n_p + params.n_g,
            region_width: params.region_width(kind),
            l_pu,
            m_p: params.m_p,
            n_p: params.n_p,
            m_g: params.m_g,
            n_g: params.n_g,
        })
    }

    /// Delay period of the ZC pattern a user transmits.
    pub fn pattern_period(&self) -> usize {
        match self.kind {
            PilotKind::Conventional => self.m_p,
            PilotKind::Csep => self.users * self.m_p,
        }
    }

    /// First observed delay column for user `u`.
    pub fn obs_start(&self, u: usize) -> usize {
        match self.kind {
            PilotKind::Conventional => self.l_pu[u],
            PilotKind::Csep => self.m_g,
        }
    }

    /// Observed delay columns per user (`M_p`, or `K·M_p` for CSEP).
    pub fn obs_width(&self) -> usize {
        self.pattern_period()
    }

    /// Rows of the per-user observation vector, `N_p` times the observed width.
    pub fn obs_len(&self) -> usize {
        self.obs_width() * self.n_p
    }

    /// Amplitude that brings pilot cells to unit magnitude.
    pub fn pilot_gain(&self) -> f64 {
        (self.obs_len() as f64).sqrt()
    }

    /// `(k, l)` of observation row `p = (l − l_start)·N_p + (k − k_p)`.
    pub fn obs_position(&self, u: usize, p: usize) -> (i64, usize) {
        (
            self.k_p + (p % self.n_p) as i64,
            self.obs_start(u) + p / self.n_p,
        )
    }

    /// Whether `(k, l)` lies in the reserved band × region rectangle.
    pub fn is_reserved(&self, k: i64, l: usize, n: usize) -> bool {
        let offset = (k - self.band_start).rem_euclid(n as i64) as usize;
        offset < self.band_rows && l < self.region_width
    }

    /// Unscaled ZC product `C_u` at position `(k, l)` relative to the green origin,
    /// extended periodically.
    fn pattern(&self, u: usize, dk: i64, dl: i64) -> Complex64 {
        let shift = match self.kind {
            PilotKind::Conventional => 0,
            PilotKind::Csep => (u * self.m_p) as i64,
        };
        zc_entry(self.pattern_period(), shift, dl) * zc_entry(self.n_p, 0, dk)
    }

    /// Pilot symbol user `u` places at `(k, l)`; zero outside its pilot cells.
    pub fn pilot_symbol(&self, u: usize, k: i64, l: usize, n: usize) -> Complex64 {
        if !self.is_reserved(k, l, n) {
            return Complex64::new(0.0, 0.0);
        }
        let (first, origin) = match self.kind {
            PilotKind::Conventional => (self.l_pu[u] - self.m_g, self.l_pu[u]),
            PilotKind::Csep => (0, self.m_g),
        };
        let end = origin + self.pattern_period();
        if l < first || l >= end {
            return Complex64::new(0.0, 0.0);
        }
        let dk = (k - self.band_start).rem_euclid(n as i64) + self.band_start - self.k_p;
        self.pattern(u, dk, l as i64 - origin as i64) * self.pilot_gain()
    }

    /// Data cells in storage order (row `k mod N`, then delay).
    pub fn data_cells(&self, params: &OtfsParams) -> Vec<(usize, usize)> {
        let mut cells = Vec::with_capacity(params.grid_cells() - self.band_rows * self.region_width);
        for row in 0..params.n {
            for l in 0..params.m {
                if !self.is_reserved(row as i64, l, params.n) {
                    cells.push((row, l));
                }
            }
        }
        cells
    }

    /// Pilot + guard cell count of the whole region.
    pub fn reserved_cells(&self) -> usize {
        self.band_rows * self.region_width
    }

    /// User `u`'s frame: pilots in its reserved cells, `data` over the data cells.
    pub fn build_frame(&self, u: usize, data: &[Complex64], params: &OtfsParams) -> Result<DdFrame> {
        if u >= self.users {
            return Err(Error::InvalidParameter(format!("user {u} of {}", self.users)));
        }
        let cells = self.data_cells(params);
        if data.len() != cells.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} data symbols for {} data cells",
                data.len(),
                cells.len()
            )));
        }
        let mut frame = DdFrame::zeros(u, params);
        for (&(row, l), &s) in cells.iter().zip(data) {
            frame.grid[(row, l)] = s;
        }
        self.write_pilots(u, &mut frame, params);
        Ok(frame)
    }

    /// User `u`'s frame with the pilot region only.
    pub fn pilot_frame(&self, u: usize, params: &OtfsParams) -> DdFrame {
        let mut frame = DdFrame::zeros(u, params);
        self.write_pilots(u, &mut frame, params);
        frame
    }

    fn write_pilots(&self, u: usize, frame: &mut DdFrame, params: &OtfsParams) {
        for r in 0..self.band_rows {
            let k = self.band_start + r as i64;
            for l in 0..self.region_width {
                frame.set(k, l, self.pilot_symbol(u, k, l, params.n));
            }
        }
    }

    /// Unit-norm dictionary, `obs_len × M_gN_g`: column `q ↔ (k', l')` is the
    /// observed pattern of an on-grid path at `(k', l')`.
    pub fn measurement_matrix(&self, u: usize) -> CMatrix {
        CMatrix::from_fn(self.obs_len(), self.m_g * self.n_g, |p, q| {
            self.measurement_entry(u, p, q)
        })
    }

    /// Column `q` of [`measurement_matrix`](Self::measurement_matrix).
    pub fn measurement_column(&self, u: usize, q: usize) -> Vec<Complex64> {
        (0..self.obs_len()).map(|p| self.measurement_entry(u, p, q)).collect()
    }

    fn measurement_entry(&self, u: usize, p: usize, q: usize) -> Complex64 {
        let origin = match self.kind {
            PilotKind::Conventional => self.l_pu[u],
            PilotKind::Csep => self.m_g,
        } as i64;
        let (kp, lp) = guard_position(q, self.n_g);
        let dk = (p % self.n_p) as i64 - kp;
        let dl = self.obs_start(u) as i64 + (p / self.n_p) as i64 - origin - lp as i64;
        self.pattern(u, dk, dl)
    }

    /// `Φ̄(p, q) = exp(j2πk'(M_CP + l − l')/(N(M+M_CP)))`.
    pub fn phase_matrix_coarse(&self, u: usize, params: &OtfsParams) -> CMatrix {
        let span = params.phase_span();
        CMatrix::from_fn(self.obs_len(), self.m_g * self.n_g, |p, q| {
            let (_, l) = self.obs_position(u, p);
            let (kp, lp) = guard_position(q, self.n_g);
            let arg = 2.0 * PI * kp as f64 * (params.m_cp as f64 + l as f64 - lp as f64) / span;
            Complex64::from_polar(1.0, arg)
        })
    }

    /// Phase matrix for one estimated path: its own
    /// `exp(j2πν̃(M_CP + l − τ̃)/(N(M+M_CP)))` on `support` columns, 1 elsewhere.
    pub fn phase_matrix_refined(
        &self,
        u: usize,
        doppler: f64,
        delay: f64,
        support: &[usize],
        params: &OtfsParams,
    ) -> CMatrix {
        let span = params.phase_span();
        let mut phi = CMatrix::from_element(self.obs_len(), self.m_g * self.n_g, Complex64::new(1.0, 0.0));
        for p in 0..self.obs_len() {
            let (_, l) = self.obs_position(u, p);
            let v = Complex64::from_polar(
                1.0,
                2.0 * PI * doppler * (params.m_cp as f64 + l as f64 - delay) / span,
            );
            for &q in support {
                phi[(p, q)] = v;
            }
        }
        phi
    }

    /// Noiseless observation (length `obs_len`) of user `u`'s own pilot through
    /// a unit-gain path at Doppler `doppler` and delay `delay` (bins), on the
    /// reference antenna. The pilot is separable in delay and Doppler, so the
    /// full-grid convolution factorizes.
    pub fn path_response(
        &self,
        u: usize,
        doppler: f64,
        delay: f64,
        params: &OtfsParams,
    ) -> Vec<Complex64> {
        self.response_model(u, params).response(doppler, delay)
    }

    /// Precomputed pilot factors for repeated [`path_response`](Self::path_response) calls.
    pub fn response_model(&self, u: usize, params: &OtfsParams) -> ResponseModel {
        let (n, m) = (params.n as i64, params.m as i64);
        let (first, origin) = match self.kind {
            PilotKind::Conventional => (self.l_pu[u] - self.m_g, self.l_pu[u]),
            PilotKind::Csep => (0, self.m_g),
        };
        let shift = match self.kind {
            PilotKind::Conventional => 0,
            PilotKind::Csep => (u * self.m_p) as i64,
        };
        let end = origin + self.pattern_period();
        let row_terms = (0..self.n_p)
            .map(|j| {
                let k = self.k_p + j as i64;
                (0..self.band_rows)
                    .map(|r| {
                        let src = self.band_start + r as i64;
                        ((k - src).rem_euclid(n) as f64, zc_entry(self.n_p, 0, src - self.k_p))
                    })
                    .collect()
            })
            .collect();
        let gain = Complex64::new(self.pilot_gain(), 0.0);
        let mut lags: Vec<usize> = Vec::new();
        let mut lag_index = vec![usize::MAX; params.m];
        let col_terms = (0..self.obs_width())
            .map(|j| {
                let l = (self.obs_start(u) + j) as i64;
                (first..end)
                    .map(|src| {
                        let lag = (l - src as i64).rem_euclid(m) as usize;
                        if lag_index[lag] == usize::MAX {
                            lag_index[lag] = lags.len();
                            lags.push(lag);
                        }
                        let idx = lag_index[lag];
                        let z = zc_entry(self.pattern_period(), shift, src as i64 - origin as i64) * gain;
                        (idx, z)
                    })
                    .collect()
            })
            .collect();
        ResponseModel {
            n: params.n,
            m: params.m,
            m_cp: params.m_cp,
            span: params.phase_span(),
            n_p: self.n_p,
            row_terms,
            lags: lags.into_iter().map(|l| l as f64).collect(),
            col_terms,
            obs_l: (0..self.obs_len()).map(|p| self.obs_position(u, p).1 as f64).collect(),
        }
    }

    /// Text table of region bounds per user.
    pub fn describe(&self, params: &OtfsParams) -> String {
        let mut out = String::new();
        let k_hi = self.band_start + self.band_rows as i64 - 1;
        let _ = writeln!(out, "layout: {} (K = {})", self.kind, self.users);
        let _ = writeln!(
            out,
            "band: Doppler rows {}..={} ({} rows), green rows {}..={}",
            self.band_start,
            k_hi,
            self.band_rows,
            self.k_p,
            self.k_p + self.n_p as i64 - 1
        );
        let _ = writeln!(
            out,
            "region: delay columns 0..{} ({} of {}), {} reserved cells",
            self.region_width,
            self.region_width,
            params.m,
            self.reserved_cells()
        );
        let _ = writeln!(out, "user  extension       green           shift");
        for u in 0..self.users {
            let (ext, green, shift) = match self.kind {
                PilotKind::Conventional => {
                    let l = self.l_pu[u];
                    ((l - self.m_g, l), (l, l + self.m_p), 0)
                }
                PilotKind::Csep => (
                    (0, self.m_g),
                    (self.m_g, self.m_g + self.users * self.m_p),
                    u * self.m_p,
                ),
            };
            let _ = writeln!(
                out,
                "{:<5} {:>4}..{:<9} {:>4}..{:<9} {}",
                u + 1,
                ext.0,
                ext.1,
                green.0,
                green.1,
                shift
            );
        }
        let guard_start = self.region_width - self.m_g;
        let _ = writeln!(out, "guard: delay columns {}..{}", guard_start, self.region_width);
        out
    }
}

/// User `u`'s pilot factors, ready to evaluate path responses for any
/// delay and Doppler. The response factorizes into a Doppler factor per
/// observed row, a delay factor per observed column and a joint phase.
#[derive(Debug, Clone)]
pub struct ResponseModel {
    n: usize,
    m: usize,
    m_cp: usize,
    span: f64,
    n_p: usize,
    /// Per observed row: `(cyclic Doppler shift, ZC value)` of each band row.
    row_terms: Vec<Vec<(f64, Complex64)>>,
    /// Distinct cyclic delay lags feeding the observed columns.
    lags: Vec<f64>,
    /// Per observed column: `(index into lags, scaled ZC value)`.
    col_terms: Vec<Vec<(usize, Complex64)>>,
    /// Delay bin of each observation row.
    obs_l: Vec<f64>,
}

impl ResponseModel {
    /// Doppler factor of each observed pilot row.
    pub fn doppler_factor(&self, doppler: f64) -> Vec<Complex64> {
        self.row_terms
            .iter()
            .map(|terms| terms.iter().map(|&(shift, z)| dirichlet_xi(self.n, shift - doppler) * z).sum())
            .collect()
    }

    /// Delay factor of each observed column.
    pub fn delay_factor(&self, delay: f64) -> Vec<Complex64> {
        let kernel: Vec<Complex64> = self.lags.iter().map(|&s| dirichlet_xi(self.m, delay - s)).collect();
        self.col_terms
            .iter()
            .map(|terms| terms.iter().map(|&(i, z)| kernel[i] * z).sum())
            .collect()
    }

    /// Response from precomputed factors.
    pub fn assemble(&self, rows: &[Complex64], cols: &[Complex64], doppler: f64, delay: f64) -> Vec<Complex64> {
        let scale = 2.0 * PI * doppler / self.span;
        let cols: Vec<Complex64> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let l = self.obs_l[j * self.n_p];
                c * Complex64::from_polar(1.0, scale * (self.m_cp as f64 + l - delay))
            })
            .collect();
        (0..self.obs_l.len()).map(|p| rows[p % self.n_p] * cols[p / self.n_p]).collect()
    }

    /// Observation of a unit-gain path at `doppler`, `delay` (bins).
    pub fn response(&self, doppler: f64, delay: f64) -> Vec<Complex64> {
        self.assemble(&self.doppler_factor(doppler), &self.delay_factor(delay), doppler, delay)
    }
}

/// Fraction of the DD grid taken by pilots and guards for `kind`.
pub fn overhead(kind: PilotKind, params: &OtfsParams) -> f64 {
    let width = params.region_width(kind) as f64;
    width * (params.n_p + params.n_g) as f64 / params.grid_cells() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{PathParams, UserChannel};
    use crate::geometry::{doppler_row, guard_index};
    use crate::modem::propagate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram_small() -> OtfsParams {
        OtfsParams {
            m: 64,
            n: 16,
            m_cp: 8,
            delta_f: 60e3,
            f_c: 15e9,
            m_g: 6,
            n_g: 5,
            m_p: 8,
            n_p: 5,
            users: 2,
            n_bs: 4,
            paths: 1,
            d_over_lambda: 0.5,
        }
    }

    #[test]
    fn csep_second_user_is_shifted_first() {
        let p = gram_small();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let width = lay.pattern_period();
        for k in lay.k_p..lay.k_p + p.n_p as i64 {
            for j in 0..width {
                let a = lay.pilot_symbol(0, k, p.m_g + j, p.n);
                let b = lay.pilot_symbol(1, k, p.m_g + (j + p.m_p) % width, p.n);
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn pilot_cells_unscaled_magnitude() {
        let p = gram_small();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let want = 1.0 / ((p.users * p.m_p) as f64).sqrt() / (p.n_p as f64).sqrt();
        let frame = lay.pilot_frame(0, &p);
        for r in 0..lay.band_rows {
            let k = lay.band_start + r as i64;
            for l in 0..p.m_g + p.users * p.m_p {
                let v = frame.at(k, l).norm() / lay.pilot_gain();
                assert!((v - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conventional_table_ii_region_count() {
        let mut p = OtfsParams::table_ii();
        p.users = 2;
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        assert_eq!(lay.region_width, 2 * (83 + 72) + 72);
        assert_eq!(lay.band_rows, 14);
        assert_eq!(lay.reserved_cells(), (2 * (83 + 72) + 72) * 14);
        assert_eq!(lay.data_cells(&p).len(), p.grid_cells() - lay.reserved_cells());
    }

    #[test]
    fn frame_places_data_and_pilots() {
        let p = OtfsParams::desk_ber();
        for kind in [PilotKind::Conventional, PilotKind::Csep] {
            let lay = PilotLayout::new(kind, &p).unwrap();
            let cells = lay.data_cells(&p);
            let data: Vec<Complex64> = (0..cells.len()).map(|i| Complex64::new(i as f64 + 1.0, 0.0)).collect();
            let frame = lay.build_frame(1, &data, &p).unwrap();
            for (i, &(row, l)) in cells.iter().enumerate() {
                assert_eq!(frame.grid[(row, l)], data[i]);
            }
            // pilot power equals unit data power
            let pilots: Vec<f64> = (0..lay.band_rows)
                .flat_map(|r| (0..lay.region_width).map(move |l| (r, l)))
                .map(|(r, l)| frame.at(lay.band_start + r as i64, l).norm())
                .filter(|v| *v > 0.0)
                .collect();
            assert!(pilots.iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(lay.build_frame(0, &data[1..], &p).is_err());
        }
    }

    #[test]
    fn csep_columns_are_orthonormal() {
        let p = gram_small();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        for u in 0..p.users {
            let a = lay.measurement_matrix(u);
            let g = a.adjoint() * &a;
            let eye = CMatrix::identity(g.nrows(), g.ncols());
            assert!((g - eye).iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn conventional_columns_are_cyclic_shifts() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        let a = lay.measurement_matrix(1);
        let base = a.column(guard_index(0, 0, p.n_g));
        for q in 0..p.guard_atoms() {
            let (kp, lp) = guard_position(q, p.n_g);
            for row in 0..lay.obs_len() {
                let dk = ((row % p.n_p) as i64 - kp).rem_euclid(p.n_p as i64) as usize;
                let dl = ((row / p.n_p) as i64 - lp as i64).rem_euclid(p.m_p as i64) as usize;
                assert!((a[(row, q)] - base[dl * p.n_p + dk]).norm() < 1e-14);
            }
            assert!((a.column(q).norm() - 1.0).abs() < 1e-12);
        }
    }

    fn observe(cube: &crate::modem::ReceivedCube, lay: &PilotLayout, u: usize) -> Vec<Complex64> {
        (0..lay.obs_len())
            .map(|p| {
                let (k, l) = lay.obs_position(u, p);
                cube.at(0, k, l)
            })
            .collect()
    }

    #[test]
    fn on_grid_observation_is_phase_weighted_column() {
        let p = OtfsParams::desk_sweep();
        for kind in [PilotKind::Conventional, PilotKind::Csep] {
            let lay = PilotLayout::new(kind, &p).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let data: Vec<Complex64> = (0..lay.data_cells(&p).len())
                .map(|i| Complex64::from_polar(1.0, i as f64))
                .collect();
            for (k0, l0) in [(0i64, 0usize), (2, 5), (-2, 15), (1, 9)] {
                for u in 0..p.users {
                    let alpha = Complex64::new(0.7, -0.4);
                    let path = PathParams::on_grid(alpha, l0 as i64, k0, 1.2);
                    let frames: Vec<_> = (0..p.users).map(|v| lay.build_frame(v, &data, &p).unwrap()).collect();
                    let chans: Vec<_> = (0..p.users)
                        .map(|v| UserChannel {
                            user: v,
                            paths: if v == u { vec![path] } else { vec![] },
                        })
                        .collect();
                    let cube = propagate(&frames, &chans, &p, f64::INFINITY, &mut rng).unwrap();
                    let y = observe(&cube, &lay, u);
                    let a = lay.measurement_matrix(u);
                    let q = guard_index(k0, l0, p.n_g);
                    for (row, v) in y.iter().enumerate() {
                        let (_, l) = lay.obs_position(u, row);
                        let want = alpha * lay.pilot_gain() * path.phase_factor(l, &p) * a[(row, q)];
                        assert!((v - want).norm() < 1e-9, "{kind} u={u} ({k0},{l0}) row {row}");
                    }
                }
            }
        }
    }

    #[test]
    fn path_response_matches_propagation() {
        let p = OtfsParams::desk_sweep();
        for kind in [PilotKind::Conventional, PilotKind::Csep] {
            let lay = PilotLayout::new(kind, &p).unwrap();
            for u in 0..p.users {
                let path = PathParams {
                    alpha: Complex64::new(1.0, 0.0),
                    l_int: 5,
                    iota: -0.37,
                    k_int: -1,
                    kappa: 0.41,
                    theta: std::f64::consts::FRAC_PI_2,
                };
                let frames: Vec<_> = (0..p.users).map(|v| lay.pilot_frame(v, &p)).collect();
                let chans: Vec<_> = (0..p.users)
                    .map(|v| UserChannel {
                        user: v,
                        paths: if v == u { vec![path] } else { vec![] },
                    })
                    .collect();
                let cube = propagate(&frames, &chans, &p, f64::INFINITY, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                let y = observe(&cube, &lay, u);
                let r = lay.path_response(u, path.doppler(), path.delay(), &p);
                for (a, b) in y.iter().zip(&r) {
                    assert!((a - b).norm() < 1e-9, "{kind} u={u}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn matched_filter_peaks_at_true_atom() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let a = lay.measurement_matrix(0);
        for q0 in [0, 7, 33, p.guard_atoms() - 1] {
            let y = a.column(q0).into_owned();
            let corr = a.adjoint() * y;
            let best = (0..corr.len()).max_by(|&i, &j| corr[i].norm().total_cmp(&corr[j].norm())).unwrap();
            assert_eq!(best, q0);
        }
    }

    #[test]
    fn coarse_phase_examples() {
        let mut p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        let phi = lay.phase_matrix_coarse(0, &p);
        for q in 0..p.guard_atoms() {
            let (kp, _) = guard_position(q, p.n_g);
            for row in 0..lay.obs_len() {
                assert!((phi[(row, q)].norm() - 1.0).abs() < 1e-15);
                if kp == 0 {
                    assert_eq!(phi[(row, q)], Complex64::new(1.0, 0.0));
                }
            }
        }
        p.m_cp = 0;
        let phi = lay.phase_matrix_coarse(0, &p);
        for row in 0..lay.obs_len() {
            let (_, l) = lay.obs_position(0, row);
            for q in 0..p.guard_atoms() {
                let (kp, lp) = guard_position(q, p.n_g);
                let want = Complex64::from_polar(1.0, 2.0 * PI * kp as f64 * (l as f64 - lp as f64) / p.phase_span());
                assert!((phi[(row, q)] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn refined_phase_examples() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        let coarse = lay.phase_matrix_coarse(0, &p);
        let q = guard_index(1, 4, p.n_g);
        let support = [q, guard_index(2, 4, p.n_g), guard_index(1, 5, p.n_g)];
        let refined = lay.phase_matrix_refined(0, 1.0, 4.0, &support, &p);
        for row in 0..lay.obs_len() {
            assert!((refined[(row, q)] - coarse[(row, q)]).norm() < 1e-14);
            for col in 0..p.guard_atoms() {
                assert!((refined[(row, col)].norm() - 1.0).abs() < 1e-15);
                if !support.contains(&col) {
                    assert_eq!(refined[(row, col)], Complex64::new(1.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn refined_phase_raises_matched_filter_gain() {
        let mut p = OtfsParams::desk_sweep();
        p.users = 1;
        let lay = PilotLayout::new(PilotKind::Conventional, &p).unwrap();
        let path = PathParams {
            alpha: Complex64::new(1.0, 0.0),
            l_int: 6,
            iota: 0.0,
            k_int: 2,
            kappa: 0.4,
            theta: 1.0,
        };
        let cube = propagate(
            &[lay.pilot_frame(0, &p)],
            &[UserChannel { user: 0, paths: vec![path] }],
            &p,
            f64::INFINITY,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let y = CMatrix::from_iterator(lay.obs_len(), 1, observe(&cube, &lay, 0));
        let a = lay.measurement_matrix(0);
        let q = guard_index(2, 6, p.n_g);
        let gain = |phi: &CMatrix| {
            let col = a.column(q).component_mul(&phi.column(q));
            (col.adjoint() * &y)[(0, 0)].norm()
        };
        let coarse = lay.phase_matrix_coarse(0, &p);
        let refined = lay.phase_matrix_refined(0, path.doppler(), path.delay(), &[q], &p);
        assert!(gain(&refined) > gain(&coarse));
    }

    #[test]
    fn overhead_examples() {
        let mut p = OtfsParams::table_ii();
        p.users = 1;
        assert!((overhead(PilotKind::Conventional, &p) - overhead(PilotKind::Csep, &p)).abs() < 1e-15);
        p.users = 6;
        let ind = overhead(PilotKind::Conventional, &p);
        let csep = overhead(PilotKind::Csep, &p);
        assert!((ind - 1002.0 * 14.0 / (1024.0 * 31.0)).abs() < 1e-12);
        assert!((csep / ind - 642.0 / 1002.0).abs() < 1e-12);
        let mut last = (0.0, 0.0);
        for k in 1..=6 {
            p.users = k;
            let now = (overhead(PilotKind::Conventional, &p), overhead(PilotKind::Csep, &p));
            assert!(now.0 > last.0 && now.1 > last.1);
            last = now;
        }
    }

    #[test]
    fn reserved_band_wraps_negative_rows() {
        let p = OtfsParams::desk_sweep();
        let lay = PilotLayout::new(PilotKind::Csep, &p).unwrap();
        let rows: Vec<usize> = (0..p.n)
            .filter(|&r| lay.is_reserved(r as i64, 0, p.n))
            .collect();
        assert_eq!(rows.len(), lay.band_rows);
        assert!(rows.contains(&doppler_row(lay.band_start, p.n)));
        assert!(!lay.is_reserved(0, lay.region_width, p.n));
    }
}
