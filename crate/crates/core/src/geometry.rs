//! Frame geometry and delay-Doppler index conventions.
//!
//! Doppler bins are addressed in centered form, `k ∈ {−⌊N/2⌋, …, N−1−⌊N/2⌋}`,
//! and stored in rows `0..N` through `k mod N`. Delay bins are plain
//! `0..M`. The guard window of a channel is vectorized Doppler-fastest:
//! `q = l'·N_g + (k' + ⌊N_g/2⌋)` for `k' ∈ [−⌊N_g/2⌋, ⌊N_g/2⌋]`,
//! `l' ∈ [0, M_g)` (zero-based).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for Doppler conversions (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Which embedded-pilot arrangement a frame uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotKind {
    /// One pilot block plus guard per user, side by side in delay.
    Conventional,
    /// One shared region; users separated by cyclic shifts of a ZC pilot.
    Csep,
}

impl PilotKind {
    pub fn name(self) -> &'static str {
        match self {
            PilotKind::Conventional => "conventional",
            PilotKind::Csep => "csep",
        }
    }
}

impl std::str::FromStr for PilotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conventional" | "conv" | "individual" => Ok(PilotKind::Conventional),
            "csep" => Ok(PilotKind::Csep),
            other => Err(Error::Parse(format!("unknown pilot kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for PilotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static frame and array geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtfsParams {
    /// Subcarriers (delay bins).
    pub m: usize,
    /// Symbol slots (Doppler bins).
    pub n: usize,
    /// Cyclic prefix length in delay bins.
    pub m_cp: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    pub m_g: usize,
    pub n_g: usize,
    pub m_p: usize,
    pub n_p: usize,
    /// Number of single-antenna users.
    pub users: usize,
    /// Base-station antennas.
    pub n_bs: usize,
    /// Paths per user.
    pub paths: usize,
    #[serde(default = "default_d_over_lambda")]
    pub d_over_lambda: f64,
}

fn default_d_over_lambda() -> f64 {
    0.5
}

impl OtfsParams {
    /// The full-size configuration used for the published experiments.
    pub fn table_ii() -> Self {
        OtfsParams {
            m: 1024,
            n: 31,
            m_cp: 72,
            delta_f: 60e3,
            f_c: 15e9,
            m_g: 72,
            n_g: 7,
            m_p: 83,
            n_p: 7,
            users: 4,
            n_bs: 16,
            paths: 5,
            d_over_lambda: 0.5,
        }
    }

    /// Reduced frame for NMSE sweeps on a desktop.
    pub fn desk_sweep() -> Self {
        OtfsParams {
            m: 256,
            n: 16,
            m_cp: 16,
            delta_f: 60e3,
            f_c: 15e9,
            m_g: 16,
            n_g: 5,
            m_p: 19,
            n_p: 5,
            users: 2,
            n_bs: 16,
            paths: 3,
            d_over_lambda: 0.5,
        }
    }

    /// Reduced frame for LS detection (dense-equivalent solves stay cheap).
    pub fn desk_ber() -> Self {
        OtfsParams {
            m: 64,
            n: 16,
            m_cp: 16,
            delta_f: 60e3,
            f_c: 15e9,
            m_g: 8,
            n_g: 5,
            m_p: 10,
            n_p: 5,
            users: 2,
            n_bs: 16,
            paths: 3,
            d_over_lambda: 0.5,
        }
    }

    /// Symbol duration without CP, `1/Δf`.
    pub fn t(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Symbol duration including CP.
    pub fn t_sym(&self) -> f64 {
        (self.m + self.m_cp) as f64 / (self.m as f64 * self.delta_f)
    }

    pub fn t_cp(&self) -> f64 {
        self.m_cp as f64 * self.t() / self.m as f64
    }

    /// `N(M + M_CP)`, the denominator of every delay-dependent Doppler phase.
    pub fn phase_span(&self) -> f64 {
        (self.n * (self.m + self.m_cp)) as f64
    }

    pub fn half_ng(&self) -> i64 {
        (self.n_g / 2) as i64
    }

    pub fn guard_atoms(&self) -> usize {
        self.m_g * self.n_g
    }

    pub fn grid_cells(&self) -> usize {
        self.m * self.n
    }

    /// Checks the geometry invariants that do not depend on the pilot kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m == 0 || self.n == 0 {
            return bad("M and N must be positive".into());
        }
        if self.users == 0 || self.n_bs == 0 || self.paths == 0 {
            return bad("K, N_BS and P must be positive".into());
        }
        if self.m_g == 0 || self.n_g == 0 {
            return bad("guard extents must be positive".into());
        }
        if !(self.delta_f > 0.0) || !(self.f_c > 0.0) {
            return bad("Δf and f_c must be positive".into());
        }
        if !(self.d_over_lambda > 0.0) {
            return bad("antenna spacing d/λ must be positive".into());
        }
        if self.n_g % 2 == 0 {
            return Err(Error::LayoutOverflow(format!(
                "N_g must be odd (got {})",
                self.n_g
            )));
        }
        if self.m_p < self.m_g {
            return Err(Error::LayoutOverflow(format!(
                "M_p ≥ M_g violated ({} < {})",
                self.m_p, self.m_g
            )));
        }
        if self.n_p < self.n_g {
            return Err(Error::LayoutOverflow(format!(
                "N_p ≥ N_g violated ({} < {})",
                self.n_p, self.n_g
            )));
        }
        if self.m_cp < self.m_g {
            return Err(Error::LayoutOverflow(format!(
                "M_CP ≥ M_g violated ({} < {})",
                self.m_cp, self.m_g
            )));
        }
        if self.n_p + self.n_g > self.n {
            return Err(Error::LayoutOverflow(format!(
                "N_p + N_g ≤ N violated ({} + {} > {})",
                self.n_p, self.n_g, self.n
            )));
        }
        Ok(())
    }

    /// Delay width of the pilot region for `kind` with the configured user count.
    pub fn region_width(&self, kind: PilotKind) -> usize {
        match kind {
            PilotKind::Conventional => self.users * (self.m_p + self.m_g) + self.m_g,
            PilotKind::Csep => self.users * self.m_p + 2 * self.m_g,
        }
    }

    /// Full validation including the delay-width fit of the chosen layout.
    pub fn check_fit(&self, kind: PilotKind) -> Result<()> {
        self.validate()?;
        let width = self.region_width(kind);
        if width > self.m {
            let rule = match kind {
                PilotKind::Conventional => "K(M_p+M_g)+M_g ≤ M",
                PilotKind::Csep => "K·M_p+2M_g ≤ M",
            };
            return Err(Error::LayoutOverflow(format!(
                "{rule} violated ({width} > {})",
                self.m
            )));
        }
        Ok(())
    }
}

/// A delay-Doppler grid position with a centered Doppler bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DdIndex {
    pub k: i64,
    pub l: usize,
}

impl DdIndex {
    pub fn new(k: i64, l: usize) -> Self {
        DdIndex { k, l }
    }

    /// Storage `(row, column)` for an `n`-row grid.
    pub fn to_storage(self, n: usize) -> (usize, usize) {
        (doppler_row(self.k, n), self.l)
    }

    pub fn from_storage(row: usize, l: usize, n: usize) -> Self {
        DdIndex {
            k: centered_doppler(row, n),
            l,
        }
    }
}

/// `[k]_N`: storage row of a (possibly negative) Doppler bin.
pub fn doppler_row(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Inverse of [`doppler_row`] onto the centered range.
pub fn centered_doppler(row: usize, n: usize) -> i64 {
    let hi = n - 1 - n / 2;
    if row <= hi {
        row as i64
    } else {
        row as i64 - n as i64
    }
}

/// Zero-based guard-support index of `(k', l')`.
pub fn guard_index(k: i64, l: usize, n_g: usize) -> usize {
    let half = (n_g / 2) as i64;
    debug_assert!(k.abs() <= half && k >= -half);
    l * n_g + (k + half) as usize
}

/// Inverse of [`guard_index`].
pub fn guard_position(q: usize, n_g: usize) -> (i64, usize) {
    let half = (n_g / 2) as i64;
    ((q % n_g) as i64 - half, q / n_g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_range_has_n_values() {
        for n in 1..=64usize {
            let ks: Vec<i64> = (0..n).map(|r| centered_doppler(r, n)).collect();
            let lo = -((n / 2) as i64);
            let hi = n as i64 - 1 - (n / 2) as i64;
            assert_eq!(*ks.iter().min().unwrap(), lo);
            assert_eq!(*ks.iter().max().unwrap(), hi);
            for (row, &k) in ks.iter().enumerate() {
                assert_eq!(doppler_row(k, n), row);
            }
        }
    }

    #[test]
    fn centered_round_trip() {
        for n in 1..=64usize {
            let lo = -((n / 2) as i64);
            for k in lo..lo + n as i64 {
                let idx = DdIndex::new(k, 3);
                let (row, l) = idx.to_storage(n);
                assert_eq!(DdIndex::from_storage(row, l, n), idx);
            }
        }
    }

    #[test]
    fn guard_index_is_a_bijection() {
        for &n_g in &[1usize, 3, 5, 7] {
            for m_g in 1..6usize {
                let mut seen = vec![false; m_g * n_g];
                let half = (n_g / 2) as i64;
                for l in 0..m_g {
                    for k in -half..=half {
                        let q = guard_index(k, l, n_g);
                        assert!(!seen[q]);
                        seen[q] = true;
                        assert_eq!(guard_position(q, n_g), (k, l));
                    }
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    #[test]
    fn table_ii_is_valid_for_both_layouts() {
        let p = OtfsParams::table_ii();
        p.check_fit(PilotKind::Conventional).unwrap();
        p.check_fit(PilotKind::Csep).unwrap();
        OtfsParams::desk_sweep().check_fit(PilotKind::Conventional).unwrap();
        OtfsParams::desk_ber().check_fit(PilotKind::Conventional).unwrap();
    }

    #[test]
    fn derived_durations() {
        let p = OtfsParams::table_ii();
        assert!((p.t() - 1.0 / 60e3).abs() < 1e-15);
        assert!((p.t_sym() - 1096.0 / 1024.0 / 60e3).abs() < 1e-15);
        assert!((p.t_sym() - p.t() - p.t_cp()).abs() < 1e-15);
    }

    #[test]
    fn overflow_names_the_inequality() {
        let mut p = OtfsParams::table_ii();
        p.users = 7;
        let err = p.check_fit(PilotKind::Conventional).unwrap_err();
        assert!(err.to_string().contains("K(M_p+M_g)+M_g ≤ M"), "{err}");
        p.users = 12;
        let err = p.check_fit(PilotKind::Csep).unwrap_err();
        assert!(err.to_string().contains("K·M_p+2M_g ≤ M"), "{err}");
    }
}
