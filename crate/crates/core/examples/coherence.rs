//! Cross-user coherence of the CSEP dictionary: closed form against explicit
//! columns, the worst-case bound and its admissibility test.
//!
//! cargo run --release --example coherence

use otfs_csep::analysis::{
    coherence_bound, coherence_closed_form, column_coherence, max_cross_coherence, PeakTap,
};
use otfs_csep::geometry::{OtfsParams, PilotKind};
use otfs_csep::pilots::PilotLayout;

fn main() -> otfs_csep::Result<()> {
    let params = OtfsParams::table_ii();
    let layout = PilotLayout::new(PilotKind::Csep, &params)?;

    println!("{:>6} {:>4} {:>4} {:>12} {:>12}", "dnu", "l_s", "l_t", "closed form", "columns");
    for (dnu, ls, lt) in [(0.5, 3, 3), (1.25, 0, 5), (-2.0, 6, 1), (3.7, 2, 2)] {
        let a = PeakTap::new(0, dnu, ls);
        let b = PeakTap::new(0, 0.0, lt);
        let cf = coherence_closed_form(a, b, 0, 1, &layout, &params);
        let bf = column_coherence(a, b, 0, 1, &layout, &params)?;
        println!("{dnu:>6} {ls:>4} {lt:>4} {cf:>12.4e} {bf:>12.4e}");
    }

    let mu = max_cross_coherence(&layout, &params, (params.n_g - 1) as f64, 40);
    println!("max cross-user coherence, K = {}: {mu:.3e}", params.users);
    for eps in [1e-2, 1e-3] {
        let b = coherence_bound(&params, params.users, eps);
        println!(
            "ε = {eps:e}: KM_p = {} vs limit {:.1}, admissible {}, μ_max = {:.3e}",
            params.users * params.m_p,
            b.km_p_limit,
            b.admissible,
            b.mu_max
        );
    }
    Ok(())
}
