//! Fast TF-domain propagation against the direct delay-Doppler evaluation
//! on a small grid with fractional paths.
//!
//! cargo run --release --example signal_model

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otfs_csep::channel::{PathParams, UserChannel};
use otfs_csep::geometry::OtfsParams;
use otfs_csep::modem::{complex_gaussian, dd_reference, propagate, DdFrame, GridFft};

fn main() -> otfs_csep::Result<()> {
    let params = OtfsParams {
        m: 8,
        n: 8,
        m_cp: 2,
        delta_f: 60e3,
        f_c: 15e9,
        m_g: 3,
        n_g: 3,
        m_p: 1,
        n_p: 1,
        users: 1,
        n_bs: 4,
        paths: 2,
        d_over_lambda: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut frame = DdFrame::zeros(0, &params);
    frame.grid.iter_mut().for_each(|v| *v = complex_gaussian(&mut rng, 1.0));

    // the transforms are unitary
    let fft = GridFft::for_params(&params);
    let back = fft.sfft(&fft.isfft(&frame.grid));
    println!("SFFT(ISFFT(X)) error: {:.2e}", (back - &frame.grid).norm());

    let paths = vec![
        PathParams { alpha: Complex64::new(0.9, 0.2), l_int: 1, iota: 0.25, k_int: 0, kappa: -0.3, theta: 1.0 },
        PathParams { alpha: Complex64::new(-0.3, 0.4), l_int: 2, iota: -0.4, k_int: 1, kappa: 0.15, theta: 2.2 },
    ];
    let channels = [UserChannel { user: 0, paths }];
    let fast = propagate(&[frame.clone()], &channels, &params, f64::INFINITY, &mut rng)?;
    let direct = dd_reference(&[frame], &channels, &params)?;
    let dev = fast
        .antennas
        .iter()
        .zip(&direct.antennas)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
        .fold(0.0f64, f64::max);
    println!("propagate vs direct DD evaluation: max |Δ| = {dev:.2e} over {} antennas", params.n_bs);
    Ok(())
}
