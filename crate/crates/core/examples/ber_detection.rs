//! LS detection of 16-QAM data with estimated and with perfect CSI on the
//! reduced frame.
//!
//! cargo run --release --example ber_detection [snr_db]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otfs_csep::analysis::{ber_ls, random_qam16};
use otfs_csep::channel::{sample_channel, UserChannel};
use otfs_csep::estimator::{estimate, EstimatorOptions};
use otfs_csep::geometry::{OtfsParams, PilotKind};
use otfs_csep::modem::{noise_variance, propagate};
use otfs_csep::pilots::PilotLayout;

fn main() -> otfs_csep::Result<()> {
    let snr: f64 = std::env::args().nth(1).map_or(5.0, |s| s.parse().expect("snr"));
    let params = OtfsParams::desk_ber();
    let layout = PilotLayout::new(PilotKind::Csep, &params)?;
    let cells = layout.data_cells(&params).len();
    let (mut est_err, mut ideal_err, mut bits) = (0, 0, 0);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = (0..params.users)
            .map(|u| sample_channel(&params, u, 300.0 / 3.6, &mut rng))
            .collect::<otfs_csep::Result<Vec<_>>>()?;
        let data: Vec<_> = (0..params.users).map(|_| random_qam16(&mut rng, cells)).collect();
        let frames = (0..params.users)
            .map(|u| layout.build_frame(u, &data[u], &params))
            .collect::<otfs_csep::Result<Vec<_>>>()?;
        let cube = propagate(&frames, &channels, &params, snr, &mut rng)?;
        let csi = estimate(&cube, &layout, &params, EstimatorOptions::default())
            .users
            .into_iter()
            .map(|r| r.map(|e| UserChannel { user: e.user, paths: e.paths }))
            .collect::<otfs_csep::Result<Vec<_>>>()?;
        let lambda = noise_variance(snr);
        let est = ber_ls(&data, &cube, &csi, &layout, &params, lambda)?;
        let ideal = ber_ls(&data, &cube, &channels, &layout, &params, lambda)?;
        est_err += est.bit_errors;
        ideal_err += ideal.bit_errors;
        bits += est.bits;
    }
    println!(
        "csep at {snr} dB over {bits} bits: BER {:.3e} estimated CSI, {:.3e} perfect CSI",
        est_err as f64 / bits as f64,
        ideal_err as f64 / bits as f64
    );
    Ok(())
}
