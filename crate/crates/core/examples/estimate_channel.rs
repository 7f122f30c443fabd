//! One noisy multi-user frame through both estimation pipelines.
//!
//! cargo run --release --example estimate_channel [snr_db] [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otfs_csep::analysis::random_qam16;
use otfs_csep::channel::sample_channel;
use otfs_csep::estimator::{estimate, EstimatorOptions, REPORT_CSV_HEADER};
use otfs_csep::geometry::{OtfsParams, PilotKind};
use otfs_csep::modem::propagate;
use otfs_csep::pilots::PilotLayout;

fn main() -> otfs_csep::Result<()> {
    let mut args = std::env::args().skip(1);
    let snr: f64 = args.next().map_or(15.0, |s| s.parse().expect("snr"));
    let seed: u64 = args.next().map_or(3, |s| s.parse().expect("seed"));
    let params = OtfsParams::desk_sweep();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = (0..params.users)
        .map(|u| sample_channel(&params, u, 300.0 / 3.6, &mut rng))
        .collect::<otfs_csep::Result<Vec<_>>>()?;

    for kind in [PilotKind::Csep, PilotKind::Conventional] {
        let layout = PilotLayout::new(kind, &params)?;
        let cells = layout.data_cells(&params).len();
        let frames = (0..params.users)
            .map(|u| layout.build_frame(u, &random_qam16(&mut rng, cells), &params))
            .collect::<otfs_csep::Result<Vec<_>>>()?;
        let cube = propagate(&frames, &channels, &params, snr, &mut rng)?;
        let report = estimate(&cube, &layout, &params, EstimatorOptions::default());
        println!("# {kind} at {snr} dB");
        println!("{REPORT_CSV_HEADER}");
        print!("{}", report.csv_rows(seed, &channels, &params));
    }
    Ok(())
}
