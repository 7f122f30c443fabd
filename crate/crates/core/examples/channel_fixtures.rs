//! Seeded channel draws, their text records and the binary cube dump.
//!
//! cargo run --release --example channel_fixtures

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otfs_csep::channel::{channels_from_text, channels_to_text, max_doppler_taps, sample_channel};
use otfs_csep::geometry::{OtfsParams, PilotKind};
use otfs_csep::modem::{propagate, ReceivedCube};
use otfs_csep::pilots::PilotLayout;

fn main() -> otfs_csep::Result<()> {
    let params = OtfsParams::desk_sweep();
    let v_max = 300.0 / 3.6;
    println!("Doppler extent at 300 km/h: {:.3} bins", max_doppler_taps(v_max, &params));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let channels = (0..params.users)
        .map(|u| sample_channel(&params, u, v_max, &mut rng))
        .collect::<otfs_csep::Result<Vec<_>>>()?;
    let text = channels_to_text(&channels);
    print!("{text}");
    assert_eq!(channels_from_text(&text)?, channels);

    let layout = PilotLayout::new(PilotKind::Csep, &params)?;
    let frames: Vec<_> = (0..params.users).map(|u| layout.pilot_frame(u, &params)).collect();
    let cube = propagate(&frames, &channels, &params, 20.0, &mut rng)?;
    let mut bytes = Vec::new();
    cube.write_binary(&mut bytes)?;
    let back = ReceivedCube::read_binary(bytes.as_slice())?;
    println!("cube {:?}: {} bytes, round trip exact: {}", cube.dims(), bytes.len(), back == cube);
    Ok(())
}
