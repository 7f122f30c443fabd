//! Region tables and pilot overheads of both layouts at the full frame size.
//!
//! cargo run --release --example pilot_layouts [users]

use otfs_csep::geometry::{OtfsParams, PilotKind};
use otfs_csep::pilots::{overhead, PilotLayout};

fn main() -> otfs_csep::Result<()> {
    let mut params = OtfsParams::table_ii();
    if let Some(k) = std::env::args().nth(1) {
        params.users = k.parse().expect("user count");
    }
    params.validate()?;
    for kind in [PilotKind::Conventional, PilotKind::Csep] {
        let layout = PilotLayout::new(kind, &params)?;
        println!("{}", layout.describe(&params));
    }
    let conv = overhead(PilotKind::Conventional, &params);
    let csep = overhead(PilotKind::Csep, &params);
    println!("overhead: conventional {conv:.4}, csep {csep:.4}, ratio {:.4}", csep / conv);
    Ok(())
}
