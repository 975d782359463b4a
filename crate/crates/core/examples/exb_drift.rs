//! Crossed fields: the bottom front of the q-marginal drifts at speed E/B.

use emwalk::experiments::{front_speed, run_cell, CellRequest};
use emwalk::WalkParams;

fn main() -> emwalk::Result<()> {
    let steps = 300;
    for e in [0.03, 0.05] {
        let cell = run_cell(&CellRequest {
            epsa_e: e,
            epsa_b: 0.16,
            steps,
            extent: 2 * steps + 3,
            walk: WalkParams::default(),
            record_fronts: true,
            monitor_continuity: false,
            snapshots: vec![steps],
        })?;
        let (fitted, expected, rel) = front_speed(&cell);
        println!(
            "εA·E = {e}: fitted speed {:.5}, E/B = {expected:.5}, relative error {:+.2}%, P_max(j={steps}) = {:.5}",
            fitted.unwrap_or(f64::NAN),
            100.0 * rel.unwrap_or(f64::NAN),
            cell.snapshots[0].max()
        );
    }
    Ok(())
}
