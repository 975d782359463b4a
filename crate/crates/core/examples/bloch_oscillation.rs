//! Bloch oscillations: in a uniform electric field the p-mean oscillates
//! with period `2π/(εA·E)`.

use std::f64::consts::TAU;

use emwalk::experiments::{run_cell, CellRequest};
use emwalk::observables::bloch_period;
use emwalk::WalkParams;

fn main() -> emwalk::Result<()> {
    for e in [0.16, 0.32, 0.64] {
        let steps = (3.0 * TAU / e).ceil() as usize;
        let cell = run_cell(&CellRequest {
            epsa_e: e,
            epsa_b: 0.0,
            steps,
            extent: 2 * steps + 3,
            walk: WalkParams::default(),
            record_fronts: false,
            monitor_continuity: false,
            snapshots: Vec::new(),
        })?;
        let (period, dev) = bloch_period(&cell.stats.p_mean)?;
        println!("εA·E = {e}: period {period:.3} ± {dev:.3} (expected {:.3}), norm drift {:.1e}", TAU / e, cell.norm_drift);
    }
    Ok(())
}
