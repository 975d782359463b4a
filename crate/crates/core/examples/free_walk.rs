//! A walker started at the origin in zero field: the probability stays
//! normalized and the cloud spreads ballistically inside the light cone.

use emwalk::observables::TrajectoryStats;
use emwalk::{evolve, Grid, PotentialSpec, SpinorField, WalkParams};

fn main() -> emwalk::Result<()> {
    let steps = 120;
    let grid = Grid::square(2 * steps + 3)?;
    let params = WalkParams::default();
    let mut stats = TrajectoryStats::new(params.eps_l, false);
    evolve(SpinorField::delta_minus(grid), &PotentialSpec::uniform_eb(0.0, 0.0, 1.0), steps, &params, &mut [&mut stats])?;

    println!("{:>5} {:>14} {:>10} {:>10}", "j", "norm - 1", "p-spread", "q-spread");
    for j in (0..=steps).step_by(20) {
        println!(
            "{j:>5} {:>14.3e} {:>10.3} {:>10.3}",
            stats.norm.value[j] - 1.0,
            stats.p_spread.value[j],
            stats.q_spread.value[j]
        );
    }
    Ok(())
}
