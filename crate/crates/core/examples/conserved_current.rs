//! The lattice current `J^μ` obeys `D_μ J^μ = 0` exactly: the continuity
//! residual of a walk in crossed fields stays at rounding level every step.

use emwalk::current::ContinuityMonitor;
use emwalk::{evolve, Grid, PotentialSpec, SpinorField, WalkParams};

fn main() -> emwalk::Result<()> {
    let steps = 100;
    let grid = Grid::square(2 * steps + 3)?;
    let params = WalkParams::default();
    let mut monitor = ContinuityMonitor::new(params.eps_a);
    let potential = PotentialSpec::uniform_eb(0.04, 0.16, params.eps_l);
    evolve(SpinorField::delta_minus(grid), &potential, steps, &params, &mut [&mut monitor])?;

    for (j, r) in monitor.max_residual_per_step.iter().enumerate().step_by(10) {
        println!("step {j:>3}: max |D_μ J^μ| = {r:.2e}");
    }
    println!("worst over {} steps: {:.2e}", steps, monitor.max_residual());
    Ok(())
}
