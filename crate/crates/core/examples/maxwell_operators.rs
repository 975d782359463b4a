//! Field tensor of the crossed-field potential, its gauge invariance and the
//! identity `D_ν D_μ F^{μν} = 0` that makes the discrete Maxwell current
//! automatically conserved.

use std::f64::consts::PI;

use emwalk::gauge::{field_tensor, field_tensor_history, maxwell_identity_check, sample_potential};
use emwalk::invariants::random_history;
use emwalk::walk::gauge_transform;
use emwalk::{FieldHistory, Grid, IndexPosition, PotentialSpec, SpinorField, WalkParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emwalk::Result<()> {
    let grid = Grid::square(15)?;
    let params = WalkParams::default();
    let (e, b) = (0.04, 0.16);
    let spec = PotentialSpec::uniform_eb(e, b, params.eps_l);

    // Static crossed fields as a three-slice history of lower-index components.
    let slices: Vec<_> = (0..3).map(|j| sample_potential(&spec, grid, j, IndexPosition::Lower)).collect::<Result<_, _>>()?;
    let a: [FieldHistory; 3] = std::array::from_fn(|mu| FieldHistory::new(slices.iter().map(|s| s[mu].clone()).collect()).expect("same grid"));
    let f = field_tensor(&a, 0, params.eps_a)?;
    println!("F_01 = {:+.4}  F_02 = {:+.4}  F_12 = {:+.4}  (E = {e}, B = {b})", f.f01.at(0, 0), f.f02.at(0, 0), f.f12.at(0, 0));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_history(grid, 4, PI, &mut rng);
    let (_, a_prime) = gauge_transform(&SpinorField::zeros(grid), &a, &phi, &params)?;
    println!("max |F(A − dφ) − F(A)| = {:.2e}", field_tensor(&a_prime, 0, params.eps_a)?.max_abs_diff(&f)?);

    let history = field_tensor_history(&random_history_triple(grid, &mut rng), params.eps_a)?;
    println!("max |D_ν D_μ F^μν| for a random potential = {:.2e}", maxwell_identity_check(&history, 0, params.eps_a)?);
    Ok(())
}

fn random_history_triple(grid: Grid, rng: &mut ChaCha8Rng) -> [FieldHistory; 3] {
    std::array::from_fn(|_| random_history(grid, 3, 1.0, rng))
}
