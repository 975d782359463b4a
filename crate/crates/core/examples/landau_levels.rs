//! Continuum reference: Dirac-Landau levels in crossed fields from the
//! reduced one-dimensional Hamiltonian, against the closed form
//! `ℰ_n = ±√(1 − β²)·√(m² + 2nB·√(1 − β²))` at `K = 0`, `β = E/B`
//! (the unpaired level sits at `−m·√(1 − β²)`).

use emwalk::oracle::{eigenstates, reduced_hamiltonian, DiracParams, Level};

fn closed_form(level: Level, m: f64, b: f64, beta: f64) -> f64 {
    let s = (1.0 - beta * beta).sqrt();
    let ladder = |n: u32| s * (m * m + 2.0 * n as f64 * b * s).sqrt();
    match level {
        Level::Zero => -m * s,
        Level::Plus(n) => ladder(n),
        Level::Minus(n) => -ladder(n),
    }
}

fn main() -> emwalk::Result<()> {
    let (m, b) = (1.0, 1.0);
    let levels = [Level::Zero, Level::Plus(1), Level::Plus(2), Level::Plus(3), Level::Minus(1)];
    for beta in [0.0, 0.2, 0.5] {
        let h = reduced_hamiltonian(DiracParams::boosted(m, b, beta, 0.0), 12.0, 1.0 / 512.0, 4)?;
        println!("β = {beta}: Hermiticity error {:.1e}", h.hermiticity_error());
        for sol in eigenstates(&h, &levels)? {
            let exact = closed_form(sol.level, m, b, beta);
            println!("  {:>6}  energy {:+.10}   closed form {:+.10}", sol.level.to_string(), sol.energy, exact);
        }
    }
    Ok(())
}
