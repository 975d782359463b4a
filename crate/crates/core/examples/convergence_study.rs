//! Continuum-limit check: the walk propagates sampled Dirac-Landau
//! eigenstates with an error `δ(ε)` that falls as `ε²`.

use emwalk::oracle::{convergence_study, ConvergenceSpec, Level};

fn main() -> emwalk::Result<()> {
    let spec = ConvergenceSpec {
        levels: vec![Level::Plus(1), Level::Plus(2)],
        betas: vec![0.0, 0.2],
        exponents: (4..=7).collect(),
        ..ConvergenceSpec::default()
    };
    let report = convergence_study(&spec)?;
    println!("{:>6} {:>5} {:>10} {:>12}", "level", "β", "ε", "δ");
    for r in &report.rows {
        println!("{:>6} {:>5} {:>10.6} {:>12.4e}", r.level.to_string(), r.beta, r.eps, r.delta);
    }
    for c in &report.curves {
        println!("level {} β = {}: energy {:.8}, log-log slope {:.4}", c.level, c.beta, c.energy, c.slope);
    }
    Ok(())
}
