//! The continuum Dirac reference against closed forms, and the walk against
//! the reference.

use emwalk::oracle::{
    convergence_study, delta_l, eigenstates, reduced_hamiltonian, ConvergenceSpec, DiracParams, Level,
};

#[test]
fn zero_field_ladder_matches_the_landau_formula() {
    // E = 0: energies ±√(m² + 2nB) and the unpaired level at −m.
    for (m, b) in [(1.0, 1.0), (0.5, 2.0)] {
        let h = reduced_hamiltonian(DiracParams::new(m, 0.0, b, 0.0), 12.0, 1.0 / 256.0, 4).unwrap();
        let levels = [Level::Zero, Level::Plus(1), Level::Plus(2), Level::Minus(1), Level::Minus(2)];
        for sol in eigenstates(&h, &levels).unwrap() {
            let exact = match sol.level {
                Level::Zero => -m,
                Level::Plus(n) => (m * m + 2.0 * n as f64 * b).sqrt(),
                Level::Minus(n) => -(m * m + 2.0 * n as f64 * b).sqrt(),
            };
            assert!((sol.energy - exact).abs() < 1e-8, "{}: {} vs {exact}", sol.level, sol.energy);
        }
    }
}

#[test]
fn crossed_field_levels_follow_the_boosted_frame_formula() {
    // A boost with velocity β = E/B removes the electric field; back in the
    // lab frame the K = 0 levels are ℰ_n = √(1 − β²)·√(m² + 2nB·√(1 − β²)).
    let (m, b) = (1.0, 1.0);
    for beta in [0.2, 0.5] {
        let h = reduced_hamiltonian(DiracParams::boosted(m, b, beta, 0.0), 12.0, 1.0 / 256.0, 4).unwrap();
        let s = (1.0 - beta * beta).sqrt();
        for sol in eigenstates(&h, &[Level::Plus(1), Level::Plus(2)]).unwrap() {
            let Level::Plus(n) = sol.level else { unreachable!() };
            let exact = s * (m * m + 2.0 * n as f64 * b * s).sqrt();
            assert!((sol.energy - exact).abs() < 1e-7, "β = {beta}, {}: {} vs {exact}", sol.level, sol.energy);
        }
    }
}

#[test]
fn reduced_hamiltonian_is_hermitian() {
    let h = reduced_hamiltonian(DiracParams::new(1.0, 0.3, 1.0, 0.7), 6.0, 1.0 / 64.0, 4).unwrap();
    assert!(h.hermiticity_error() < 1e-14);
}

#[test]
fn walk_error_scales_quadratically_in_the_step() {
    let spec = ConvergenceSpec {
        levels: vec![Level::Plus(1)],
        betas: vec![0.0, 0.3],
        exponents: (4..=7).collect(),
        ..ConvergenceSpec::default()
    };
    let report = convergence_study(&spec).unwrap();
    assert_eq!(report.rows.len(), 8);
    for c in &report.curves {
        assert!((c.slope - 2.0).abs() < 0.05, "{} β = {}: slope {}", c.level, c.beta, c.slope);
        assert!(c.refinement_drift < 1e-9);
    }
    // δ halves twice per halving of ε.
    let d: Vec<f64> = report.rows.iter().filter(|r| r.beta == 0.0).map(|r| r.delta).collect();
    for w in d.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() < 0.2);
    }
}

#[test]
fn delta_is_small_but_nonzero_for_a_fine_step() {
    let h = reduced_hamiltonian(DiracParams::new(1.0, 0.0, 1.0, 0.0), 12.0, 1.0 / 512.0, 4).unwrap();
    let sol = &eigenstates(&h, &[Level::Plus(1)]).unwrap()[0];
    let d = delta_l(sol, 1.0 / 64.0, 6.0).unwrap();
    assert!(d > 0.0 && d < 1e-3, "{d}");
}
