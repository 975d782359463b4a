//! Acceptance run: one PASS/FAIL line per criterion at the reference
//! tolerances, followed by a tally. Exits non-zero when any criterion fails.
//!
//! Trajectories are shared between criteria; every one of them carries the
//! continuity monitor, so criterion 3 covers every step of every run.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, TAU};
use std::process::ExitCode;
use std::time::Instant;

use emwalk::experiments::{bloch_steps, front_speed, run_cell, CellRequest, CellResult};
use emwalk::invariants::{self, InvariantSettings, SuiteResult};
use emwalk::observables::bloch_period;
use emwalk::oracle::{convergence_study, ConvergenceSpec, Level};
use emwalk::WalkParams;
use rayon::prelude::*;

const B_DRIFT: f64 = 0.16;
const J_DRIFT: usize = 500;
const J_LOCALIZATION: usize = 1000;
const BLOCH_E: [f64; 4] = [0.02, 0.04, 0.08, 0.16];
const DRIFT_E: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];
const PMAX_E: [f64; 5] = [0.0, 0.01, 0.02, 0.03, 0.04];
const PMAX_REF: [f64; 5] = [0.0943, 0.0578, 0.0209, 0.0181, 0.0178];
const SPREAD_E: [f64; 7] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06];
const STRONG_E: f64 = 0.1;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, name: &str, pass: bool, detail: String) {
        let line = format!("CRITERION {n:>2} {:<4} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((n, pass, line));
    }
}

fn request(e: f64, b: f64, steps: usize, fronts: bool) -> CellRequest {
    CellRequest {
        epsa_e: e,
        epsa_b: b,
        steps,
        extent: 2 * steps + 3,
        walk: WalkParams::default(),
        record_fronts: fronts,
        monitor_continuity: true,
        snapshots: Vec::new(),
    }
}

fn find(cells: &[CellResult], e: f64, b: f64, steps: usize) -> &CellResult {
    cells
        .iter()
        .find(|c| c.epsa_e == e && c.epsa_b == b && c.stats.norm.len() == steps + 1)
        .unwrap_or_else(|| panic!("trajectory (E={e}, B={b}, J={steps}) was not scheduled"))
}

fn suite_detail(r: &SuiteResult) -> String {
    format!("max deviation {:.2e} over {} instances (tolerance {:.0e})", r.max_deviation, r.instances, r.tolerance)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut report = Report { lines: Vec::new() };

    // Every trajectory the criteria need, plus one 500-step run for each
    // remaining potential of the experiment defaults (unitarity coverage).
    let loc_contrast = [FRAC_PI_4, FRAC_PI_2 + 0.04];
    let mut requests: Vec<CellRequest> = Vec::new();
    for e in SPREAD_E.iter().chain(&[STRONG_E]) {
        requests.push(request(*e, B_DRIFT, J_DRIFT, true));
    }
    let j_bloch = bloch_steps(BLOCH_E[0]);
    for e in BLOCH_E {
        requests.push(request(e, 0.0, j_bloch, false));
    }
    for b in loc_contrast {
        requests.push(request(FRAC_PI_2, b, J_LOCALIZATION, false));
    }
    requests.push(request(0.64, 0.0, J_DRIFT, false));
    for b in [1.0, FRAC_PI_3] {
        for e in [0.06, FRAC_PI_2] {
            requests.push(request(e, b, J_DRIFT, false));
        }
    }
    for b in [0.16, FRAC_PI_4 + 0.04, FRAC_PI_3, FRAC_PI_3 + 0.04, FRAC_PI_2] {
        requests.push(request(FRAC_PI_2, b, J_DRIFT, false));
    }
    // Longest runs first keeps the parallel schedule balanced.
    requests.sort_by_key(|r| std::cmp::Reverse(r.steps));

    let cells: Vec<CellResult> = match requests.par_iter().map(run_cell).collect() {
        Ok(c) => c,
        Err(e) => {
            println!("trajectory run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("# {} trajectories in {:.0} s", cells.len(), start.elapsed().as_secs_f64());

    // 1. Unitarity over the first 500 steps of every run.
    let drift = cells
        .iter()
        .map(|c| c.stats.norm.value.iter().take(J_DRIFT + 1).fold(0.0f64, |m, n| m.max((n - 1.0).abs())))
        .fold(0.0f64, f64::max);
    report.record(
        1,
        "unitarity",
        drift <= 1e-12,
        format!("max |Σ P − 1| = {drift:.2e} over 500 steps of {} runs (tolerance 1e-12)", cells.len()),
    );

    // 2–5. Randomized exact-identity suites.
    let settings = InvariantSettings::default();
    let suites = [
        invariants::gauge_covariance_suite(&settings),
        invariants::continuity_suite(&settings),
        invariants::maxwell_identity_suite(&settings),
        invariants::tensor_gauge_suite(&settings),
    ];
    let suites: Vec<SuiteResult> = match suites.into_iter().collect() {
        Ok(s) => s,
        Err(e) => {
            println!("identity suite failed to run: {e}");
            return ExitCode::FAILURE;
        }
    };
    report.record(
        2,
        "discrete gauge invariance",
        suites[0].passed,
        format!("{} on {}² grids, {} steps", suite_detail(&suites[0]), settings.grid, settings.steps),
    );
    let run_residual = cells.iter().map(|c| c.max_continuity_residual.unwrap_or(f64::INFINITY)).fold(0.0f64, f64::max);
    let continuity = run_residual.max(suites[1].max_deviation);
    let steps_checked: usize = cells.iter().map(|c| c.stats.norm.len() - 1).sum();
    report.record(
        3,
        "continuity",
        continuity <= 1e-13,
        format!(
            "max |D_μ J^μ| = {run_residual:.2e} over {steps_checked} steps of all runs, {:.2e} on random potentials (tolerance 1e-13)",
            suites[1].max_deviation
        ),
    );
    report.record(4, "Maxwell identity", suites[2].passed, suite_detail(&suites[2]));
    report.record(5, "field-tensor gauge invariance", suites[3].passed, suite_detail(&suites[3]));

    // 6. Continuum convergence.
    let spec = ConvergenceSpec::default();
    match convergence_study(&spec) {
        Ok(rep) => {
            let expected: Vec<(Level, f64)> = vec![
                (Level::Plus(1), 0.0),
                (Level::Plus(1), 0.2),
                (Level::Plus(1), 0.5),
                (Level::Plus(2), 0.0),
                (Level::Plus(3), 0.0),
            ];
            let covered = expected.iter().all(|x| rep.curves.iter().any(|c| (c.level, c.beta) == *x));
            let worst = rep.curves.iter().map(|c| (c.slope - 2.0).abs()).fold(0.0f64, f64::max);
            let slopes: Vec<String> = rep.curves.iter().map(|c| format!("{}@β={}: {:.4}", c.level, c.beta, c.slope)).collect();
            report.record(
                6,
                "convergence slope",
                covered && worst <= 0.1 && rep.curves[0].fit_eps.len() == spec.exponents.len(),
                format!("slopes {} (target 2.0 ± 0.1, ε = 2^-k, k = 4..9)", slopes.join(", ")),
            );
        }
        Err(e) => report.record(6, "convergence slope", false, format!("study failed: {e}")),
    }

    // 7. Bloch period.
    let mut ok = true;
    let mut parts = Vec::new();
    for e in BLOCH_E {
        let expected = TAU / e;
        match bloch_period(&find(&cells, e, 0.0, j_bloch).stats.p_mean) {
            Ok((t, _)) => {
                ok &= (t - expected).abs() <= 1.0;
                parts.push(format!("E={e}: {t:.3} vs {expected:.3}"));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("E={e}: {err}"));
            }
        }
    }
    report.record(7, "Bloch period", ok, format!("{} (J = {j_bloch}, tolerance ±1 step)", parts.join("; ")));

    // 8. Drift speed.
    let mut ok = true;
    let mut parts = Vec::new();
    for e in DRIFT_E {
        let (fitted, expected, rel) = front_speed(find(&cells, e, B_DRIFT, J_DRIFT));
        match (fitted, rel) {
            (Some(v), Some(r)) => {
                ok &= r.abs() <= 0.01;
                parts.push(format!("E={e}: {v:.5} vs {expected:.5} ({:+.2}%)", 100.0 * r));
            }
            _ => {
                ok = false;
                parts.push(format!("E={e}: no front fit"));
            }
        }
    }
    report.record(8, "drift speed E/B", ok, format!("{} (tolerance 1%)", parts.join("; ")));

    // 9. Peak probability at j = 500.
    let mut ok = true;
    let mut parts = Vec::new();
    for (e, reference) in PMAX_E.iter().zip(PMAX_REF) {
        let p = find(&cells, *e, B_DRIFT, J_DRIFT).stats.p_max.value[J_DRIFT];
        let rel = (p - reference) / reference;
        ok &= rel.abs() <= 0.02;
        parts.push(format!("E={e}: {p:.5} vs {reference} ({:+.2}%)", 100.0 * rel));
    }
    report.record(9, "P_max at j = 500", ok, format!("{} (tolerance 2%)", parts.join("; ")));

    // 10. Localization contrast.
    let spread_at = |b: f64| find(&cells, FRAC_PI_2, b, J_LOCALIZATION).stats.q_spread.value[J_LOCALIZATION];
    let (rational, irrational) = (spread_at(FRAC_PI_4), spread_at(FRAC_PI_2 + 0.04));
    let ratio = irrational / rational;
    report.record(
        10,
        "localization contrast",
        ratio <= 0.1,
        format!(
            "q-spread(B=π/2+0.04) = {irrational:.3}, q-spread(B=π/4) = {rational:.3}, ratio {ratio:.3} (required ≤ 0.1) at E = π/2, J = {J_LOCALIZATION}"
        ),
    );

    // 11. Weak-field q-spread regime.
    let q: Vec<f64> = SPREAD_E.iter().map(|&e| find(&cells, e, B_DRIFT, J_DRIFT).stats.q_spread.value[J_DRIFT]).collect();
    let strong = find(&cells, STRONG_E, B_DRIFT, J_DRIFT).stats.q_spread.value[J_DRIFT];
    let monotone = q.windows(2).all(|w| w[1] > w[0]);
    let listed: Vec<String> = SPREAD_E.iter().zip(&q).map(|(e, s)| format!("{e}: {s:.2}")).collect();
    report.record(
        11,
        "weak-field q-spread",
        monotone && strong < q[q.len() - 1],
        format!("q-spread at j = 500, B = 0.16: {} ; E=0.1: {strong:.2}", listed.join(", ")),
    );

    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!(
        "# {} of {} criteria pass{} ({:.0} s)",
        report.lines.len() - failed.len(),
        report.lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") },
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
