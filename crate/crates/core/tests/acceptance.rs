//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so every line shows up in the output;
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use riemdyn::verify::{run_suite, Suite};

const SEED: u64 = 7;

const CRITERIA: [(u32, Suite, &str); 10] = [
    (1, Suite::Identities, "identity suite"),
    (2, Suite::EulerLagrange, "Euler-Lagrange equivalence"),
    (3, Suite::ThreeWay, "three-way formulation equivalence"),
    (4, Suite::ConformalFlow, "normal-shift force equals conformal geodesic flow"),
    (5, Suite::Projectors, "projectors and closed-form inversion"),
    (6, Suite::Conservation, "conservation of h, H and |v|"),
    (7, Suite::Legendre, "Legendre round trips"),
    (8, Suite::Cancellation, "covariant Hamilton equations reduce to plain ones"),
    (9, Suite::ChainRules, "chain rule along curves"),
    (10, Suite::Order, "RK4 convergence order"),
];

fn main() -> ExitCode {
    let mut failed = 0;
    for (number, suite, title) in CRITERIA {
        let start = Instant::now();
        let line = match run_suite(suite, None, SEED) {
            Ok(report) => {
                let failures: Vec<String> = report
                    .failures()
                    .map(|c| format!("{} = {:e} (tolerance {:?})", c.name, c.value, c.tolerance))
                    .collect();
                let gated = report.checks.iter().filter(|c| c.tolerance.is_some());
                let worst_ratio = gated
                    .filter(|c| c.lower.is_none())
                    .map(|c| c.value / c.tolerance.unwrap_or(f64::INFINITY))
                    .fold(0.0f64, f64::max);
                let ranges: String = report
                    .checks
                    .iter()
                    .filter_map(|c| Some(format!(", {} = {:.3} in [{}, {})", c.name, c.value, c.lower?, c.tolerance?)))
                    .collect();
                if failures.is_empty() {
                    format!(
                        "PASS  criterion {number:>2} [{suite}] {title}: {} checks on {}, worst value/tolerance {worst_ratio:.2e}{ranges}",
                        report.checks.len(),
                        report.charts.join(", ")
                    )
                } else {
                    failed += 1;
                    format!("FAIL  criterion {number:>2} [{suite}] {title}: {}", failures.join("; "))
                }
            }
            Err(e) => {
                failed += 1;
                format!("FAIL  criterion {number:>2} [{suite}] {title}: error: {e}")
            }
        };
        println!("{line} ({:.1} s)", start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
