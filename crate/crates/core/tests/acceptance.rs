//! One line per acceptance criterion, with the measured values behind it.

use std::io::Write;

use hypfrac::heat2poisson::{check_hypothesis_iii, log_grid, HyperbolicProvider, PolarPoint};
use hypfrac::report::VerifyReport;
use hypfrac::verify::{run_criterion, CRITERIA, HYPOTHESIS_EPSILON};
use hypfrac::HyperbolicDim;

/// Criterion 10 asks for the L² bound at ε = 3/2. On ℍ³ the norms grow like
/// t^{-7/4} as t → 0, so no finite constant exists for that exponent; the
/// criterion is reported as failing and the test pins the measured exponent.
const UNATTAINABLE: u8 = 10;

/// Writes through the stderr handle, which the test harness does not capture,
/// so the per-criterion lines appear in every run's log.
fn report_line(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance_criteria() {
    let reports: Vec<_> = CRITERIA
        .iter()
        .map(|c| {
            let r = run_criterion(c.0, 1.0, true).expect("known criterion");
            report_line(&r.summary_line());
            r
        })
        .collect();
    let report = VerifyReport::new(1.0, reports);
    let failed: Vec<u8> = report.criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    report_line(&format!("failed criteria: {failed:?}"));
    assert_eq!(failed, vec![UNATTAINABLE], "unexpected verdicts");

    let c10 = &report.criteria[UNATTAINABLE as usize - 1];
    let failing: Vec<&str> = c10.checks.iter().filter(|k| !k.pass).map(|k| k.name.as_str()).collect();
    assert_eq!(failing, vec!["h3 growth exponent"]);
    let kappa = c10.checks.iter().find(|k| k.name == "h3 growth exponent").unwrap().lhs;
    assert!((kappa - 1.75).abs() < 0.02, "growth exponent {kappa}");
    assert_eq!(HYPOTHESIS_EPSILON, 1.5);
}

#[test]
fn hypothesis_holds_at_the_attainable_exponent() {
    let p = HyperbolicProvider::new(HyperbolicDim::new(3).unwrap()).unwrap();
    let r = check_hypothesis_iii(&p, &PolarPoint::base(), 1.75, &log_grid(1e-3, 10.0, 17)).unwrap();
    report_line(&format!(
        "epsilon=1.75 kappa={:.4} C_x={:.4e} pass={}",
        r.growth_exponent, r.fitted_cx, r.pass
    ));
    assert!(r.pass && r.fitted_cx.is_finite());
}
