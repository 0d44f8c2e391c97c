mod common {
    pub mod gradient_suite;
}

use common::gradient_suite::{run_suite, KINDS};

#[test]
fn ten_configs_per_kind_pass_at_1e_4() {
    let cases = run_suite(10 * KINDS.len(), 5).unwrap();
    let worst = cases
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .unwrap();
    let mut skipped = 0;
    let mut checked = 0;
    for c in &cases {
        assert!(c.report.checked > 0, "{} checked nothing", c.name);
        skipped += c.report.kinks + c.report.unresolved;
        checked += c.report.checked;
    }
    assert!(skipped * 100 <= checked, "{skipped} skipped vs {checked} checked");
    assert!(
        worst.report.max_rel_error < 1e-4,
        "{} at {}: {}",
        worst.name,
        worst.report.worst,
        worst.report.max_rel_error
    );
}
