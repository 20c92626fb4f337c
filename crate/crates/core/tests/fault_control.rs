use absa_core::fault::{self, Fault};
use absa_core::harness::{grad_check_suite, SuiteOptions};

#[test]
fn flipped_aspect_forget_gradient_is_caught() {
    let opts = SuiteOptions { only: Some("aalstm".into()), ..SuiteOptions::default() };
    let clean = grad_check_suite(&opts).unwrap();
    assert!(clean.passed());

    fault::inject(Fault::FlipAspectForgetBackward);
    let broken = grad_check_suite(&opts);
    fault::clear();
    let broken = broken.unwrap();
    assert!(!broken.passed());
    let failures = broken.failures();
    assert!(failures.iter().any(|e| e.param.ends_with("w_af")), "{failures:?}");
    let worst = failures.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    assert!(worst.param.contains("_af"), "{worst:?}");
}
