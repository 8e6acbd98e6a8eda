mod support;

use support::{grad_instance, max_relative_error};

#[test]
fn analytic_matches_central_differences() {
    for seed in 0..40 {
        let instance = grad_instance(seed);
        let err = max_relative_error(&instance.analytic(), &instance.numeric(1e-6), 1e-6);
        assert!(err < 1e-4, "instance {seed}: relative error {err:e}");
    }
}

#[test]
fn dropout_mask_is_reused_by_backward() {
    // odd seeds train with dropout 0.3
    let instance = grad_instance(7);
    assert!(instance.dropout > 0.0);
    let err = max_relative_error(&instance.analytic(), &instance.numeric(1e-6), 1e-6);
    assert!(err < 1e-4, "{err:e}");
}
