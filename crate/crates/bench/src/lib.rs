//! Shared fixtures for the operator benchmarks.

use conefrac::{make_test_field, FieldKind, FieldParams, GridSpec, KernelParams, SampledField};

/// A Gaussian on `[-2, 2]^{n+1}` with `m` nodes per axis and the kernel
/// order `alpha = n/2`.
pub fn gaussian_fixture(n: usize, m: usize) -> (SampledField, KernelParams) {
    let spec = GridSpec::new(n, 2.0, 2.0, m).expect("valid grid");
    let field = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default())
        .expect("valid field");
    let params = KernelParams::new(n, 0.5 * n as f64).expect("valid kernel");
    (field, params)
}
