//! Fixtures shared by the benchmarks in `benches/`.

use std::sync::Arc;

use strobo::{Model, ModelParams, ProblemSpec, StateVector};

/// A model instance at `eps` with `nx` (and `ny`) unknowns per axis,
/// together with its initial datum.
pub fn fixture(model: Model, eps: f64, n: usize) -> (Arc<ProblemSpec>, StateVector) {
    let params = ModelParams { nx: n, ny: n, ..model.desk_params(eps) };
    let p = Arc::new(model.build(&params).expect("benchmark parameters are valid"));
    let u = p.initial_state();
    (p, u)
}
