//! Stochastic policies with analytic score functions.

mod rbf;
mod tabular;

pub use rbf::{RbfGaussianPolicy, RbfLattice};
pub use tabular::SoftmaxTabularPolicy;

use crate::grad::GradientVector;

/// A parameterized policy whose log-likelihood gradient is available in
/// closed form.
pub trait ScoreFunction<S, A> {
    /// Shape of the parameter table, which every gradient shares.
    fn param_shape(&self) -> (usize, usize);

    /// `out += weight · ∇_θ log π_θ(action | state)` at stage `t`.
    fn add_score(&self, state: &S, action: &A, t: usize, weight: f64, out: &mut GradientVector);

    fn score(&self, state: &S, action: &A, t: usize) -> GradientVector {
        let (rows, cols) = self.param_shape();
        let mut out = GradientVector::zeros(rows, cols);
        self.add_score(state, action, t, 1.0, &mut out);
        out
    }

    fn zero_gradient(&self) -> GradientVector {
        let (rows, cols) = self.param_shape();
        GradientVector::zeros(rows, cols)
    }
}
