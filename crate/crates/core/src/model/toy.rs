use super::ClosedForm;

/// `y(t) = θ₁ + exp(−θ₂ t) + exp(θ₃ t)`: a constant offset, a decaying mode and
/// a mode that grows for `θ₃ > 0`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ToyExponential;

impl ClosedForm for ToyExponential {
    fn eval(&self, p: &[f64], t: f64, out: &mut [f64]) {
        out[0] = p[0] + (-p[1] * t).exp() + (p[2] * t).exp();
    }
}
