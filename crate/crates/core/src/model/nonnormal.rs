//! Transcritical systems that are not written in normal form.

use nalgebra::DMatrix;

use super::VectorField;

/// `ẏ = r ln y + y − 1 + Σ_k α_k (y − 1)^(k+1)`, parameters `(r, α.., y0)`.
///
/// The transcritical point sits at `y = 1, r = −1`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogTranscritical {
    pub(crate) order: usize,
}

impl VectorField for LogTranscritical {
    fn rhs(&self, state: &[f64], params: &[f64], _t: f64, out: &mut [f64]) {
        let y = state[0];
        let u = y - 1.0;
        let mut f = params[0] * y.ln() + u;
        let mut up = u;
        for k in 1..=self.order {
            up *= u;
            f += params[k] * up;
        }
        out[0] = f;
    }

    fn state_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let u = y - 1.0;
        let mut d = params[0] / y + 1.0;
        let mut up = 1.0;
        for k in 1..=self.order {
            up *= u;
            d += params[k] * (k + 1) as f64 * up;
        }
        Some(DMatrix::from_element(1, 1, d))
    }

    fn param_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let u = y - 1.0;
        let mut j = DMatrix::zeros(1, params.len());
        j[(0, 0)] = y.ln();
        let mut up = u;
        for k in 1..=self.order {
            up *= u;
            j[(0, k)] = up;
        }
        Some(j)
    }

    fn positive_components(&self) -> Vec<usize> {
        vec![0]
    }
}

/// `ẏ = r ln y + a (y − α) + Σ_k b_k (y − α)^(k+1)` with the linear coefficient
/// `a` held fixed; parameters `(r, α, b_1..b_order, y0)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShiftedLogTranscritical {
    pub(crate) order: usize,
    pub(crate) a: f64,
}

impl VectorField for ShiftedLogTranscritical {
    fn rhs(&self, state: &[f64], params: &[f64], _t: f64, out: &mut [f64]) {
        let y = state[0];
        let u = y - params[1];
        let mut f = params[0] * y.ln() + self.a * u;
        let mut up = u;
        for k in 1..=self.order {
            up *= u;
            f += params[1 + k] * up;
        }
        out[0] = f;
    }

    fn state_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let u = y - params[1];
        let mut d = params[0] / y + self.a;
        let mut up = 1.0;
        for k in 1..=self.order {
            up *= u;
            d += params[1 + k] * (k + 1) as f64 * up;
        }
        Some(DMatrix::from_element(1, 1, d))
    }

    fn param_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let u = y - params[1];
        let mut j = DMatrix::zeros(1, params.len());
        j[(0, 0)] = y.ln();
        // ∂/∂α of a·u + Σ b_k u^(k+1)
        let mut dalpha = -self.a;
        let mut up = 1.0;
        for k in 1..=self.order {
            up *= u;
            dalpha -= params[1 + k] * (k + 1) as f64 * up;
            j[(0, 1 + k)] = up * u;
        }
        j[(0, 1)] = dalpha;
        Some(j)
    }

    fn positive_components(&self) -> Vec<usize> {
        vec![0]
    }
}
