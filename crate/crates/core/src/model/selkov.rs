//! Sel'kov glycolysis oscillator with four nuisance couplings:
//!
//! ```text
//! ẋ = −x + a y + x² y + c₁ x² y + c₂ x³
//! ẏ =  b − a y − x² y + c₃ x² y + c₄ y²
//! ```
//!
//! Parameters `(a, b, c1, c2, c3, c4, x0, y0)`.

use nalgebra::DMatrix;

use super::VectorField;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Selkov;

impl VectorField for Selkov {
    fn rhs(&self, s: &[f64], p: &[f64], _t: f64, out: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        let (a, b, c1, c2, c3, c4) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        let x2y = x * x * y;
        out[0] = -x + a * y + x2y + c1 * x2y + c2 * x * x * x;
        out[1] = b - a * y - x2y + c3 * x2y + c4 * y * y;
    }

    fn state_jacobian(&self, s: &[f64], p: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let (x, y) = (s[0], s[1]);
        let (a, c1, c2, c3, c4) = (p[0], p[2], p[3], p[4], p[5]);
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[
                -1.0 + 2.0 * x * y * (1.0 + c1) + 3.0 * c2 * x * x,
                a + x * x * (1.0 + c1),
                -2.0 * x * y * (1.0 - c3),
                -a - x * x * (1.0 - c3) + 2.0 * c4 * y,
            ],
        ))
    }

    fn param_jacobian(&self, s: &[f64], p: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let (x, y) = (s[0], s[1]);
        let x2y = x * x * y;
        let mut j = DMatrix::zeros(2, p.len());
        j[(0, 0)] = y;
        j[(1, 0)] = -y;
        j[(1, 1)] = 1.0;
        j[(0, 2)] = x2y;
        j[(0, 3)] = x * x * x;
        j[(1, 4)] = x2y;
        j[(1, 5)] = y * y;
        Some(j)
    }
}

/// Fixed point of the unperturbed oscillator (all `cᵢ = 0`).
pub fn selkov_fixed_point(a: f64, b: f64) -> [f64; 2] {
    [b, b / (a + b * b)]
}

/// Lower branch of the Hopf curve of the unperturbed oscillator,
/// `b² = ½(1 − 2a − √(1 − 8a))`. Returns `None` for `a ≥ 1/8`, where the
/// curve does not exist.
pub fn selkov_separatrix_b(a: f64) -> Option<f64> {
    let disc = 1.0 - 8.0 * a;
    if disc < 0.0 {
        return None;
    }
    let b2 = 0.5 * (1.0 - 2.0 * a - disc.sqrt());
    (b2 > 0.0).then(|| b2.sqrt())
}
