//! One-dimensional normal forms with appended polynomial corrections, and the
//! Hopf normal form in polar coordinates.

use nalgebra::DMatrix;

use super::{powers, VectorField};

/// `ẏ = r·y^rp + sign·y^p + Σ_k α_k y^(k + alpha_shift)`, parameters
/// `(r, α_1..α_order, y0)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalarNormalForm {
    r_power: i32,
    sign: f64,
    power: i32,
    alpha_shift: usize,
    order: usize,
}

impl ScalarNormalForm {
    pub(crate) fn saddle_node(order: usize) -> Self {
        Self {
            r_power: 0,
            sign: 1.0,
            power: 2,
            alpha_shift: 2,
            order,
        }
    }

    pub(crate) fn transcritical(order: usize) -> Self {
        Self {
            r_power: 1,
            sign: -1.0,
            power: 2,
            alpha_shift: 2,
            order,
        }
    }

    pub(crate) fn pitchfork_super(order: usize) -> Self {
        Self {
            r_power: 1,
            sign: -1.0,
            power: 3,
            alpha_shift: 3,
            order,
        }
    }

    pub(crate) fn pitchfork_sub(order: usize) -> Self {
        Self {
            r_power: 1,
            sign: 1.0,
            power: 3,
            alpha_shift: 3,
            order,
        }
    }

    fn max_power(&self) -> usize {
        (self.order + self.alpha_shift).max(self.power as usize) + 1
    }
}

impl VectorField for ScalarNormalForm {
    fn rhs(&self, state: &[f64], params: &[f64], _t: f64, out: &mut [f64]) {
        let y = state[0];
        let yp = powers(y, self.max_power());
        let mut f = params[0] * yp[self.r_power as usize] + self.sign * yp[self.power as usize];
        for k in 1..=self.order {
            f += params[k] * yp[k + self.alpha_shift];
        }
        out[0] = f;
    }

    fn state_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let yp = powers(y, self.max_power());
        let mut d = if self.r_power == 1 { params[0] } else { 0.0 };
        d += self.sign * self.power as f64 * yp[self.power as usize - 1];
        for k in 1..=self.order {
            let e = k + self.alpha_shift;
            d += params[k] * e as f64 * yp[e - 1];
        }
        Some(DMatrix::from_element(1, 1, d))
    }

    fn param_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let yp = powers(state[0], self.max_power());
        let mut j = DMatrix::zeros(1, params.len());
        j[(0, 0)] = yp[self.r_power as usize];
        for k in 1..=self.order {
            j[(0, k)] = yp[k + self.alpha_shift];
        }
        Some(j)
    }
}

/// Number of α corrections that go into the radial equation; the rest go into
/// the angular one.
pub(crate) const HOPF_RADIAL_ALPHAS: usize = 2;

/// Hopf normal form in polar coordinates, state `(y, θ)`:
///
/// ```text
/// ẏ = μ y − y³ + α₁ y⁴ + α₂ y⁵
/// θ̇ = ω + β y² + α₃ y³ + α₄ y⁴ + …
/// ```
///
/// Parameters `(μ, ω, β, α_1..α_order, y0, θ0)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HopfPolar {
    pub(crate) order: usize,
}

impl HopfPolar {
    /// State power multiplying α_k (1-based) and whether it is radial.
    fn alpha_term(k: usize) -> (usize, bool) {
        if k <= HOPF_RADIAL_ALPHAS {
            (k + 3, true)
        } else {
            (k, false)
        }
    }
}

impl VectorField for HopfPolar {
    fn rhs(&self, state: &[f64], params: &[f64], _t: f64, out: &mut [f64]) {
        let y = state[0];
        let yp = powers(y, self.order + 4);
        let (mu, omega, beta) = (params[0], params[1], params[2]);
        let mut fy = mu * y - yp[3];
        let mut fth = omega + beta * yp[2];
        for k in 1..=self.order {
            let (e, radial) = Self::alpha_term(k);
            if radial {
                fy += params[2 + k] * yp[e];
            } else {
                fth += params[2 + k] * yp[e];
            }
        }
        out[0] = fy;
        out[1] = fth;
    }

    fn state_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let yp = powers(y, self.order + 4);
        let mut j = DMatrix::zeros(2, 2);
        j[(0, 0)] = params[0] - 3.0 * yp[2];
        j[(1, 0)] = 2.0 * params[2] * y;
        for k in 1..=self.order {
            let (e, radial) = Self::alpha_term(k);
            let d = params[2 + k] * e as f64 * yp[e - 1];
            if radial {
                j[(0, 0)] += d;
            } else {
                j[(1, 0)] += d;
            }
        }
        Some(j)
    }

    fn param_jacobian(&self, state: &[f64], params: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let y = state[0];
        let yp = powers(y, self.order + 4);
        let mut j = DMatrix::zeros(2, params.len());
        j[(0, 0)] = y;
        j[(1, 1)] = 1.0;
        j[(1, 2)] = yp[2];
        for k in 1..=self.order {
            let (e, radial) = Self::alpha_term(k);
            j[(if radial { 0 } else { 1 }, 2 + k)] = yp[e];
        }
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(f: &dyn VectorField, y: &[f64], p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        f.rhs(y, p, 0.0, &mut out);
        out
    }

    #[test]
    fn saddle_node_with_corrections() {
        let f = ScalarNormalForm::saddle_node(2);
        // r + y² + α₁y³ + α₂y⁴ at y = 2
        let v = eval(&f, &[2.0], &[0.5, 1.0, -1.0, 0.0]);
        assert_eq!(v[0], 0.5 + 4.0 + 8.0 - 16.0);
    }

    #[test]
    fn pitchfork_signs() {
        let sup = ScalarNormalForm::pitchfork_super(0);
        let sub = ScalarNormalForm::pitchfork_sub(0);
        assert_eq!(eval(&sup, &[2.0], &[1.0, 0.0])[0], 2.0 - 8.0);
        assert_eq!(eval(&sub, &[2.0], &[1.0, 0.0])[0], 2.0 + 8.0);
    }

    #[test]
    fn hopf_alpha_placement() {
        let f = HopfPolar { order: 5 };
        let mut p = vec![0.0; 3 + 5 + 2];
        p[1] = 1.0;
        for k in 1..=5 {
            p[2 + k] = 1.0;
        }
        let y = 0.5f64;
        let v = eval(&f, &[y, 0.3], &p);
        assert!((v[0] - (-y.powi(3) + y.powi(4) + y.powi(5))).abs() < 1e-15);
        assert!((v[1] - (1.0 + y.powi(3) + y.powi(4) + y.powi(5))).abs() < 1e-15);
    }
}
