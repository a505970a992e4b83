//! Closed-form trajectories and sensitivities of the one-dimensional normal
//! forms at their bifurcation point (`r = 0`, all `α = 0`).
//!
//! These are independent of the integrator and serve as reference values for
//! it and for the growth rates that drive the classification.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SaddleNode,
    Transcritical,
    PitchforkSuper,
    PitchforkSub,
}

impl Family {
    /// Matching registry model name.
    pub fn model_name(self) -> &'static str {
        match self {
            Family::SaddleNode => "saddle_node",
            Family::Transcritical => "transcritical",
            Family::PitchforkSuper => "pitchfork_super",
            Family::PitchforkSub => "pitchfork_sub",
        }
    }

    pub fn from_model_name(name: &str) -> Option<Self> {
        [
            Self::SaddleNode,
            Self::Transcritical,
            Self::PitchforkSuper,
            Self::PitchforkSub,
        ]
        .into_iter()
        .find(|f| f.model_name() == name)
    }
}

/// Which parameter a sensitivity is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    R,
    /// The `n`-th correction coefficient, `n ≥ 1`.
    Alpha(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleFamily {
    pub family: Family,
    pub y0: f64,
}

/// Asymptotic growth `t^(num/den)`, times `ln² t` when `logarithmic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthOrder {
    pub num: i32,
    pub den: u32,
    pub logarithmic: bool,
}

impl GrowthOrder {
    const fn int(n: i32, logarithmic: bool) -> Self {
        Self {
            num: n,
            den: 1,
            logarithmic,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl OracleFamily {
    pub fn new(family: Family, y0: f64) -> Self {
        Self { family, y0 }
    }

    /// Time at which the at-bifurcation solution blows up, if it does.
    pub fn singular_time(&self) -> Option<f64> {
        let y0 = self.y0;
        match self.family {
            Family::SaddleNode if y0 > 0.0 => Some(1.0 / y0),
            Family::Transcritical if y0 < 0.0 => Some(-1.0 / y0),
            Family::PitchforkSub if y0 != 0.0 => Some(1.0 / (2.0 * y0 * y0)),
            _ => None,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        match self.singular_time() {
            Some(ts) if t >= ts => Err(TwigError::OracleSingularity {
                t,
                singular_time: ts,
            }),
            _ => Ok(()),
        }
    }

    /// `y(t)` at the bifurcation point.
    pub fn trajectory(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let y0 = self.y0;
        Ok(match self.family {
            Family::SaddleNode => y0 / (1.0 - y0 * t),
            Family::Transcritical => y0 / (1.0 + y0 * t),
            Family::PitchforkSuper => y0 / (1.0 + 2.0 * t * y0 * y0).sqrt(),
            Family::PitchforkSub => y0 / (1.0 - 2.0 * t * y0 * y0).sqrt(),
        })
    }

    /// `∂y(t)/∂θ` at the bifurcation point.
    pub fn sensitivity(&self, which: Which, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if which == Which::Alpha(0) {
            return Err(self.unsupported(which));
        }
        let y0 = self.y0;
        let v = match (self.family, which) {
            (Family::SaddleNode, Which::R) => {
                let u = 1.0 - y0 * t;
                (1.0 - u.powi(3)) / (3.0 * y0 * u * u)
            }
            (Family::SaddleNode, Which::Alpha(1)) => {
                let u = 1.0 - y0 * t;
                -y0 * y0 * u.ln() / (u * u)
            }
            (Family::SaddleNode, Which::Alpha(n)) => {
                let (u, n) = (1.0 - y0 * t, n as i32);
                y0.powi(n + 1) * (1.0 - u.powi(1 - n)) / ((1 - n) as f64 * u * u)
            }
            (Family::Transcritical, Which::R) => {
                let v = 1.0 + y0 * t;
                y0 * t * (2.0 + y0 * t) / (2.0 * v * v)
            }
            (Family::Transcritical, Which::Alpha(1)) => {
                let v = 1.0 + y0 * t;
                y0 * y0 * v.ln() / (v * v)
            }
            (Family::Transcritical, Which::Alpha(n)) => {
                let (v, n) = (1.0 + y0 * t, n as i32);
                y0.powi(n + 1) * (v.powi(1 - n) - 1.0) / ((1 - n) as f64 * v * v)
            }
            (Family::PitchforkSuper, Which::R) => {
                let q = 1.0 + 2.0 * y0 * y0 * t;
                y0 * t * (1.0 + y0 * y0 * t) / q.powf(1.5)
            }
            (Family::PitchforkSuper, Which::Alpha(2)) => {
                let q = 1.0 + 2.0 * y0 * y0 * t;
                y0.powi(3) * q.ln() / (2.0 * q.powf(1.5))
            }
            (Family::PitchforkSuper, Which::Alpha(n)) => {
                let q = 1.0 + 2.0 * y0 * y0 * t;
                let nf = n as f64;
                y0.powi(n as i32 + 1) / (2.0 - nf) * (q.powf(1.0 - nf / 2.0) - 1.0) / q.powf(1.5)
            }
            (Family::PitchforkSub, Which::R) => {
                let q = 1.0 - 2.0 * y0 * y0 * t;
                t * y0 * (1.0 - t * y0 * y0) / q.powf(1.5)
            }
            (Family::PitchforkSub, Which::Alpha(2)) => {
                let q = 1.0 - 2.0 * y0 * y0 * t;
                -y0.powi(3) * q.ln() / (2.0 * q.powf(1.5))
            }
            (Family::PitchforkSub, Which::Alpha(n)) => {
                let q = 1.0 - 2.0 * y0 * y0 * t;
                let nf = n as f64;
                y0.powi(n as i32 + 1) / (2.0 - nf) * (1.0 - q.powf(1.0 - nf / 2.0)) / q.powf(1.5)
            }
        };
        Ok(v)
    }

    fn unsupported(&self, which: Which) -> TwigError {
        TwigError::UnsupportedOracle(format!(
            "{:?} / {:?} (y0 = {})",
            self.family, which, self.y0
        ))
    }

    /// Late-time growth of `(∂y/∂θ)²`, the diagonal Fisher-information
    /// contribution of one sample.
    ///
    /// Only defined for trajectories that exist for all `t > 0` and decay into
    /// the bifurcation point.
    pub fn growth_order(&self, which: Which) -> Result<GrowthOrder> {
        let y0 = self.y0;
        let ok = match self.family {
            Family::SaddleNode => y0 < 0.0,
            Family::Transcritical => y0 > 0.0,
            Family::PitchforkSuper => y0 != 0.0,
            Family::PitchforkSub => false,
        };
        if !ok || which == Which::Alpha(0) {
            return Err(self.unsupported(which));
        }
        Ok(match (self.family, which) {
            // (1 - u³)/(3 y0 u²) ~ t
            (Family::SaddleNode, Which::R) => GrowthOrder::int(2, false),
            (Family::SaddleNode, Which::Alpha(1)) => GrowthOrder::int(-4, true),
            (Family::SaddleNode, Which::Alpha(_)) => GrowthOrder::int(-4, false),
            // tends to 1/2
            (Family::Transcritical, Which::R) => GrowthOrder::int(0, false),
            (Family::Transcritical, Which::Alpha(1)) => GrowthOrder::int(-4, true),
            (Family::Transcritical, Which::Alpha(_)) => GrowthOrder::int(-4, false),
            // ~ t^(1/2)
            (Family::PitchforkSuper, Which::R) => GrowthOrder::int(1, false),
            (Family::PitchforkSuper, Which::Alpha(1)) => GrowthOrder::int(-2, false),
            (Family::PitchforkSuper, Which::Alpha(2)) => GrowthOrder::int(-3, true),
            (Family::PitchforkSuper, Which::Alpha(_)) => GrowthOrder::int(-3, false),
            (Family::PitchforkSub, _) => unreachable!(),
        })
    }
}

/// Convenience wrapper for [`OracleFamily::trajectory`].
pub fn oracle_trajectory(family: OracleFamily, t: f64) -> Result<f64> {
    family.trajectory(t)
}

/// Convenience wrapper for [`OracleFamily::sensitivity`].
pub fn oracle_sensitivity(family: OracleFamily, which: Which, t: f64) -> Result<f64> {
    family.sensitivity(which, t)
}

/// Convenience wrapper for [`OracleFamily::growth_order`].
pub fn growth_order(family: OracleFamily, which: Which) -> Result<GrowthOrder> {
    family.growth_order(which)
}
