//! Dormand–Prince 5(4) with Hairer's fourth-order continuous extension.
//!
//! Output times never shorten a step: samples come from the dense output, so
//! the accepted step sequence depends only on the problem and the end time.
//! The accepted mesh is kept so the same discretization can be replayed with
//! perturbed parameters (see [`Dopri5::replay`]).

use crate::error::{Result, TwigError};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// States whose magnitude exceeds this are treated as a blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Right-hand side `f(t, y, dy)`. Non-finite output is allowed; the stepper
/// rejects such steps.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Rhs for F {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        self(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Number of leading components checked against [`DIVERGENCE_BOUND`]
    /// (the plain state when integrating an augmented system).
    pub guarded: usize,
}

impl Dopri5 {
    /// Tight tolerances for reference computations.
    pub fn reference() -> Self {
        Self {
            atol: 1e-13,
            rtol: 1e-11,
            ..Self::default()
        }
    }
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            max_steps: 2_000_000,
            guarded: usize::MAX,
        }
    }
}

/// Result of an integration.
///
/// `samples[i]` holds the solution at the i-th requested time. When the
/// integration stops early, `failure` is set and only the samples for times
/// reached before the failure are present (`samples.len() < times.len()` in
/// sorted order of the requested times).
#[derive(Debug, Clone)]
pub struct Solution {
    pub samples: Vec<Option<Vec<f64>>>,
    pub mesh: Vec<f64>,
    pub failure: Option<TwigError>,
}

impl Solution {
    /// All samples, or the failure if any requested time was not reached.
    pub fn complete(self) -> Result<Vec<Vec<f64>>> {
        if let Some(err) = self.failure {
            if self.samples.iter().any(Option::is_none) {
                return Err(err);
            }
        }
        Ok(self
            .samples
            .into_iter()
            .map(|s| s.expect("sample present"))
            .collect())
    }
}

struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    cont: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            cont: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    /// One Dormand–Prince step from `(t, y)` with `k[0] = f(t, y)` already
    /// set. Leaves the new state in `ynew` and `f(t+h, ynew)` in `k[6]`.
    fn step<F: Rhs>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64) {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.ytmp[i] = y[i] + h * acc;
            }
            f.eval(t + C[s] * h, &self.ytmp, &mut self.k[s]);
        }
        // stage 7 was evaluated at the fifth-order solution (FSAL)
        self.ynew.copy_from_slice(&self.ytmp);
    }

    fn error_norm(&self, y: &[f64], h: f64, atol: f64, rtol: f64) -> f64 {
        let n = y.len();
        let mut sum = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * self.k[s][i];
            }
            let sc = atol + rtol * y[i].abs().max(self.ynew[i].abs());
            let r = h * e / sc;
            sum += r * r;
        }
        (sum / n as f64).sqrt()
    }

    fn build_dense(&mut self, y: &[f64], h: f64) {
        for i in 0..y.len() {
            let dy = self.ynew[i] - y[i];
            let bspl = h * self.k[0][i] - dy;
            self.cont[0][i] = y[i];
            self.cont[1][i] = dy;
            self.cont[2][i] = bspl;
            self.cont[3][i] = dy - h * self.k[6][i] - bspl;
            let mut d = 0.0;
            for s in 0..7 {
                d += D[s] * self.k[s][i];
            }
            self.cont[4][i] = h * d;
        }
    }

    fn dense(&self, theta: f64, out: &mut [f64]) {
        let t1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + t1 * (self.cont[2][i]
                            + theta * (self.cont[3][i] + t1 * self.cont[4][i])));
        }
    }
}

fn sorted_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    order
}

impl Dopri5 {
    fn check_inputs(&self, t0: f64, t_end: f64, y0: &[f64], times: &[f64]) -> Result<()> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(TwigError::InvalidGrid(format!(
                "empty interval [{t0}, {t_end}]"
            )));
        }
        if let Some(t) = times.iter().find(|&&t| !(t >= t0 && t <= t_end)) {
            return Err(TwigError::InvalidGrid(format!(
                "output time {t} outside [{t0}, {t_end}]"
            )));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(TwigError::Divergence { t: t0 });
        }
        Ok(())
    }

    fn diverged(&self, y: &[f64]) -> bool {
        y.iter()
            .take(self.guarded)
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
    }

    fn initial_step<F: Rhs>(&self, f: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64) -> f64 {
        let n = y0.len();
        let sc = |i: usize| self.atol + self.rtol * y0[i].abs();
        let d0 = (y0
            .iter()
            .enumerate()
            .map(|(i, v)| (v / sc(i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let d1 = (f0
            .iter()
            .enumerate()
            .map(|(i, v)| (v / sc(i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(span);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
        let mut f1 = vec![0.0; n];
        f.eval(t0 + h0, &y1, &mut f1);
        let d2 = (f1
            .iter()
            .zip(f0)
            .enumerate()
            .map(|(i, (a, b))| ((a - b) / sc(i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let h1 = if !d2.is_finite() {
            h0 * 1e-3
        } else if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrate from `t0` to `t_end`, sampling the dense output at `times`.
    pub fn integrate<F: Rhs>(
        &self,
        mut f: F,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        times: &[f64],
    ) -> Result<Solution> {
        self.check_inputs(t0, t_end, y0, times)?;
        let n = y0.len();
        let order = sorted_order(times);
        let mut samples: Vec<Option<Vec<f64>>> = vec![None; times.len()];
        let mut next = 0;
        // Samples at t0 are the initial state itself.
        while next < order.len() && times[order[next]] <= t0 {
            samples[order[next]] = Some(y0.to_vec());
            next += 1;
        }

        let mut ws = Workspace::new(n);
        let mut y = y0.to_vec();
        let mut t = t0;
        f.eval(t, &y, &mut ws.k[0]);
        if ws.k[0].iter().any(|v| !v.is_finite()) {
            return Ok(Solution {
                samples,
                mesh: vec![t0],
                failure: Some(TwigError::Divergence { t: t0 }),
            });
        }
        let span = t_end - t0;
        let mut h = self.initial_step(&mut f, t0, &y, &ws.k[0].clone(), span);
        let mut mesh = vec![t0];
        let mut steps = 0usize;
        let mut reject_streak = 0usize;

        let failure = loop {
            if t >= t_end {
                break None;
            }
            if steps >= self.max_steps {
                break Some(TwigError::Stiffness { t, h });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                break Some(TwigError::Stiffness { t, h });
            }
            steps += 1;
            ws.step(&mut f, t, &y, h);
            let err = ws.error_norm(&y, h, self.atol, self.rtol);

            if !err.is_finite() || ws.k[6].iter().any(|v| !v.is_finite()) {
                h *= 0.25;
                reject_streak += 1;
                continue;
            }
            if err <= 1.0 {
                let t_new = if last { t_end } else { t + h };
                ws.build_dense(&y, h);
                while next < order.len() && times[order[next]] <= t_new {
                    let idx = order[next];
                    let mut out = vec![0.0; n];
                    if times[idx] == t_new {
                        out.copy_from_slice(&ws.ynew);
                    } else {
                        ws.dense((times[idx] - t) / h, &mut out);
                    }
                    samples[idx] = Some(out);
                    next += 1;
                }
                if self.diverged(&ws.ynew) {
                    // drop samples past the last point at which the state was bounded
                    break Some(TwigError::HorizonExceeded { t: t_new });
                }
                t = t_new;
                std::mem::swap(&mut y, &mut ws.ynew);
                let k6 = std::mem::take(&mut ws.k[6]);
                ws.k[6] = std::mem::replace(&mut ws.k[0], k6);
                mesh.push(t);
                let fac = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
                };
                let fac = if reject_streak > 0 { fac.min(1.0) } else { fac };
                reject_streak = 0;
                h = (h * fac).min(span);
            } else {
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                reject_streak += 1;
            }
        };

        if let Some(TwigError::HorizonExceeded { .. }) = &failure {
            // Samples inside the failing step were interpolated from a step
            // whose endpoint blew up; keep only those with bounded states.
            for s in samples.iter_mut() {
                if s.as_deref().is_some_and(|v| self.diverged(v)) {
                    *s = None;
                }
            }
        }
        Ok(Solution {
            samples,
            mesh,
            failure,
        })
    }

    /// Integrate along a fixed, previously accepted mesh (no error control).
    ///
    /// Used for finite differences in the parameters: every perturbed run sees
    /// exactly the same discretization, so step-size jitter does not leak into
    /// the difference quotient.
    pub fn replay<F: Rhs>(
        &self,
        mut f: F,
        mesh: &[f64],
        y0: &[f64],
        times: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        if mesh.len() < 2 {
            return Err(TwigError::InvalidGrid(
                "replay mesh needs at least two points".into(),
            ));
        }
        let (t0, t_end) = (mesh[0], mesh[mesh.len() - 1]);
        self.check_inputs(t0, t_end, y0, times)?;
        let n = y0.len();
        let order = sorted_order(times);
        let mut samples: Vec<Option<Vec<f64>>> = vec![None; times.len()];
        let mut next = 0;
        while next < order.len() && times[order[next]] <= t0 {
            samples[order[next]] = Some(y0.to_vec());
            next += 1;
        }
        let mut ws = Workspace::new(n);
        let mut y = y0.to_vec();
        f.eval(t0, &y, &mut ws.k[0]);
        for w in mesh.windows(2) {
            let (t, t_new) = (w[0], w[1]);
            let h = t_new - t;
            ws.step(&mut f, t, &y, h);
            if ws.k[6].iter().any(|v| !v.is_finite()) || self.diverged(&ws.ynew) {
                return Err(TwigError::HorizonExceeded { t: t_new });
            }
            ws.build_dense(&y, h);
            while next < order.len() && times[order[next]] <= t_new {
                let idx = order[next];
                let mut out = vec![0.0; n];
                if times[idx] == t_new {
                    out.copy_from_slice(&ws.ynew);
                } else {
                    ws.dense((times[idx] - t) / h, &mut out);
                }
                samples[idx] = Some(out);
                next += 1;
            }
            std::mem::swap(&mut y, &mut ws.ynew);
            let k6 = std::mem::take(&mut ws.k[6]);
            ws.k[6] = std::mem::replace(&mut ws.k[0], k6);
        }
        Ok(samples
            .into_iter()
            .map(|s| s.expect("mesh covers all times"))
            .collect())
    }
}

/// A state carried as an unevaluated sum `hi + lo`.
pub type CompensatedState = (Vec<f64>, Vec<f64>);

impl Dopri5 {
    /// [`replay`](Self::replay) with Kahan-compensated accumulation of the
    /// state, returning `(hi, lo)` at each of `times`, which must all be mesh
    /// points.
    ///
    /// A difference quotient of two such runs resolves state changes far below
    /// the spacing of doubles near the state itself.
    pub fn replay_compensated<F: Rhs>(
        &self,
        mut f: F,
        mesh: &[f64],
        y0: &[f64],
        times: &[f64],
    ) -> Result<Vec<CompensatedState>> {
        if mesh.len() < 2 {
            return Err(TwigError::InvalidGrid(
                "replay mesh needs at least two points".into(),
            ));
        }
        self.check_inputs(mesh[0], mesh[mesh.len() - 1], y0, times)?;
        let n = y0.len();
        let mut out: Vec<Option<CompensatedState>> = vec![None; times.len()];
        let order = sorted_order(times);
        let mut next = 0;
        let mut ws = Workspace::new(n);
        let mut hi = y0.to_vec();
        let mut lo = vec![0.0; n];
        let mut take = |t: f64, next: &mut usize, hi: &[f64], lo: &[f64]| {
            while *next < order.len() && times[order[*next]] == t {
                out[order[*next]] = Some((hi.to_vec(), lo.to_vec()));
                *next += 1;
            }
        };
        take(mesh[0], &mut next, &hi, &lo);
        f.eval(mesh[0], &hi, &mut ws.k[0]);
        for w in mesh.windows(2) {
            let (t, h) = (w[0], w[1] - w[0]);
            ws.step(&mut f, t, &hi, h);
            if ws.k[6].iter().any(|v| !v.is_finite()) || self.diverged(&ws.ytmp) {
                return Err(TwigError::HorizonExceeded { t: w[1] });
            }
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += A[6][j] * ws.k[j][i];
                }
                let inc = h * acc + lo[i];
                let sum = hi[i] + inc;
                lo[i] = inc - (sum - hi[i]);
                hi[i] = sum;
            }
            take(w[1], &mut next, &hi, &lo);
            let k6 = std::mem::take(&mut ws.k[6]);
            ws.k[6] = std::mem::replace(&mut ws.k[0], k6);
        }
        out.into_iter()
            .map(|s| {
                s.ok_or_else(|| TwigError::InvalidGrid("sample time is not a mesh point".into()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let s = Dopri5::default()
            .integrate(
                |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0],
                0.0,
                &[1.0],
                5.0,
                &[0.5, 2.0, 5.0],
            )
            .unwrap();
        let v = s.complete().unwrap();
        for (t, got) in [0.5f64, 2.0, 5.0].iter().zip(&v) {
            assert!((got[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn dense_output_between_steps_is_accurate() {
        let times: Vec<f64> = (1..=200).map(|i| i as f64 * 0.05).collect();
        let v = Dopri5::default()
            .integrate(
                |_t: f64, y: &[f64], d: &mut [f64]| {
                    d[0] = y[1];
                    d[1] = -y[0];
                },
                0.0,
                &[0.0, 1.0],
                10.0,
                &times,
            )
            .unwrap()
            .complete()
            .unwrap();
        for (t, got) in times.iter().zip(&v) {
            assert!(
                (got[0] - t.sin()).abs() < 1e-7,
                "t={t} {}",
                got[0] - t.sin()
            );
        }
    }

    #[test]
    fn blow_up_is_reported_with_partial_samples() {
        // y' = y², y(0) = 1 blows up at t = 1
        let times = [0.5, 0.9, 2.0];
        let s = Dopri5::default()
            .integrate(
                |_t: f64, y: &[f64], d: &mut [f64]| d[0] = y[0] * y[0],
                0.0,
                &[1.0],
                2.0,
                &times,
            )
            .unwrap();
        assert!(matches!(s.failure, Some(TwigError::HorizonExceeded { t }) if t < 1.0 + 1e-6));
        assert!((s.samples[0].as_ref().unwrap()[0] - 2.0).abs() < 1e-7);
        assert!((s.samples[1].as_ref().unwrap()[0] - 10.0).abs() < 1e-5);
        assert!(s.samples[2].is_none());
        assert!(s.complete().is_err());
    }

    #[test]
    fn replay_matches_adaptive_run() {
        let rhs = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] * y[0] * y[0];
        let times = [0.3, 1.0, 7.0];
        let s = Dopri5::default()
            .integrate(rhs, 0.0, &[1.0], 7.0, &times)
            .unwrap();
        let mesh = s.mesh.clone();
        let a = s.complete().unwrap();
        let b = Dopri5::default()
            .replay(rhs, &mesh, &[1.0], &times)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_times_do_not_change_the_steps() {
        let rhs = |t: f64, y: &[f64], d: &mut [f64]| d[0] = (t * y[0]).cos();
        let few = [1.0, 2.0];
        let many: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        let a = Dopri5::default()
            .integrate(rhs, 0.0, &[0.1], 2.0, &few)
            .unwrap();
        let b = Dopri5::default()
            .integrate(rhs, 0.0, &[0.1], 2.0, &many)
            .unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.samples[0], b.samples[19]);
        assert_eq!(a.samples[1], b.samples[39]);
    }

    #[test]
    fn rejects_bad_output_times() {
        let r = Dopri5::default().integrate(
            |_t: f64, _y: &[f64], d: &mut [f64]| d[0] = 0.0,
            0.0,
            &[0.0],
            1.0,
            &[2.0],
        );
        assert!(matches!(r, Err(TwigError::InvalidGrid(_))));
    }

    #[test]
    fn compensated_replay_tracks_plain_replay() {
        let f = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -0.3 * y[0] + 1e-3;
        let mesh: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let plain = Dopri5::default()
            .replay(f, &mesh, &[2.0], &[5.0, 10.0])
            .unwrap();
        let comp = Dopri5::default()
            .replay_compensated(f, &mesh, &[2.0], &[5.0, 10.0])
            .unwrap();
        for (p, (hi, lo)) in plain.iter().zip(&comp) {
            assert!((p[0] - (hi[0] + lo[0])).abs() < 1e-14);
            assert!(lo[0].abs() < 1e-14);
        }
        assert!(Dopri5::default()
            .replay_compensated(f, &mesh, &[2.0], &[5.1])
            .is_err());
    }
}
