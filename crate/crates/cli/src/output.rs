//! CSV tables written by `twig analyze`. Numbers use 17 significant digits so
//! repeated runs can be compared byte for byte.

use std::fmt::Write as _;

use twig_core::twig::TwigSweep;

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string().to_lowercase()
    }
}

/// Local log-log slope of each tracked eigenvalue: centred differences inside
/// the sweep, one-sided at its ends.
fn local_slopes(t: &[f64], lam: &[f64]) -> Vec<f64> {
    let n = t.len();
    let lx: Vec<f64> = t.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = lam
        .iter()
        .map(|v| v.max(f64::MIN_POSITIVE).log10())
        .collect();
    (0..n)
        .map(|i| {
            if n < 2 {
                return f64::NAN;
            }
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (ly[b] - ly[a]) / (lx[b] - lx[a])
        })
        .collect()
}

/// `t_max,direction_index,lambda,slope`, one row per horizon and tracked
/// direction.
pub fn eigenvalues_csv(sweep: &TwigSweep) -> String {
    let mut out = String::from("t_max,direction_index,lambda,slope\n");
    let t = sweep.completed_horizons();
    let series: Vec<(Vec<f64>, Vec<f64>)> = (0..sweep.n_directions())
        .map(|k| {
            let lam = sweep.tracked_eigenvalues(k);
            let slope = local_slopes(&t, &lam);
            (lam, slope)
        })
        .collect();
    for (s, &tm) in t.iter().enumerate() {
        for (k, (lam, slope)) in series.iter().enumerate() {
            writeln!(out, "{},{k},{},{}", num(tm), num(lam[s]), num(slope[s])).unwrap();
        }
    }
    out
}

/// `t_max,direction_index,param_name,p` for every parameter of every tracked
/// direction.
pub fn participation_csv(sweep: &TwigSweep) -> String {
    let mut out = String::from("t_max,direction_index,param_name,p\n");
    for (spec, cols) in sweep.spectra.iter().zip(&sweep.tracking) {
        for (k, &col) in cols.iter().enumerate() {
            for (i, name) in sweep.param_names.iter().enumerate() {
                writeln!(
                    out,
                    "{},{k},{name},{}",
                    num(spec.t_max),
                    num(spec.participation[(i, col)])
                )
                .unwrap();
            }
        }
    }
    out
}

/// `t,y1..yn` for a sampled trajectory.
pub fn trajectory_csv(times: &[f64], states: &[Vec<f64>]) -> String {
    let dim = states.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for i in 1..=dim {
        write!(out, ",y{i}").unwrap();
    }
    out.push('\n');
    for (t, y) in times.iter().zip(states) {
        out.push_str(&num(*t));
        for v in y {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn local_slope_of_a_power_law() {
        let t = [1.0, 10.0, 100.0];
        let lam = [1.0, 100.0, 10000.0];
        for s in local_slopes(&t, &lam) {
            assert!((s - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_header() {
        let csv = trajectory_csv(&[1.0], &[vec![0.5, 2.0]]);
        assert!(csv.starts_with("t,y1,y2\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
