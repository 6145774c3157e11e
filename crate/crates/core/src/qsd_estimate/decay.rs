use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::killed_sim::SurvivalRow;

/// Survivors required for a time point to enter the fit.
pub const MIN_SURVIVORS: u64 = 30;
/// Eligible points required for a fit.
pub const MIN_POINTS: usize = 5;
/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;
/// `|q| / se(q)` above which the quadratic term counts as significant.
pub const CURVATURE_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda_hat: f64,
    pub ci: [f64; 2],
    pub stderr: f64,
    /// First and last time of the fit window.
    pub window: [f64; 2],
    pub n_points: usize,
    pub curvature_z: f64,
    pub flags: Vec<String>,
}

impl DecayFit {
    pub fn no_decay(&self) -> bool {
        self.flags.iter().any(|f| f == "no decay")
    }

    pub fn curved(&self) -> bool {
        self.flags.iter().any(|f| f == "curvature")
    }
}

/// Weighted least squares coefficients `c` of a polynomial fit of degree
/// `deg`, as linear functionals of the data: `coef_k = sum_i c[k][i] y_i`.
fn wls_functionals(t: &[f64], w: &[f64], deg: usize) -> Option<Vec<Vec<f64>>> {
    let p = deg + 1;
    let m = t.len();
    let x = nalgebra::DMatrix::from_fn(m, p, |i, k| t[i].powi(k as i32));
    let wd = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w));
    let xtw = x.transpose() * wd;
    let inv = (&xtw * &x).try_inverse()?;
    let c = inv * xtw;
    Some((0..p).map(|k| c.row(k).iter().copied().collect()).collect())
}

/// `Var(sum c_i log S(t_i))` for a product-limit survival curve from `n`
/// independent trajectories: `Cov(log S_i, log S_j) = (1 - S_a) / (n S_a)`
/// with `a` the earlier of the two times.
fn log_survival_variance(c: &[f64], s: &[f64], n: f64) -> f64 {
    let m = c.len();
    let mut v = 0.0;
    for i in 0..m {
        for j in 0..m {
            let a = s[i].max(s[j]);
            v += c[i] * c[j] * (1.0 - a) / (n * a);
        }
    }
    v.max(0.0)
}

/// Exponential rate of a survival table by weighted least squares of
/// `log S` against `t` over the last half of the points with at least
/// [`MIN_SURVIVORS`] survivors.
pub fn estimate_decay_rate(rows: &[SurvivalRow]) -> Result<DecayFit> {
    let eligible: Vec<&SurvivalRow> = rows.iter().filter(|r| r.n > 0 && r.survivors >= MIN_SURVIVORS).collect();
    if eligible.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "need {MIN_POINTS} time points with >= {MIN_SURVIVORS} survivors, have {}",
            eligible.len()
        )));
    }
    let take = eligible.len().div_ceil(2).max(MIN_POINTS);
    let win = &eligible[eligible.len() - take..];
    let window = [win[0].t, win[win.len() - 1].t];
    if win.iter().all(|r| r.survivors == r.n) {
        return Ok(DecayFit {
            lambda_hat: 0.0,
            ci: [0.0, 0.0],
            stderr: 0.0,
            window,
            n_points: win.len(),
            curvature_z: 0.0,
            flags: vec!["no decay".into()],
        });
    }
    if win.iter().any(|r| r.n != win[0].n) {
        return Err(Error::Usage("survival rows must share the trajectory count".into()));
    }
    let n = win[0].n as f64;
    let t: Vec<f64> = win.iter().map(|r| r.t).collect();
    let s: Vec<f64> = win.iter().map(|r| r.fraction()).collect();
    let y: Vec<f64> = s.iter().map(|p| p.ln()).collect();
    // inverse binomial variance of log S, regularized at S = 1
    let w: Vec<f64> = s.iter().map(|p| n * p / (1.0 - p + 1.0 / n)).collect();
    let lin = wls_functionals(&t, &w, 1)
        .ok_or_else(|| Error::InsufficientData("fit window has a single distinct time".into()))?;
    let slope: f64 = lin[1].iter().zip(&y).map(|(c, y)| c * y).sum();
    let stderr = log_survival_variance(&lin[1], &s, n).sqrt();
    let lambda_hat = -slope;
    let mut flags = Vec::new();
    let mut curvature_z = 0.0;
    if win.len() >= 4 {
        if let Some(quad) = wls_functionals(&t, &w, 2) {
            let q: f64 = quad[2].iter().zip(&y).map(|(c, y)| c * y).sum();
            let se = log_survival_variance(&quad[2], &s, n).sqrt();
            if se > 0.0 {
                curvature_z = q.abs() / se;
            }
            if curvature_z > CURVATURE_Z {
                flags.push("curvature".into());
            }
        }
    }
    Ok(DecayFit {
        lambda_hat,
        ci: [lambda_hat - Z95 * stderr, lambda_hat + Z95 * stderr],
        stderr,
        window,
        n_points: win.len(),
        curvature_z,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, survivors: u64, n: u64) -> SurvivalRow {
        SurvivalRow {
            t,
            survivors,
            n,
            stderr: 0.0,
        }
    }

    #[test]
    fn exact_exponential() {
        let n = 1_000_000_000u64;
        let rows: Vec<_> = (0..20)
            .map(|k| {
                let t = 0.1 * k as f64;
                row(t, (n as f64 * (-2.0 * t).exp()).round() as u64, n)
            })
            .collect();
        let fit = estimate_decay_rate(&rows).unwrap();
        assert!((fit.lambda_hat - 2.0).abs() < 1e-6);
        assert!(fit.ci[0] < 2.0 && 2.0 < fit.ci[1]);
        assert!(!fit.curved());
    }

    #[test]
    fn all_ones_is_no_decay() {
        let rows: Vec<_> = (0..8).map(|k| row(k as f64, 100, 100)).collect();
        let fit = estimate_decay_rate(&rows).unwrap();
        assert_eq!(fit.lambda_hat, 0.0);
        assert!(fit.no_decay());
    }

    #[test]
    fn too_few_points() {
        let rows: Vec<_> = (0..8).map(|k| row(k as f64, if k < 4 { 100 } else { 10 }, 100)).collect();
        assert!(matches!(estimate_decay_rate(&rows), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn variance_of_increment_matches_binomial() {
        // slope between two points: (log S2 - log S1) / dt
        let s = [0.5, 0.25];
        let c = [-1.0, 1.0];
        let v = log_survival_variance(&c, &s, 100.0);
        // Var log S2 + Var log S1 - 2 Cov = (1-S2)/(nS2) - (1-S1)/(nS1)
        let expect = 0.75 / 25.0 - 0.5 / 50.0;
        assert!((v - expect).abs() < 1e-15);
    }
}
