use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::histogram::{binned_tv, tv_noise_floor, Binning, Counts, Histogram};
use crate::error::{Error, Result};
use crate::killed_sim::{run_until, DomainSpec, InitialLaw};
use crate::processes::{ProcessSpec, State};
use crate::rng::{self, Stream};

/// Survivors required in both conditioned samples for a point to be fitted.
pub const MIN_FIT_SURVIVORS: u64 = 100;
/// Distances at or above this are treated as not yet mixing.
pub const SATURATION: f64 = 0.9;
/// Distances must exceed this multiple of the noise floor to be fitted.
pub const FLOOR_MULTIPLE: f64 = 3.0;
pub const CONFIDENCE: f64 = 0.95;

fn check_start(proc: &ProcessSpec, domain: &DomainSpec, s: &State) -> Result<()> {
    proc.check_state(s)?;
    if !domain.contains(&s.x) || !proc.potential.in_domain(&s.x) {
        return Err(Error::Usage(format!("initial state x = {:?} must lie in D", s.x)));
    }
    Ok(())
}

/// The state at each time of `grid` while the path stays in `D`.
fn killed_path(
    proc: &ProcessSpec,
    domain: &DomainSpec,
    s0: &State,
    grid: &[f64],
    dt: f64,
    r: &mut Stream,
) -> Result<Vec<Option<State>>> {
    check_start(proc, domain, s0)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut cur = s0.clone();
    let mut t = 0.0;
    for &tk in grid {
        if tk > t {
            let res = run_until(proc, &cur, |s| domain.contains(&s.x), dt, tk - t, r, 0)?;
            match res.outcome {
                crate::killed_sim::Outcome::Survived { state } => cur = state,
                crate::killed_sim::Outcome::Exited { .. } => {
                    out.resize(grid.len(), None);
                    return Ok(out);
                }
            }
            t = tk;
        }
        out.push(Some(cur.clone()));
    }
    Ok(out)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Usage("time grid must be nonempty, nonnegative and increasing".into()));
    }
    Ok(())
}

/// Conditioned x-marginal (first coordinate) at each grid time.
fn conditioned_marginals(
    proc: &ProcessSpec,
    domain: &DomainSpec,
    init: &InitialLaw,
    grid: &[f64],
    n_traj: usize,
    bins: Binning,
    dt: f64,
    seed: u64,
    component: &str,
) -> Result<Vec<Counts>> {
    let paths: Vec<Result<Vec<Option<f64>>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, component, i as u64);
            let s0 = init.sample(&mut r);
            let p = killed_path(proc, domain, &s0, grid, dt, &mut r)?;
            Ok(p.into_iter().map(|s| s.map(|s| s.x[0])).collect())
        })
        .collect();
    let mut counts: Vec<Counts> = grid.iter().map(|_| Counts::new(bins)).collect();
    for p in paths {
        for (c, x) in counts.iter_mut().zip(p?) {
            if let Some(x) = x {
                c.add(x);
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub survivors_1: u64,
    pub survivors_2: u64,
    pub distance: f64,
    pub noise_floor: f64,
    pub in_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub m_hat: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub stderr: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub flags: Vec<String>,
}

impl ConvergenceReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,survivors_1,survivors_2,distance,noise_floor,in_window")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{}",
                r.t, r.survivors_1, r.survivors_2, r.distance, r.noise_floor, r.in_window
            )?;
        }
        Ok(())
    }
}

/// Binned total variation between the conditioned x-marginals started from
/// `nu1` and `nu2`, and the exponential rate fitted to its decay.
///
/// The fit uses ordinary least squares of `log distance` against `t` over
/// the points where both samples keep [`MIN_FIT_SURVIVORS`] survivors and
/// the distance lies between [`FLOOR_MULTIPLE`] noise floors and
/// [`SATURATION`].
#[allow(clippy::too_many_arguments)]
pub fn conditional_convergence(
    proc: &ProcessSpec,
    domain: &DomainSpec,
    nu1: &InitialLaw,
    nu2: &InitialLaw,
    time_grid: &[f64],
    n_traj: usize,
    bins: Binning,
    dt: f64,
    seed: u64,
) -> Result<ConvergenceReport> {
    check_grid(time_grid)?;
    if n_traj == 0 {
        return Err(Error::Usage("conditional convergence needs n_traj >= 1".into()));
    }
    let c1 = conditioned_marginals(proc, domain, nu1, time_grid, n_traj, bins, dt, seed, "converge/nu1")?;
    let c2 = conditioned_marginals(proc, domain, nu2, time_grid, n_traj, bins, dt, seed, "converge/nu2")?;
    let mut rows = Vec::with_capacity(time_grid.len());
    for ((&t, a), b) in time_grid.iter().zip(&c1).zip(&c2) {
        let (n1, n2) = (a.total(), b.total());
        if n1 == 0 || n2 == 0 {
            rows.push(ConvergenceRow {
                t,
                survivors_1: n1,
                survivors_2: n2,
                distance: f64::NAN,
                noise_floor: f64::NAN,
                in_window: false,
            });
            continue;
        }
        let (ha, hb) = (a.histogram(), b.histogram());
        let distance = binned_tv(&ha, &hb)?;
        let mut pooled = Counts::new(bins);
        pooled.counts = a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect();
        pooled.outside = a.outside + b.outside;
        let noise_floor = tv_noise_floor(&pooled.histogram(), n1, n2);
        let in_window = n1 >= MIN_FIT_SURVIVORS
            && n2 >= MIN_FIT_SURVIVORS
            && distance < SATURATION
            && distance > FLOOR_MULTIPLE * noise_floor;
        rows.push(ConvergenceRow {
            t,
            survivors_1: n1,
            survivors_2: n2,
            distance,
            noise_floor,
            in_window,
        });
    }
    if rows.iter().all(|r| r.survivors_1 < MIN_FIT_SURVIVORS || r.survivors_2 < MIN_FIT_SURVIVORS) {
        return Err(Error::InsufficientData(format!(
            "no time point has {MIN_FIT_SURVIVORS} survivors from both initial laws"
        )));
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.in_window).map(|r| (r.t, r.distance.ln())).collect();
    let mut flags = Vec::new();
    if pts.len() < 3 {
        flags.push("fit window has fewer than 3 points".into());
        return Ok(ConvergenceReport {
            rows,
            m_hat: None,
            ci: None,
            stderr: None,
            window: None,
            flags,
        });
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>() / stt;
    let sse: f64 = pts.iter().map(|p| (p.1 - ym - slope * (p.0 - tm)).powi(2)).sum();
    let stderr = (sse / (m - 2.0) / stt).sqrt();
    let q = StudentsT::new(0.0, 1.0, m - 2.0)
        .map(|d| d.inverse_cdf(0.5 + 0.5 * CONFIDENCE))
        .unwrap_or(f64::INFINITY);
    let m_hat = -slope;
    if !(m_hat > 0.0) {
        flags.push("distance does not decrease over the fit window".into());
    }
    Ok(ConvergenceReport {
        window: Some([pts[0].0, pts[pts.len() - 1].0]),
        rows,
        m_hat: Some(m_hat),
        ci: Some([m_hat - q * stderr, m_hat + q * stderr]),
        stderr: Some(stderr),
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiProbe {
    pub state: State,
    pub survivors: u64,
    pub n_traj: u64,
    pub phi_hat: f64,
    pub stderr: f64,
}

/// `phi(x) ~ e^{lambda t} P_x(t < sigma_D)`, normalized so that the first
/// probe has value exactly 1.
#[allow(clippy::too_many_arguments)]
pub fn phi_probe(
    proc: &ProcessSpec,
    domain: &DomainSpec,
    probes: &[State],
    t_probe: f64,
    n_traj: usize,
    lambda_hat: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<PhiProbe>> {
    if probes.is_empty() || n_traj == 0 {
        return Err(Error::Usage("phi probes need at least one probe and one trajectory".into()));
    }
    if !(t_probe > 0.0) {
        return Err(Error::Usage("t_probe must be positive".into()));
    }
    for p in probes {
        check_start(proc, domain, p)?;
    }
    let n = n_traj as u64;
    let survivors: Vec<u64> = probes
        .iter()
        .enumerate()
        .map(|(k, p)| -> Result<u64> {
            let alive: Vec<Result<bool>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, "phi-probe", k as u64 * n + i);
                    let res = run_until(proc, p, |s| domain.contains(&s.x), dt, t_probe, &mut r, 0)?;
                    Ok(res.exit_time().is_none())
                })
                .collect();
            Ok(alive.into_iter().collect::<Result<Vec<_>>>()?.iter().filter(|a| **a).count() as u64)
        })
        .collect::<Result<_>>()?;
    if let Some(k) = survivors.iter().position(|&s| s == 0) {
        return Err(Error::InsufficientData(format!(
            "no trajectory from probe {k} survived to t = {t_probe}"
        )));
    }
    let boost = (lambda_hat * t_probe).exp();
    let raw: Vec<f64> = survivors.iter().map(|&s| boost * s as f64 / n as f64).collect();
    let rel_var = |s: u64| {
        let p = s as f64 / n as f64;
        (1.0 - p) / (n as f64 * p)
    };
    Ok(probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let phi_hat = if k == 0 { 1.0 } else { raw[k] / raw[0] };
            let stderr = if k == 0 {
                0.0
            } else {
                phi_hat * (rel_var(survivors[k]) + rel_var(survivors[0])).sqrt()
            };
            PhiProbe {
                state: p.clone(),
                survivors: survivors[k],
                n_traj: n,
                phi_hat,
                stderr,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub delta_t: f64,
    pub n_groups: usize,
    pub n_start: u64,
    pub n_survivors: u64,
    pub before: Histogram,
    pub after: Histogram,
    /// `|after - before| / sigma` per bin. `sigma` is the batch-means
    /// standard error of the paired difference across groups.
    pub z: Vec<f64>,
    pub max_z: f64,
    pub pass: bool,
}

/// Propagates groups of states drawn from the estimated quasi-stationary
/// law (for instance Fleming-Viot snapshots) for `delta_t` under the killed
/// dynamics and compares the survivors' x-marginal with the starting one,
/// bin by bin at three standard errors.
///
/// Groups are treated as batches: the per-bin difference is a ratio of
/// pooled counts and its standard error comes from the linearized
/// between-group spread, which accounts for correlation inside a group.
pub fn fixed_point_check(
    proc: &ProcessSpec,
    domain: &DomainSpec,
    groups: &[Vec<State>],
    bins: Binning,
    delta_t: f64,
    dt: f64,
    seed: u64,
) -> Result<FixedPointReport> {
    let mut problems = bins.check("fixed-point bins");
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        problems.push("fixed-point check needs at least 2 non-empty groups".into());
    }
    if !(delta_t > 0.0) {
        problems.push("fixed-point check needs delta_t > 0".into());
    }
    if !problems.is_empty() {
        return Err(Error::Usage(problems.join("; ")));
    }
    let starts: Vec<(usize, &State)> = groups.iter().enumerate().flat_map(|(g, v)| v.iter().map(move |s| (g, s))).collect();
    let ends: Vec<Result<Option<f64>>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, (_, s))| {
            let mut r = rng::stream(seed, "fixed-point", i as u64);
            let res = run_until(proc, s, |s| domain.contains(&s.x), dt, delta_t, &mut r, 0)?;
            Ok(match res.outcome {
                crate::killed_sim::Outcome::Survived { state } => Some(state.x[0]),
                crate::killed_sim::Outcome::Exited { .. } => None,
            })
        })
        .collect();
    let ends = ends.into_iter().collect::<Result<Vec<_>>>()?;

    let g_n = groups.len();
    let mut before_g = vec![Counts::new(bins); g_n];
    let mut after_g = vec![Counts::new(bins); g_n];
    let mut before = Counts::new(bins);
    let mut after = Counts::new(bins);
    for ((g, s), end) in starts.iter().zip(&ends) {
        before_g[*g].add(s.x[0]);
        before.add(s.x[0]);
        if let Some(x) = end {
            after_g[*g].add(*x);
            after.add(*x);
        }
    }
    if after.total() == 0 {
        return Err(Error::InsufficientData("no particle survived the extra propagation".into()));
    }
    let before = before.histogram();
    let after = after.histogram();
    let n_bar = starts.len() as f64 / g_n as f64;
    let s_bar = ends.iter().flatten().count() as f64 / g_n as f64;
    let z: Vec<f64> = (0..bins.n)
        .map(|j| {
            let resid: Vec<f64> = (0..g_n)
                .map(|g| {
                    let a = (after_g[g].counts[j] as f64 - after.mass[j] * after_g[g].total() as f64) / s_bar;
                    let b = (before_g[g].counts[j] as f64 - before.mass[j] * before_g[g].total() as f64) / n_bar;
                    a - b
                })
                .collect();
            let var = resid.iter().map(|r| r * r).sum::<f64>() / ((g_n - 1) * g_n) as f64;
            let diff = (after.mass[j] - before.mass[j]).abs();
            if var > 0.0 {
                diff / var.sqrt()
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_z = z.iter().copied().fold(0.0, f64::max);
    Ok(FixedPointReport {
        delta_t,
        n_groups: g_n,
        n_start: starts.len() as u64,
        n_survivors: (s_bar * g_n as f64).round() as u64,
        before,
        after,
        pass: max_z <= 3.0,
        z,
        max_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use crate::processes::Family;

    fn harmonic() -> (ProcessSpec, DomainSpec) {
        (
            ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0)),
            DomainSpec::interval(-1.0, 1.0),
        )
    }

    #[test]
    fn first_probe_is_one() {
        let (p, d) = harmonic();
        let probes = [State::zeros(1, 0), State::new(vec![0.8], vec![0.0], vec![])];
        let out = phi_probe(&p, &d, &probes, 0.5, 400, 1.0, 1e-2, 5).unwrap();
        assert_eq!(out[0].phi_hat, 1.0);
        assert!(out[1].phi_hat < 1.0);
    }

    #[test]
    fn identical_laws_stay_near_noise_floor() {
        let (p, d) = harmonic();
        let nu = InitialLaw::point(&State::zeros(1, 0));
        let grid = [0.25, 0.5, 0.75];
        let rep = conditional_convergence(&p, &d, &nu, &nu, &grid, 2000, Binning::new(-1.0, 1.0, 8), 1e-2, 9).unwrap();
        for r in &rep.rows {
            assert!(r.distance < 5.0 * r.noise_floor, "{r:?}");
        }
    }

    #[test]
    fn point_mass_is_not_a_fixed_point() {
        let (p, d) = harmonic();
        let groups = vec![vec![State::new(vec![0.9], vec![0.0], vec![]); 200]; 4];
        let rep = fixed_point_check(&p, &d, &groups, Binning::new(-1.0, 1.0, 8), 0.5, 1e-2, 3).unwrap();
        assert!(!rep.pass && rep.n_survivors > 0);
    }

    #[test]
    fn path_is_absorbed() {
        let (p, d) = harmonic();
        let s = State::new(vec![0.99], vec![20.0], vec![]);
        let mut r = rng::stream(0, "t", 0);
        let out = killed_path(&p, &d, &s, &[0.0, 0.5], 1e-3, &mut r).unwrap();
        assert!(out[0].is_some() && out[1].is_none());
    }
}
