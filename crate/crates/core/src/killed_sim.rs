//! Euler-Maruyama paths killed on leaving `D = O x R^m`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ClosedForm;
use crate::potentials::PotentialSpec;
use crate::processes::{hamiltonian, growth_constant, Family, NoiseLayout, ProcessSpec, State};
use crate::rng::{self, Stream};

/// Halvings allowed before a step near a singularity is declared stalled.
pub const MAX_HALVINGS: u32 = 10;
/// Bisection iterations used to locate an exit inside the bracketing step.
pub const EXIT_BISECTIONS: u32 = 8;
/// Largest admissible `|grad V| dt` relative to the distance proxy.
pub const GRAD_STEP_FRACTION: f64 = 0.1;

/// The open position set `O`. Membership depends on `x` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    /// All of `R^{dN}`; with a confining potential nothing is ever killed.
    Whole,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `{x : g(x) < threshold}`.
    Sublevel {
        g: ClosedForm,
        threshold: f64,
    },
    Complement {
        inner: Box<DomainSpec>,
    },
    Intersection {
        parts: Vec<DomainSpec>,
    },
    Union {
        parts: Vec<DomainSpec>,
    },
}

impl DomainSpec {
    pub fn interval(lo: f64, hi: f64) -> Self {
        DomainSpec::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::Whole => true,
            DomainSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2 < radius * radius
            }
            DomainSpec::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(a, (l, h))| *l < *a && *a < *h),
            DomainSpec::Sublevel { g, threshold } => g.eval(x) < *threshold,
            DomainSpec::Complement { inner } => !inner.contains(x),
            DomainSpec::Intersection { parts } => parts.iter().all(|p| p.contains(x)),
            DomainSpec::Union { parts } => parts.iter().any(|p| p.contains(x)),
        }
    }

    /// A box known to contain `O`, if one is cheap to find.
    pub fn bounding_box(&self, dim: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            DomainSpec::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            DomainSpec::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            DomainSpec::Intersection { parts } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for p in parts {
                    if let Some((l, h)) = p.bounding_box(dim) {
                        acc = Some(match acc {
                            None => (l, h),
                            Some((al, ah)) => (
                                al.iter().zip(&l).map(|(a, b)| a.max(*b)).collect(),
                                ah.iter().zip(&h).map(|(a, b)| a.min(*b)).collect(),
                            ),
                        });
                    }
                }
                acc
            }
            DomainSpec::Union { parts } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for p in parts {
                    let (l, h) = p.bounding_box(dim)?;
                    acc = Some(match acc {
                        None => (l, h),
                        Some((al, ah)) => (
                            al.iter().zip(&l).map(|(a, b)| a.min(*b)).collect(),
                            ah.iter().zip(&h).map(|(a, b)| a.max(*b)).collect(),
                        ),
                    });
                }
                acc
            }
            _ => None,
        }
    }

    fn shape_errors(&self, dim: usize, out: &mut Vec<String>) {
        match self {
            DomainSpec::Whole => {}
            DomainSpec::Ball { center, radius } => {
                if center.len() != dim {
                    out.push(format!("domain: ball center has length {}, expected {dim}", center.len()));
                }
                if !(*radius > 0.0) {
                    out.push("domain: ball radius must be positive".into());
                }
            }
            DomainSpec::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    out.push(format!("domain: box corners must have length {dim}"));
                } else if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    out.push("domain: box needs lo < hi in every coordinate".into());
                }
            }
            DomainSpec::Sublevel { g, .. } => {
                if g.max_var() > dim {
                    out.push(format!(
                        "domain: sublevel function uses coordinate {} but dN = {dim}",
                        g.max_var()
                    ));
                }
            }
            DomainSpec::Complement { inner } => inner.shape_errors(dim, out),
            DomainSpec::Intersection { parts } | DomainSpec::Union { parts } => {
                for p in parts {
                    p.shape_errors(dim, out);
                }
            }
        }
    }

    /// Structural and sampled consistency checks against the potential.
    ///
    /// Sampled points of `O` must lie in `O_V`, `O` must be nonempty, and the
    /// optional `witness` must lie in `O_V` but outside `O`.
    pub fn check(&self, pot: &PotentialSpec, witness: Option<&[f64]>, seed: u64) -> Vec<String> {
        let dim = pot.dim();
        let mut errs = Vec::new();
        self.shape_errors(dim, &mut errs);
        if !errs.is_empty() {
            return errs;
        }
        if let Some(w) = witness {
            if w.len() != dim {
                errs.push(format!("domain: witness has length {}, expected {dim}", w.len()));
            } else if !pot.in_domain(w) || self.contains(w) {
                errs.push("domain: witness point must lie in O_V outside the closure of O".into());
            }
        }
        let (lo, hi) = self
            .bounding_box(dim)
            .unwrap_or_else(|| (vec![-10.0; dim], vec![10.0; dim]));
        let mut r = rng::stream(seed, "domain-check", 0);
        let mut x = vec![0.0; dim];
        let (mut inside, mut bad) = (0usize, 0usize);
        for _ in 0..20_000 {
            for k in 0..dim {
                x[k] = if lo[k] < hi[k] { r.random_range(lo[k]..hi[k]) } else { lo[k] };
            }
            if self.contains(&x) {
                inside += 1;
                if !pot.in_domain(&x) {
                    bad += 1;
                }
            }
        }
        if inside == 0 {
            errs.push("domain: O appears to be empty (no sampled point inside)".into());
        }
        if bad > 0 {
            errs.push(format!("domain: {bad} sampled points of O lie outside O_V"));
        }
        errs
    }
}

/// One coordinate block of an initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Marginal {
    Point { value: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl Marginal {
    pub fn zeros(n: usize) -> Self {
        Marginal::Point { value: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        match self {
            Marginal::Point { value } => value.len(),
            Marginal::Uniform { lo, .. } => lo.len(),
            Marginal::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        match self {
            Marginal::Point { value } => value.clone(),
            Marginal::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| if l < h { r.random_range(*l..*h) } else { *l })
                .collect(),
            Marginal::Gaussian { mean, std } => {
                let mut z = vec![0.0; mean.len()];
                rng::fill_normal(r, &mut z);
                mean.iter().zip(&z).map(|(m, e)| m + std * e).collect()
            }
        }
    }
}

/// Product law for `(x, v, aux)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialLaw {
    pub x: Marginal,
    pub v: Marginal,
    #[serde(default = "empty_marginal")]
    pub aux: Marginal,
}

fn empty_marginal() -> Marginal {
    Marginal::zeros(0)
}

impl InitialLaw {
    pub fn point(s: &State) -> Self {
        InitialLaw {
            x: Marginal::Point { value: s.x.clone() },
            v: Marginal::Point { value: s.v.clone() },
            aux: Marginal::Point { value: s.aux.clone() },
        }
    }

    pub fn sample<R: Rng>(&self, r: &mut R) -> State {
        State {
            x: self.x.sample(r),
            v: self.v.sample(r),
            aux: self.aux.sample(r),
        }
    }

    pub fn check(&self, proc: &ProcessSpec) -> Vec<String> {
        let mut errs = Vec::new();
        let n = proc.dim();
        if self.x.len() != n || self.v.len() != n {
            errs.push(format!("initial law: x and v blocks must have length {n}"));
        }
        if self.aux.len() != proc.aux_len() {
            errs.push(format!(
                "initial law: aux block must have length {}",
                proc.aux_len()
            ));
        }
        errs
    }
}

/// Width of the Gaussian input to [`step`].
pub fn noise_len(proc: &ProcessSpec) -> usize {
    match proc.family {
        Family::GeneralizedLangevin => 2 * proc.dim(),
        _ => proc.dim(),
    }
}

enum Attempt {
    Accepted,
    Rejected,
}

/// Scratch buffers for repeated Euler-Maruyama steps of one process.
pub struct Stepper<'a> {
    proc: &'a ProcessSpec,
    noise: NoiseLayout,
    grad: Vec<f64>,
    drift: State,
    xi: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(proc: &'a ProcessSpec) -> Self {
        Stepper {
            proc,
            noise: proc.noise(),
            grad: vec![0.0; proc.dim()],
            drift: State::zeros(proc.dim(), proc.aux_len()),
            xi: vec![0.0; noise_len(proc)],
        }
    }

    fn attempt(&mut self, s: &State, h: f64, xi: &[f64], out: &mut State) -> Result<Attempt> {
        let p = self.proc;
        p.drift_into(s, &mut self.grad, &mut self.drift)?;
        let proxy = p.potential.distance_proxy(&s.x);
        if proxy.is_finite() {
            let g = self.grad.iter().map(|a| a * a).sum::<f64>().sqrt();
            if g * h > GRAD_STEP_FRACTION * proxy {
                return Ok(Attempt::Rejected);
            }
        }
        let n = s.x.len();
        let sh = h.sqrt();
        let av = self.noise.v * sh;
        for i in 0..n {
            out.x[i] = s.x[i] + self.drift.x[i] * h;
            out.v[i] = s.v[i] + self.drift.v[i] * h + av * xi[i];
        }
        if p.family == Family::GeneralizedLangevin {
            let az = self.noise.aux * sh;
            for i in 0..n {
                out.aux[i] = s.aux[i] + self.drift.aux[i] * h + az * xi[n + i];
            }
        } else {
            for (o, (a, b)) in out.aux.iter_mut().zip(s.aux.iter().zip(&self.drift.aux)) {
                *o = a + b * h;
            }
        }
        if !p.potential.in_domain(&out.x) {
            return Ok(Attempt::Rejected);
        }
        Ok(Attempt::Accepted)
    }

    /// One adaptive step of nominal size `h` with fresh noise: halves on
    /// rejection, redrawing the increment each time. Returns the size used.
    pub fn advance(&mut self, s: &State, h: f64, t: f64, r: &mut Stream, out: &mut State) -> Result<f64> {
        let mut hh = h;
        let mut xi = std::mem::take(&mut self.xi);
        let res = (|| {
            for _ in 0..=MAX_HALVINGS {
                rng::fill_normal(r, &mut xi);
                if let Attempt::Accepted = self.attempt(s, hh, &xi, out)? {
                    if !out.is_finite() {
                        return Err(Error::NumericalBlowup {
                            t: t + hh,
                            state: Box::new(out.clone()),
                        });
                    }
                    return Ok(hh);
                }
                hh *= 0.5;
            }
            Err(Error::SingularityStall {
                t,
                state: Box::new(s.clone()),
            })
        })();
        self.xi = xi;
        res
    }
}

/// One Euler-Maruyama step driven by the given standard normal vector.
///
/// A proposal leaving `O_V`, or too long relative to the distance to the
/// nearest singularity, is retried with `dt/2` (same normals) down to
/// `dt / 2^10`.
pub fn step(proc: &ProcessSpec, s: &State, dt: f64, noise: &[f64]) -> Result<State> {
    proc.check_state(s)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Usage(format!("step size must be positive, got {dt}")));
    }
    if noise.len() != noise_len(proc) {
        return Err(Error::Dimension {
            expected: noise_len(proc),
            got: noise.len(),
        });
    }
    let mut st = Stepper::new(proc);
    let mut out = s.clone();
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        if let Attempt::Accepted = st.attempt(s, h, noise, &mut out)? {
            if !out.is_finite() {
                return Err(Error::NumericalBlowup {
                    t: h,
                    state: Box::new(out),
                });
            }
            return Ok(out);
        }
        h *= 0.5;
    }
    Err(Error::SingularityStall {
        t: 0.0,
        state: Box::new(s.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Survived { state: State },
    Exited { exit_time: f64, exit_state: State },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledTrajectoryResult {
    pub outcome: Outcome,
    pub n_steps: u64,
    pub path_samples: Option<Vec<(f64, State)>>,
}

impl KilledTrajectoryResult {
    pub fn exit_time(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Exited { exit_time, .. } => Some(*exit_time),
            Outcome::Survived { .. } => None,
        }
    }
}

fn lerp(a: &State, b: &State, th: f64, out: &mut State) {
    let f = |o: &mut Vec<f64>, p: &[f64], q: &[f64]| {
        for (o, (p, q)) in o.iter_mut().zip(p.iter().zip(q)) {
            *o = p + th * (q - p);
        }
    };
    f(&mut out.x, &a.x, &b.x);
    f(&mut out.v, &a.v, &b.v);
    f(&mut out.aux, &a.aux, &b.aux);
}

/// Runs until `inside` fails or `t_max` is reached. `record_every` thins
/// the stored path (0 stores nothing).
pub fn run_until<F: Fn(&State) -> bool>(
    proc: &ProcessSpec,
    initial: &State,
    inside: F,
    dt: f64,
    t_max: f64,
    r: &mut Stream,
    record_every: u64,
) -> Result<KilledTrajectoryResult> {
    let mut st = Stepper::new(proc);
    let mut cur = initial.clone();
    let mut next = initial.clone();
    let mut t = 0.0;
    let mut n_steps = 0u64;
    let mut path = (record_every > 0).then(|| vec![(0.0, initial.clone())]);
    let eps = 1e-12 * t_max.max(1.0);
    while t < t_max - eps {
        let h = dt.min(t_max - t);
        let used = st.advance(&cur, h, t, r, &mut next)?;
        n_steps += 1;
        if !inside(&next) {
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut probe = cur.clone();
            for _ in 0..EXIT_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                lerp(&cur, &next, mid, &mut probe);
                if inside(&probe) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lerp(&cur, &next, hi, &mut probe);
            return Ok(KilledTrajectoryResult {
                outcome: Outcome::Exited {
                    exit_time: t + hi * used,
                    exit_state: probe,
                },
                n_steps,
                path_samples: path,
            });
        }
        std::mem::swap(&mut cur, &mut next);
        t += used;
        if let Some(p) = path.as_mut() {
            if n_steps % record_every == 0 {
                p.push((t, cur.clone()));
            }
        }
    }
    Ok(KilledTrajectoryResult {
        outcome: Outcome::Survived { state: cur },
        n_steps,
        path_samples: path,
    })
}

/// A single killed trajectory from `initial`, which must lie in `D`.
pub fn simulate_killed(
    initial: &State,
    proc: &ProcessSpec,
    domain: &DomainSpec,
    dt: f64,
    t_max: f64,
    r: &mut Stream,
) -> Result<KilledTrajectoryResult> {
    proc.check_state(initial)?;
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::Usage("dt must be positive and t_max nonnegative".into()));
    }
    if !domain.contains(&initial.x) || !proc.potential.in_domain(&initial.x) {
        return Err(Error::Usage("initial state must lie in D".into()));
    }
    run_until(proc, initial, |s| domain.contains(&s.x), dt, t_max, r, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub t: f64,
    pub survivors: u64,
    pub n: u64,
    pub stderr: f64,
}

impl SurvivalRow {
    pub fn fraction(&self) -> f64 {
        self.survivors as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub seed: u64,
    pub exited: bool,
    pub exit_time: Option<f64>,
    pub n_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    pub rows: Vec<SurvivalRow>,
    pub trajectories: Vec<TrajectorySummary>,
}

/// Exit times of `n_traj` independent trajectories, one stream each.
///
/// Trajectory `i` draws its initial state and its noise from stream `i` of
/// component `"survival"`, so results do not depend on the worker count.
pub fn survival_curve<S>(
    initial_sampler: S,
    proc: &ProcessSpec,
    domain: &DomainSpec,
    dt: f64,
    time_grid: &[f64],
    n_traj: usize,
    rng_seed: u64,
) -> Result<SurvivalTable>
where
    S: Fn(&mut Stream) -> State + Sync,
{
    if n_traj == 0 {
        return Err(Error::Usage("survival needs n_traj >= 1".into()));
    }
    if time_grid.is_empty()
        || time_grid[0] < 0.0
        || time_grid.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::Usage("time grid must be nonnegative and increasing".into()));
    }
    let t_max = *time_grid.last().unwrap();
    let results: Vec<Result<TrajectorySummary>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng_seed, "survival", i as u64);
            let s0 = initial_sampler(&mut r);
            let res = simulate_killed(&s0, proc, domain, dt, t_max, &mut r)?;
            Ok(TrajectorySummary {
                seed: rng::stream_label(rng_seed, "survival", i as u64),
                exited: res.exit_time().is_some(),
                exit_time: res.exit_time(),
                n_steps: res.n_steps,
            })
        })
        .collect();
    let trajectories = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut exits: Vec<f64> = trajectories.iter().filter_map(|t| t.exit_time).collect();
    exits.sort_by(|a, b| a.total_cmp(b));
    let n = n_traj as u64;
    let rows = time_grid
        .iter()
        .map(|&t| {
            let dead = exits.partition_point(|&e| e <= t) as u64;
            let survivors = n - dead;
            let p = survivors as f64 / n as f64;
            SurvivalRow {
                t,
                survivors,
                n,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
            }
        })
        .collect();
    Ok(SurvivalTable { rows, trajectories })
}

pub fn write_survival_csv<W: Write>(rows: &[SurvivalRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,survivors,n,stderr")?;
    for r in rows {
        writeln!(w, "{},{},{},{:e}", r.t, r.survivors, r.n, r.stderr)?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectorySummary], mut w: W) -> std::io::Result<()> {
    writeln!(w, "seed,outcome,exit_time,n_steps")?;
    for r in rows {
        match r.exit_time {
            Some(e) => writeln!(w, "{},exited,{},{}", r.seed, e, r.n_steps)?,
            None => writeln!(w, "{},survived,,{}", r.seed, r.n_steps)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitBoundReport {
    pub h0: f64,
    pub r: f64,
    pub t: f64,
    /// Constant with `LH <= cH`.
    pub c: f64,
    pub c_derivation: String,
    pub bound: f64,
    pub n_traj: u64,
    pub n_exits: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Monte-Carlo check of `P[sigma_{H_R} <= t] <= e^{ct} H(x0) / R`, where
/// `sigma_{H_R}` is the first time `H >= R`.
pub fn check_exit_bound(
    proc: &ProcessSpec,
    x0: &State,
    r_level: f64,
    t: f64,
    dt: f64,
    n_traj: usize,
    rng_seed: u64,
) -> Result<ExitBoundReport> {
    let h0 = hamiltonian(proc, x0)?;
    if !(h0 < r_level) {
        return Err(Error::Usage(format!("need H(x0) < R, got H = {h0}, R = {r_level}")));
    }
    if n_traj == 0 {
        return Err(Error::Usage("exit bound needs n_traj >= 1".into()));
    }
    let c = growth_constant(proc);
    let c_derivation = match proc.family {
        Family::KineticLangevin => "LH = -gamma|v|^2 + gamma dN <= gamma dN H since H >= 1",
        Family::GeneralizedLangevin => {
            "LH = -gamma|v|^2 - alpha|z|^2 + (gamma+alpha) dN <= (gamma+alpha) dN H since H >= 1"
        }
        Family::NoseHoover => {
            "LH = -y dN - gamma|v|^2 + gamma dN <= dN (1+y^2)/2 + gamma dN <= (gamma+1) dN H"
        }
    }
    .to_string();
    let exits: Vec<Result<bool>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng_seed, "exit-bound", i as u64);
            let res = run_until(
                proc,
                x0,
                |s| hamiltonian(proc, s).map(|h| h < r_level).unwrap_or(false),
                dt,
                t,
                &mut r,
                0,
            )?;
            Ok(res.exit_time().is_some())
        })
        .collect();
    let n_exits = exits.into_iter().collect::<Result<Vec<_>>>()?.iter().filter(|e| **e).count() as u64;
    let p = n_exits as f64 / n_traj as f64;
    let stderr = (p * (1.0 - p) / n_traj as f64).sqrt();
    let bound = (c * t).exp() * h0 / r_level;
    Ok(ExitBoundReport {
        h0,
        r: r_level,
        t,
        c,
        c_derivation,
        bound,
        n_traj: n_traj as u64,
        n_exits,
        estimate: p,
        stderr,
        pass: p + 3.0 * stderr <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> PotentialSpec {
        PotentialSpec::quadratic(1, 1.0, 1.0)
    }

    #[test]
    fn nh_hand_step() {
        let p = ProcessSpec::new(Family::NoseHoover, 1.0, quad());
        let s = State::new(vec![0.0], vec![1.0], vec![0.0]);
        let out = step(&p, &s, 0.01, &[0.0]).unwrap();
        assert!((out.x[0] - 0.01).abs() < 1e-15);
        assert!((out.v[0] - 0.99).abs() < 1e-15);
        assert_eq!(out.aux[0], 0.0);
    }

    #[test]
    fn gl_without_friction_keeps_v_noise_free() {
        let p = ProcessSpec::generalized(0.0, 1.0, 1.0, quad());
        let s = State::zeros(1, 1);
        let out = step(&p, &s, 0.01, &[5.0, 1.0]).unwrap();
        assert_eq!(out.v[0], 0.0);
        assert!((out.aux[0] - (2f64).sqrt() * 0.1).abs() < 1e-14);
    }

    #[test]
    fn rest_state_is_fixed() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, quad());
        let s = State::zeros(1, 0);
        assert_eq!(step(&p, &s, 0.1, &[0.0]).unwrap(), s);
    }

    #[test]
    fn ballistic_exit() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, quad());
        let s = State::new(vec![0.999], vec![10.0], vec![]);
        let dom = DomainSpec::interval(-1.0, 1.0);
        let mut r = rng::stream(1, "t", 0);
        let res = simulate_killed(&s, &p, &dom, 1e-5, 1.0, &mut r).unwrap();
        match res.outcome {
            Outcome::Exited { exit_time, exit_state } => {
                assert!(exit_time < 0.01);
                assert!(!dom.contains(&exit_state.x));
            }
            _ => panic!("expected exit"),
        }
    }

    #[test]
    fn empty_intersection_is_rejected() {
        let dom = DomainSpec::Intersection {
            parts: vec![DomainSpec::interval(-1.0, 0.0), DomainSpec::interval(0.5, 1.0)],
        };
        let errs = dom.check(&quad(), None, 0);
        assert!(errs.iter().any(|e| e.contains("empty")));
    }

    #[test]
    fn survival_starts_at_one() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, quad());
        let dom = DomainSpec::interval(-1.0, 1.0);
        let tab = survival_curve(|_| State::zeros(1, 0), &p, &dom, 1e-3, &[0.0, 0.5], 50, 3).unwrap();
        assert_eq!(tab.rows[0].fraction(), 1.0);
        assert!(tab.rows[1].survivors <= tab.rows[0].survivors);
    }
}
