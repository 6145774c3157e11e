//! Empirical check of the drift condition `-LW >= r_n W - b_n 1_{K_n}`
//! on a sequence of shells exhausting the state space.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ratio_from_jet, LyapunovFamily, LyapunovParams};
use crate::error::{Error, Result};
use crate::processes::{hamiltonian, ProcessSpec, State};
use crate::rng;

/// Shells either by energy, `H in [E_j, E_{j+1})`, or by the minimal
/// pair distance, `min |x^i - x^j| in [r_{j+1}, r_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShellKind {
    Energy {
        levels: Vec<f64>,
    },
    PairDistance {
        /// Strictly decreasing.
        radii: Vec<f64>,
        box_half: f64,
        kinetic_radius: f64,
    },
}

impl ShellKind {
    pub fn n_shells(&self) -> usize {
        match self {
            ShellKind::Energy { levels } => levels.len().saturating_sub(1),
            ShellKind::PairDistance { radii, .. } => radii.len().saturating_sub(1),
        }
    }

    fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self {
            ShellKind::Energy { levels } => {
                if levels.len() < 2 {
                    errs.push("energy shells need at least two levels".to_string());
                }
                if levels.iter().any(|e| !e.is_finite() || *e < 0.0) {
                    errs.push("energy levels must be finite and non-negative".into());
                }
                if levels.windows(2).any(|w| w[1] <= w[0]) {
                    errs.push("energy levels must be strictly increasing".into());
                }
            }
            ShellKind::PairDistance { radii, box_half, kinetic_radius } => {
                if radii.len() < 2 {
                    errs.push("pair-distance shells need at least two radii".into());
                }
                if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                    errs.push("pair radii must be positive".into());
                }
                if radii.windows(2).any(|w| w[1] >= w[0]) {
                    errs.push("pair radii must be strictly decreasing".into());
                }
                if !(*box_half > 0.0) || !(*kinetic_radius >= 0.0) {
                    errs.push("box_half must be positive and kinetic_radius non-negative".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellPlan {
    pub kind: ShellKind,
    pub n_per_shell: usize,
    /// Draw budget per shell; 0 means `1000 * n_per_shell`.
    #[serde(default)]
    pub max_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRecord {
    #[serde(rename = "E_lo", skip_serializing_if = "Option::is_none")]
    pub e_lo: Option<f64>,
    #[serde(rename = "E_hi", skip_serializing_if = "Option::is_none")]
    pub e_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_hi: Option<f64>,
    pub n_samples: usize,
    pub n_drawn: usize,
    pub sup_ratio: f64,
    pub argsup: State,
    pub r_n: f64,
    /// `sup_{K_n} (LW + r_n W)^+`; `None` for the first shell, whose `K_n`
    /// holds no samples, and when it overflows `f64`.
    pub b_n: Option<f64>,
    /// `log b_n`, `-inf` when `b_n = 0`.
    pub log_b_n: Option<f64>,
    pub min_f: f64,
    pub n_nonfinite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C3Report {
    pub family: LyapunovFamily,
    pub params: LyapunovParams,
    pub shells: Vec<ShellRecord>,
    pub invariant_violations: Vec<String>,
    pub shells_pass: bool,
    pub pass: bool,
    pub min_f: f64,
}

fn unit_ball_point<R: Rng>(r: &mut R, m: usize, radius: f64) -> Vec<f64> {
    if m == 0 {
        return Vec::new();
    }
    let mut u = vec![0.0; m];
    rng::fill_normal(r, &mut u);
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
    let rad = radius * r.random::<f64>().powf(1.0 / m as f64);
    u.iter().map(|a| a * rad / nu).collect()
}

/// Uniform point of `{r_in <= |w| < r_out}` in `R^m`.
fn annulus_point<R: Rng>(r: &mut R, m: usize, r_in: f64, r_out: f64) -> Vec<f64> {
    let mut u = vec![0.0; m];
    rng::fill_normal(r, &mut u);
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
    let mf = m as f64;
    let lo = r_in.powf(mf);
    let hi = r_out.powf(mf);
    let rad = (lo + (hi - lo) * r.random::<f64>()).powf(1.0 / mf);
    u.iter().map(|a| a * rad / nu).collect()
}

fn split(w: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let aux = w[n..].to_vec();
    let mut v = w;
    v.truncate(n);
    (v, aux)
}

/// Draws `n` states uniformly from shell `shell_index` of `kind`.
///
/// Energy shells: `x` uniform in `[-X, X]^n` with `X` the sublevel radius
/// at `E_hi`, kinetic part uniform in the ball of radius `sqrt(2 E_hi)`,
/// conditioned on `H in [E_lo, E_hi)`. The kinetic rejection is done in
/// closed form, so each draw of `x` is accepted with the exact annulus
/// volume fraction.
pub fn sample_shell(
    kind: &ShellKind,
    shell_index: usize,
    proc: &ProcessSpec,
    n: usize,
    max_draws: usize,
    seed: u64,
) -> Result<Vec<State>> {
    sample_counted(kind, shell_index, proc, n, max_draws, seed).map(|(s, _)| s)
}

fn sample_counted(
    kind: &ShellKind,
    shell_index: usize,
    proc: &ProcessSpec,
    n: usize,
    max_draws: usize,
    seed: u64,
) -> Result<(Vec<State>, usize)> {
    kind.validate()?;
    if shell_index >= kind.n_shells() {
        return Err(Error::Usage(format!(
            "shell index {shell_index} out of range ({} shells)",
            kind.n_shells()
        )));
    }
    let pot = &proc.potential;
    let dim = proc.dim();
    let m = dim + proc.aux_len();
    let budget = if max_draws == 0 { 1000 * n.max(1) } else { max_draws };
    let mut r = rng::stream(seed, "lyapunov/shell", shell_index as u64);
    let mut out = Vec::with_capacity(n);
    let mut drawn = 0usize;
    match kind {
        ShellKind::Energy { levels } => {
            let (e_lo, e_hi) = (levels[shell_index], levels[shell_index + 1]);
            let big_x = pot.sublevel_radius(e_hi).ok_or_else(|| {
                Error::Sampling(format!("no bounded sublevel set at E = {e_hi}"))
            })?;
            while out.len() < n && drawn < budget {
                drawn += 1;
                let x: Vec<f64> = (0..dim).map(|_| big_x * (2.0 * r.random::<f64>() - 1.0)).collect();
                if !pot.in_domain(&x) {
                    continue;
                }
                let vx = pot.value(&x);
                if !(vx < e_hi) {
                    continue;
                }
                if m == 0 {
                    if vx >= e_lo {
                        out.push(State::new(x, vec![], vec![]));
                    }
                    continue;
                }
                let k_hi = e_hi - vx;
                let k_lo = (e_lo - vx).max(0.0);
                let half_m = 0.5 * m as f64;
                let frac = (k_hi / e_hi).powf(half_m) - (k_lo / e_hi).powf(half_m);
                if r.random::<f64>() >= frac {
                    continue;
                }
                let w = annulus_point(&mut r, m, (2.0 * k_lo).sqrt(), (2.0 * k_hi).sqrt());
                let (v, aux) = split(w, dim);
                let s = State::new(x, v, aux);
                let h = hamiltonian(proc, &s)?;
                if h >= e_lo && h < e_hi {
                    out.push(s);
                }
            }
        }
        ShellKind::PairDistance { radii, box_half, kinetic_radius } => {
            let (r_hi, r_lo) = (radii[shell_index], radii[shell_index + 1]);
            let d = pot.dim_d;
            let np = pot.n_particles;
            if np < 2 {
                return Err(Error::Config(vec!["pair-distance shells need N >= 2".into()]));
            }
            while out.len() < n && drawn < budget {
                drawn += 1;
                let mut x: Vec<f64> = (0..dim).map(|_| box_half * (2.0 * r.random::<f64>() - 1.0)).collect();
                // Place one particle of a random pair at the shell distance.
                let i = r.random_range(0..np);
                let mut j = r.random_range(0..np - 1);
                if j >= i {
                    j += 1;
                }
                let off = annulus_point(&mut r, d, r_lo, r_hi);
                for c in 0..d {
                    x[j * d + c] = x[i * d + c] + off[c];
                }
                if x.iter().any(|a| a.abs() > *box_half) {
                    continue;
                }
                let md = pot.min_pair_distance(&x);
                if !(md >= r_lo && md < r_hi) || !pot.in_domain(&x) {
                    continue;
                }
                let w = unit_ball_point(&mut r, m, *kinetic_radius);
                let (v, aux) = split(w, dim);
                out.push(State::new(x, v, aux));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Sampling(format!(
            "shell {shell_index}: no accepted samples in {drawn} draws"
        )));
    }
    Ok((out, drawn))
}

struct Eval {
    ratio: f64,
    log_w: f64,
    f: f64,
}

fn evaluate(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Eval {
    let delta = params.delta();
    match params.f_jet(proc, s) {
        Ok(f) => {
            let ratio = ratio_from_jet(proc, s, &f, delta).unwrap_or(f64::NAN);
            Eval {
                ratio,
                log_w: f.val.powf(delta),
                f: f.val,
            }
        }
        Err(_) => Eval {
            ratio: f64::NAN,
            log_w: f64::NAN,
            f: f64::NAN,
        },
    }
}

/// Samples every shell of `plan`, records `sup LW/W` and the implied
/// `(r_n, b_n)`, with `K_n` the union of the shells before `n`.
pub fn verify_c3(params: &LyapunovParams, proc: &ProcessSpec, plan: &ShellPlan, seed: u64) -> Result<C3Report> {
    plan.kind.validate()?;
    if plan.n_per_shell == 0 {
        return Err(Error::Config(vec!["n_per_shell must be positive".into()]));
    }
    let violations = params.check(proc);
    let mut shells: Vec<ShellRecord> = Vec::new();
    // (ratio, log W) of every finite sample so far, for b_n.
    let mut inside: Vec<(f64, f64)> = Vec::new();
    for j in 0..plan.kind.n_shells() {
        let shell_seed = rng::stream(seed, "c3/shell", j as u64).random::<u64>();
        let (states, drawn) = sample_counted(&plan.kind, j, proc, plan.n_per_shell, plan.max_draws, shell_seed)?;
        let evals: Vec<Eval> = states.par_iter().map(|s| evaluate(params, proc, s)).collect();
        let mut sup = f64::NEG_INFINITY;
        let mut arg = 0usize;
        let mut min_f = f64::INFINITY;
        let mut nonfinite = 0usize;
        for (i, e) in evals.iter().enumerate() {
            if !e.ratio.is_finite() || !e.f.is_finite() {
                nonfinite += 1;
                continue;
            }
            if e.ratio > sup {
                sup = e.ratio;
                arg = i;
            }
            min_f = min_f.min(e.f);
        }
        let r_n = -sup;
        let log_b = if j == 0 {
            None
        } else {
            Some(
                inside
                    .iter()
                    .filter(|(q, _)| q + r_n > 0.0)
                    .map(|(q, lw)| lw + (q + r_n).ln())
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        };
        let b_n = log_b.and_then(|l| {
            let b = l.exp();
            b.is_finite().then_some(b)
        });
        let (e_lo, e_hi, r_lo, r_hi) = match &plan.kind {
            ShellKind::Energy { levels } => (Some(levels[j]), Some(levels[j + 1]), None, None),
            ShellKind::PairDistance { radii, .. } => (None, None, Some(radii[j + 1]), Some(radii[j])),
        };
        inside.extend(
            evals
                .iter()
                .filter(|e| e.ratio.is_finite() && e.log_w.is_finite())
                .map(|e| (e.ratio, e.log_w)),
        );
        shells.push(ShellRecord {
            e_lo,
            e_hi,
            r_lo,
            r_hi,
            n_samples: states.len(),
            n_drawn: drawn,
            sup_ratio: sup,
            argsup: states[arg].clone(),
            r_n,
            b_n,
            log_b_n: log_b,
            min_f,
            n_nonfinite: nonfinite,
        });
    }
    let min_f = shells.iter().map(|s| s.min_f).fold(f64::INFINITY, f64::min);
    let shells_pass = shells_pass(&shells);
    Ok(C3Report {
        family: params.family(),
        params: params.clone(),
        pass: shells_pass && violations.is_empty(),
        invariant_violations: violations,
        shells,
        shells_pass,
        min_f,
    })
}

/// All samples finite, `F >= 1`, the last three sups strictly decreasing
/// and the last one negative.
fn shells_pass(shells: &[ShellRecord]) -> bool {
    if shells.is_empty() {
        return false;
    }
    let finite = shells
        .iter()
        .all(|s| s.n_nonfinite == 0 && s.sup_ratio.is_finite() && s.min_f >= 1.0 - 1e-9);
    let tail = &shells[shells.len().saturating_sub(3)..];
    let decreasing = tail.windows(2).all(|w| w[1].sup_ratio < w[0].sup_ratio);
    finite && decreasing && shells.last().unwrap().sup_ratio < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use crate::processes::Family;

    #[test]
    fn energy_shell_samples_lie_in_shell() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0));
        let k = ShellKind::Energy { levels: vec![10.0, 100.0] };
        let s = sample_shell(&k, 0, &p, 200, 0, 3).unwrap();
        assert_eq!(s.len(), 200);
        for st in &s {
            let h = hamiltonian(&p, st).unwrap();
            assert!((10.0..100.0).contains(&h));
        }
    }

    #[test]
    fn rejects_bad_levels() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let k = ShellKind::Energy { levels: vec![10.0, 5.0] };
        assert!(matches!(sample_shell(&k, 0, &p, 5, 0, 0), Err(Error::Config(_))));
    }
}
