//! Lyapunov weights `W = exp(F^delta)` for the generalized Langevin and
//! Nosé-Hoover dynamics, their exact drift ratio `LW/W`, parameter
//! selection, and shell-by-shell numerical checks of the drift condition.

pub mod cutoffs;
pub mod dawson;
mod gl_regular;
mod gl_singular;
pub mod jet;
mod nh;
mod shells;

pub use gl_regular::GlRegularParams;
pub use gl_singular::{GlSingularParams, JrKind};
pub use nh::{NhOverrides, NhParams, NhParts};
pub use shells::{
    sample_shell, verify_c3, C3Report, ShellKind, ShellPlan, ShellRecord,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{hamiltonian, Derivs, ProcessSpec, State};
use crate::rng;
use jet::{Coords, Jet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovFamily {
    GlRegular,
    GlSingular,
    NoseHoover,
}

impl std::str::FromStr for LyapunovFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gl_regular" => Ok(LyapunovFamily::GlRegular),
            "gl_singular" => Ok(LyapunovFamily::GlSingular),
            "nose_hoover" | "nh" => Ok(LyapunovFamily::NoseHoover),
            _ => Err(Error::Usage(format!("unknown Lyapunov family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LyapunovParams {
    GlRegular(GlRegularParams),
    GlSingular(GlSingularParams),
    NoseHoover(NhParams),
}

impl LyapunovParams {
    pub fn family(&self) -> LyapunovFamily {
        match self {
            LyapunovParams::GlRegular(_) => LyapunovFamily::GlRegular,
            LyapunovParams::GlSingular(_) => LyapunovFamily::GlSingular,
            LyapunovParams::NoseHoover(_) => LyapunovFamily::NoseHoover,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            LyapunovParams::GlRegular(p) => p.delta,
            LyapunovParams::GlSingular(p) => p.delta,
            LyapunovParams::NoseHoover(p) => p.delta,
        }
    }

    /// Every closed-form invariant the parameters violate for `proc`.
    pub fn check(&self, proc: &ProcessSpec) -> Vec<String> {
        match self {
            LyapunovParams::GlRegular(p) => p.check(proc),
            LyapunovParams::GlSingular(p) => p.check(proc),
            LyapunovParams::NoseHoover(p) => p.check(proc),
        }
    }

    /// `F = F_0 + shift` with its derivatives.
    pub fn f_jet(&self, proc: &ProcessSpec, s: &State) -> Result<Jet> {
        match self {
            LyapunovParams::GlRegular(p) => p.f_jet(proc, s),
            LyapunovParams::GlSingular(p) => p.f_jet(proc, s),
            LyapunovParams::NoseHoover(p) => p.f_jet(proc, s),
        }
    }

    /// A constant `c` with `F <= c H`, hence `W <= exp(c^delta H^delta)`.
    pub fn upper_constant(&self, proc: &ProcessSpec) -> f64 {
        match self {
            LyapunovParams::GlRegular(p) => p.upper_constant(proc),
            LyapunovParams::GlSingular(p) => p.upper_constant(proc),
            LyapunovParams::NoseHoover(p) => p.upper_constant(),
        }
    }
}

fn ensure_valid(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Result<()> {
    let errs = params.check(proc);
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    proc.check_state(s)?;
    if !proc.potential.in_domain(&s.x) {
        return Err(Error::OutsideDomain);
    }
    Ok(())
}

/// `F(s)`.
pub fn eval_f(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Result<f64> {
    ensure_valid(params, proc, s)?;
    Ok(params.f_jet(proc, s)?.val)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WValue {
    pub f: f64,
    /// `F^delta`, i.e. `log W`.
    pub log_w: f64,
    /// `+inf` when `exp` overflows.
    pub w: f64,
    pub overflow: bool,
}

impl WValue {
    fn from_f(f: f64, delta: f64) -> Self {
        let log_w = f.powf(delta);
        let w = log_w.exp();
        WValue {
            f,
            log_w,
            w,
            overflow: w.is_infinite() && log_w.is_finite(),
        }
    }
}

/// `W(s) = exp(F(s)^delta)`.
pub fn eval_w(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Result<WValue> {
    let f = eval_f(params, proc, s)?;
    Ok(WValue::from_f(f, params.delta()))
}

/// `LW/W` from the derivatives of `F`:
/// `delta F^{delta-1} LF + (delta(delta-1) F^{delta-2} + delta^2 F^{2delta-2}) Gamma(F)`.
pub(crate) fn ratio_from_jet(proc: &ProcessSpec, s: &State, f: &Jet, delta: f64) -> Result<f64> {
    let d = f.to_derivs();
    let lf = proc.generator(s, &d)?;
    let gam = proc.carre_du_champ(&d);
    let fv = f.val;
    let a = delta * fv.powf(delta - 1.0);
    let b = delta * (delta - 1.0) * fv.powf(delta - 2.0) + delta * delta * fv.powf(2.0 * delta - 2.0);
    Ok(a * lf + b * gam)
}

/// Exact `(LW)(s)/W(s)`.
pub fn drift_ratio(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Result<f64> {
    ensure_valid(params, proc, s)?;
    let f = params.f_jet(proc, s)?;
    ratio_from_jet(proc, s, &f, params.delta())
}

/// Derivatives of `W` itself, for feeding `apply_generator` directly.
pub fn w_derivs(params: &LyapunovParams, proc: &ProcessSpec, s: &State) -> Result<Derivs> {
    ensure_valid(params, proc, s)?;
    let f = params.f_jet(proc, s)?;
    let dl = params.delta();
    let fv = f.val;
    let w = fv.powf(dl).exp();
    let d1 = w * dl * fv.powf(dl - 1.0);
    let d2 = w * (dl * (dl - 1.0) * fv.powf(dl - 2.0) + dl * dl * fv.powf(2.0 * dl - 2.0));
    Ok(f.map((w, d1, d2)).to_derivs())
}

/// Options for [`select_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectOptions {
    /// GL-regular exponent `beta`; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Nosé-Hoover exponent `zeta`; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub nh: NhOverrides,
    /// Energy `H0` of the confirmation shell `[H0, 10 H0]`; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirm_h0: Option<f64>,
    #[serde(default = "default_confirm_samples")]
    pub confirm_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_confirm_samples() -> usize {
    500
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            beta: None,
            zeta: None,
            nh: NhOverrides::default(),
            confirm_h0: None,
            confirm_samples: default_confirm_samples(),
            seed: 0,
        }
    }
}

/// Admissible parameters for `family` and `proc`, or an infeasibility
/// error naming the violated condition.
pub fn select_params(
    family: LyapunovFamily,
    proc: &ProcessSpec,
    delta: f64,
    opts: &SelectOptions,
) -> Result<LyapunovParams> {
    let errs = proc.check();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let params = match family {
        LyapunovFamily::GlRegular => {
            LyapunovParams::GlRegular(GlRegularParams::select(proc, delta, opts.beta)?)
        }
        LyapunovFamily::GlSingular => {
            LyapunovParams::GlSingular(GlSingularParams::select(proc, delta)?)
        }
        LyapunovFamily::NoseHoover => LyapunovParams::NoseHoover(NhParams::select(
            proc,
            delta,
            opts.zeta,
            &opts.nh,
            opts.seed,
        )?),
    };
    let errs = params.check(proc);
    if !errs.is_empty() {
        return Err(Error::Infeasible(errs.join("; ")));
    }
    if let Some(h0) = opts.confirm_h0 {
        let plan = ShellPlan {
            kind: ShellKind::Energy {
                levels: vec![h0, 10.0 * h0],
            },
            n_per_shell: opts.confirm_samples,
            max_draws: 0,
        };
        let rep = verify_c3(&params, proc, &plan, opts.seed)?;
        let sup = rep.shells[0].sup_ratio;
        if !(sup < 0.0) {
            return Err(Error::Infeasible(format!(
                "empirical confirmation: sup LW/W on H in [{h0}, {}] is {sup:.3e}, not negative",
                10.0 * h0
            )));
        }
    }
    Ok(params)
}

/// Sampled maximum of `F^delta - (c H)^delta` with the recorded `c`;
/// nonpositive when the upper bound holds at every sample.
pub fn upper_bound_witness(
    params: &LyapunovParams,
    proc: &ProcessSpec,
    states: &[State],
) -> Result<f64> {
    let c = params.upper_constant(proc);
    let dl = params.delta();
    let mut worst = f64::NEG_INFINITY;
    for s in states {
        let f = params.f_jet(proc, s)?.val;
        let h = hamiltonian(proc, s)?;
        worst = worst.max(f.powf(dl) - (c * h).powf(dl));
    }
    Ok(worst)
}

/// Random states spread over energies up to `e_max`, for witness checks.
pub fn witness_states(proc: &ProcessSpec, n: usize, e_max: f64, seed: u64) -> Result<Vec<State>> {
    use rand::Rng;
    let mut out = Vec::with_capacity(n);
    let mut r = rng::stream(seed, "lyapunov/witness", 0);
    let mut levels = vec![1.0];
    while *levels.last().unwrap() < e_max {
        let next = (levels.last().unwrap() * 10.0).min(e_max);
        levels.push(next);
    }
    if levels.len() < 2 {
        levels.push(e_max.max(2.0));
    }
    let per = n.div_ceil(levels.len() - 1);
    for w in levels.windows(2) {
        let plan = ShellKind::Energy {
            levels: vec![0.0, w[1]],
        };
        let seed_j: u64 = r.random();
        let mut states = sample_shell(&plan, 0, proc, per, 0, seed_j)?;
        out.append(&mut states);
    }
    out.truncate(n);
    Ok(out)
}

/// Coordinate jets plus `V` and `grad_i V` as position-only jets, built
/// from the analytic gradient and Hessian.
pub(crate) struct PhaseJets {
    pub c: Coords,
    pub v: Jet,
    pub dv: Vec<Jet>,
}

impl PhaseJets {
    pub fn new(proc: &ProcessSpec, s: &State) -> Result<Self> {
        let c = Coords::new(s);
        let pot = &proc.potential;
        let grad = pot.gradient(&s.x)?;
        let hess = pot.hessian(&s.x)?;
        let n = c.n;
        let v = c.of_x(pot.value(&s.x), &grad);
        let dv = (0..n)
            .map(|i| c.of_x(grad[i], &hess[i * n..(i + 1) * n]))
            .collect();
        Ok(PhaseJets { c, v, dv })
    }

    /// `H = V + |v|^2/2 + |aux|^2/2`.
    pub fn hamiltonian(&self) -> Jet {
        let mut h = &self.v + &Coords::half_sq(&self.c.v);
        if !self.c.aux.is_empty() {
            h = &h + &Coords::half_sq(&self.c.aux);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use crate::processes::{apply_generator, Family, FiniteDifference};

    fn gl_quartic() -> ProcessSpec {
        ProcessSpec::generalized(1.0, 1.0, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0))
    }

    #[test]
    fn ratio_matches_generator_on_w() {
        let proc = gl_quartic();
        let p = select_params(LyapunovFamily::GlRegular, &proc, 0.8, &SelectOptions::default()).unwrap();
        for s in [
            State::new(vec![1.7], vec![0.3], vec![-0.4]),
            State::new(vec![-2.5], vec![1.1], vec![0.2]),
        ] {
            let w = eval_w(&p, &proc, &s).unwrap().w;
            let d = w_derivs(&p, &proc, &s).unwrap();
            let lw = proc.generator(&s, &d).unwrap();
            let r = drift_ratio(&p, &proc, &s).unwrap();
            assert!((lw / w - r).abs() < 1e-10 * (1.0 + r.abs()), "{} vs {}", lw / w, r);
        }
    }

    #[test]
    fn ratio_matches_finite_differences() {
        let proc = gl_quartic();
        let p = select_params(LyapunovFamily::GlRegular, &proc, 1.0, &SelectOptions::default()).unwrap();
        let s = State::new(vec![1.5], vec![0.7], vec![-0.3]);
        let pp = p.clone();
        let pr = proc.clone();
        let fd = FiniteDifference {
            f: move |s: &State| pp.f_jet(&pr, s).unwrap().val,
            h: 1e-4,
        };
        let lf_fd = apply_generator(&proc, &fd, &s).unwrap();
        let f = p.f_jet(&proc, &s).unwrap();
        let lf = proc.generator(&s, &f.to_derivs()).unwrap();
        assert!((lf - lf_fd).abs() < 1e-5 * (1.0 + lf.abs()));
    }

    #[test]
    fn overflow_is_flagged() {
        let v = WValue::from_f(1e6, 1.0);
        assert!(v.overflow && v.w.is_infinite() && v.f.is_finite());
    }

    #[test]
    fn wrong_family_is_a_config_error() {
        let proc = ProcessSpec::new(Family::KineticLangevin, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0));
        let p = select_params(LyapunovFamily::GlRegular, &gl_quartic(), 1.0, &SelectOptions::default()).unwrap();
        let s = State::new(vec![0.0], vec![0.0], vec![]);
        assert!(matches!(eval_f(&p, &proc, &s), Err(Error::Config(_))));
    }
}
