//! Sampling validators for the structural assumptions on `V`.
//!
//! These are witnesses, not proofs: each sub-inequality is evaluated on a
//! sampling plan and the worst margin is reported.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{norm, PotentialKind, PotentialSpec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Assumption {
    /// Single particle, `V >= 1`, coercive.
    VLoc,
    /// Polynomial sandwich for `|x| >= r_v`; `k` defaults to `poly_k`.
    VPolyXk {
        c_v: f64,
        m_v: f64,
        r_v: f64,
        #[serde(default)]
        k: Option<f64>,
        #[serde(default)]
        gradient_bound: bool,
    },
    /// `V >= 1`, `V -> inf` at infinity and at collisions, `|grad V| -> inf` with `V`.
    VCoercive,
    /// Quadratic confinement.
    V2,
    /// Pair interaction `B/|y|^beta + Phi` with symmetric, tame `Phi`.
    VInt,
    /// Composite form with `d >= 2` and perturbation away from collisions.
    VSing1,
    /// Hessian and gradient growth conditions along sequences with `V -> inf`.
    VSing2 { zeta: f64, delta: f64 },
}

impl Assumption {
    pub fn name(&self) -> &'static str {
        match self {
            Assumption::VLoc => "v_loc",
            Assumption::VPolyXk { .. } => "v_poly_xk",
            Assumption::VCoercive => "v_coercive",
            Assumption::V2 => "v_2",
            Assumption::VInt => "v_int",
            Assumption::VSing1 => "v_sing1",
            Assumption::VSing2 { .. } => "v_sing2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Number of geometric steps along each ray or collision path.
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            n_points: 500,
            r_min: 1e-3,
            r_max: 100.0,
            n_steps: 40,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub worst_margin: f64,
    pub n_evaluated: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub assumption: String,
    pub checks: Vec<SubCheck>,
    pub pass: bool,
}

struct Checks(Vec<SubCheck>);

impl Checks {
    fn margin(&mut self, name: &str, margins: &[f64]) {
        let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
        let pass = !margins.is_empty() && worst >= 0.0 && margins.iter().all(|m| !m.is_nan());
        self.0.push(SubCheck {
            name: name.to_string(),
            worst_margin: worst,
            n_evaluated: margins.len(),
            pass,
        });
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.0.push(SubCheck {
            name: name.to_string(),
            worst_margin: if ok { 0.0 } else { -1.0 },
            n_evaluated: 1,
            pass: ok,
        });
    }
}

fn unit_vector<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut u = vec![0.0; n];
        rng::fill_normal(r, &mut u);
        let s = norm(&u);
        if s > 1e-8 {
            return u.into_iter().map(|a| a / s).collect();
        }
    }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// A configuration with well separated particles on a circle (or line).
fn base_configuration(spec: &PotentialSpec, spacing: f64) -> Vec<f64> {
    let d = spec.dim_d;
    let n = spec.n_particles;
    let mut x = vec![0.0; d * n];
    for i in 0..n {
        let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let rad = spacing * n as f64 / (2.0 * std::f64::consts::PI).max(1.0);
        x[i * d] = rad * th.cos();
        if d > 1 {
            x[i * d + 1] = rad * th.sin();
        } else {
            x[i * d] = spacing * (i as f64 - 0.5 * (n as f64 - 1.0));
        }
    }
    x
}

/// Paths along which `V` should blow up: rays to infinity from the base
/// configuration, and straight approaches of particle 1 onto particle 2.
fn blowup_paths(spec: &PotentialSpec, plan: &SamplingPlan) -> Vec<Vec<Vec<f64>>> {
    let mut r = rng::stream(plan.seed, "validate/paths", 0);
    let m = spec.dim();
    let base = base_configuration(spec, 2.0);
    let n_rays = (plan.n_points / plan.n_steps.max(1)).clamp(4, 64);
    let mut paths = Vec::new();
    for _ in 0..n_rays {
        let u = unit_vector(&mut r, m);
        let path = geometric(1.0, plan.r_max, plan.n_steps)
            .into_iter()
            .map(|t| base.iter().zip(&u).map(|(b, a)| b + t * a).collect())
            .collect();
        paths.push(path);
    }
    if spec.interaction.is_some() && spec.n_particles > 1 {
        let d = spec.dim_d;
        for _ in 0..n_rays {
            let u = unit_vector(&mut r, d);
            let path = geometric(1.0, plan.r_min.max(1e-6), plan.n_steps)
                .into_iter()
                .map(|t| {
                    let mut x = base.clone();
                    for k in 0..d {
                        x[k] = x[d + k] + t * u[k];
                    }
                    x
                })
                .collect();
            paths.push(path);
        }
    }
    paths
}

/// Worst relative increment over the last half of `seq`; non-negative when
/// that tail is non-decreasing.
fn tail_increases(seq: &[f64]) -> f64 {
    let h = seq.len() / 2;
    let tail = &seq[h..];
    let mut worst = f64::INFINITY;
    for w in tail.windows(2) {
        worst = worst.min((w[1] - w[0]) / w[0].abs().max(1e-300));
    }
    worst
}

fn spectral_norm(h: &[f64], m: usize) -> f64 {
    let mat = DMatrix::from_row_slice(m, m, h);
    let eig = SymmetricEigen::new(mat);
    eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

pub fn validate_assumptions(
    spec: &PotentialSpec,
    which: &Assumption,
    plan: &SamplingPlan,
) -> Result<ValidationReport> {
    if plan.n_points == 0 || plan.n_steps == 0 {
        return Err(Error::Usage("sampling plan has zero points".into()));
    }
    let errs = spec.check();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut c = Checks(Vec::new());
    match which {
        Assumption::VLoc => {
            c.flag("single particle (N = 1)", spec.n_particles == 1);
            check_floor(spec, plan, &mut c);
            check_coercive_paths(spec, plan, &mut c, false);
        }
        Assumption::VPolyXk {
            c_v,
            m_v,
            r_v,
            k,
            gradient_bound,
        } => {
            let k = k.unwrap_or(spec.poly_k);
            let mut r = rng::stream(plan.seed, "validate/poly", 0);
            let m = spec.dim();
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            let mut radial = Vec::new();
            let mut grad = Vec::new();
            let hi = plan.r_max.max(*r_v);
            for _ in 0..plan.n_points {
                let u = unit_vector(&mut r, m);
                let t = r_v * (hi / r_v).powf(r.random::<f64>());
                let x: Vec<f64> = u.iter().map(|a| t * a).collect();
                let v = spec.value(&x);
                let g = spec.gradient(&x)?;
                let xk = t.powf(k);
                lower.push((v - c_v * xk) / (c_v * xk));
                upper.push((m_v * xk - v) / (m_v * xk));
                let xg: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
                radial.push((xg - c_v * xk) / (c_v * xk));
                if *gradient_bound {
                    let b = m_v * t.powf(k - 1.0);
                    grad.push((b - norm(&g)) / b);
                }
            }
            c.margin("c_V|x|^k <= V(x)", &lower);
            c.margin("V(x) <= M_V|x|^k", &upper);
            c.margin("c_V|x|^k <= x.grad V(x)", &radial);
            if *gradient_bound {
                c.margin("|grad V(x)| <= M_V|x|^(k-1)", &grad);
            }
        }
        Assumption::VCoercive => {
            check_floor(spec, plan, &mut c);
            check_coercive_paths(spec, plan, &mut c, true);
        }
        Assumption::V2 => {
            c.flag(
                "quadratic confinement a0|y|^2/2 with a0 > 0",
                matches!(
                    spec.kind,
                    PotentialKind::Quadratic | PotentialKind::SingularComposite
                ) && spec.quadratic_a0 > 0.0,
            );
        }
        Assumption::VInt => check_interaction(spec, plan, &mut c)?,
        Assumption::VSing1 => {
            c.flag("d >= 2", spec.dim_d >= 2);
            c.flag(
                "composite form with quadratic confinement",
                spec.kind == PotentialKind::SingularComposite && spec.quadratic_a0 > 0.0,
            );
            check_interaction(spec, plan, &mut c)?;
            check_perturbation_support(spec, plan, &mut c);
        }
        Assumption::VSing2 { zeta, delta } => {
            c.flag("zeta in (1, 2)", *zeta > 1.0 && *zeta < 2.0);
            c.flag("delta in (1/2, 1]", *delta > 0.5 && *delta <= 1.0);
            check_coercive_paths(spec, plan, &mut c, true);
            let m = spec.dim();
            let mut hess_trend = Vec::new();
            let mut grad_trend = Vec::new();
            for path in blowup_paths(spec, plan) {
                let mut r1 = Vec::new();
                let mut r2 = Vec::new();
                for x in &path {
                    let v = spec.value(x);
                    if !(v.is_finite() && v < 1e300) {
                        break;
                    }
                    let g = norm(&spec.gradient(x)?);
                    let h = spectral_norm(&spec.hessian_fd(x)?, m);
                    r1.push(h / g.powf(*zeta));
                    r2.push(g.powf(2.0 - zeta) / v.powf(1.0 - delta));
                }
                if r1.len() < 4 {
                    continue;
                }
                // Only the far half of a path is asymptotic; paths may start
                // near a collision where both ratios are already large.
                // ratio1 -> 0: the negated tail increases and ends below its start.
                let h = r1.len() / 2;
                let neg: Vec<f64> = r1.iter().map(|a| -a).collect();
                let end_drop = (r1[h] - r1[r1.len() - 1]) / r1[h].abs().max(1e-300);
                hess_trend.push(tail_increases(&neg).min(end_drop));
                let end_rise = (r2[r2.len() - 1] - r2[h]) / r2[h].abs().max(1e-300);
                grad_trend.push(tail_increases(&r2).min(end_rise));
            }
            c.margin("|Hess V|/|grad V|^zeta decreases to 0", &hess_trend);
            c.margin("|grad V|^(2-zeta)/V^(1-delta) increases to inf", &grad_trend);
        }
    }
    let pass = c.0.iter().all(|s| s.pass);
    Ok(ValidationReport {
        assumption: which.name().to_string(),
        checks: c.0,
        pass,
    })
}

fn check_floor(spec: &PotentialSpec, plan: &SamplingPlan, c: &mut Checks) {
    let mut r = rng::stream(plan.seed, "validate/floor", 0);
    let m = spec.dim();
    let mut margins = Vec::new();
    for _ in 0..plan.n_points {
        let u = unit_vector(&mut r, m);
        let t = plan.r_max.min(10.0) * r.random::<f64>();
        let x: Vec<f64> = u.iter().map(|a| t * a).collect();
        let v = spec.value(&x);
        if v.is_finite() {
            margins.push(v - 1.0);
        }
    }
    c.margin("V >= 1 on O_V", &margins);
}

fn check_coercive_paths(spec: &PotentialSpec, plan: &SamplingPlan, c: &mut Checks, grad: bool) {
    let mut v_trend = Vec::new();
    let mut g_trend = Vec::new();
    for path in blowup_paths(spec, plan) {
        let vs: Vec<f64> = path.iter().map(|x| spec.value(x)).collect();
        let finite: Vec<f64> = vs.iter().copied().take_while(|v| *v < 1e300).collect();
        if finite.len() < 4 {
            continue;
        }
        v_trend.push(tail_increases(&finite));
        if grad {
            let gs: Vec<f64> = path
                .iter()
                .take(finite.len())
                .filter_map(|x| spec.gradient(x).ok().map(|g| norm(&g)))
                .collect();
            g_trend.push(tail_increases(&gs));
        }
    }
    c.margin("V eventually increasing along blow-up paths", &v_trend);
    if grad {
        c.margin("|grad V| eventually increasing as V grows", &g_trend);
    }
}

fn check_interaction(spec: &PotentialSpec, plan: &SamplingPlan, c: &mut Checks) -> Result<()> {
    let inter = match &spec.interaction {
        Some(i) => i,
        None => {
            c.flag("interaction present", false);
            return Ok(());
        }
    };
    let d = spec.dim_d;
    c.flag("0 <= q_phi < beta + 1", inter.q_phi >= 0.0 && inter.q_phi < inter.beta + 1.0);
    let mut r = rng::stream(plan.seed, "validate/interaction", 0);
    let mut sym = Vec::new();
    let mut grad = Vec::new();
    let mut far_bounded = true;
    let hi = plan.r_max.max(inter.r_phi * 2.0);
    for _ in 0..plan.n_points {
        let u = unit_vector(&mut r, d);
        let t = plan.r_min * (hi / plan.r_min).powf(r.random::<f64>());
        let y: Vec<f64> = u.iter().map(|a| t * a).collect();
        let ym: Vec<f64> = y.iter().map(|a| -a).collect();
        let p = inter.phi(&y);
        let pm = inter.phi(&ym);
        sym.push(1e-12 * (1.0 + p.abs()) - (p - pm).abs());
        let g = norm(&inter.grad_phi(&y));
        let bound = inter.cap_c_phi / t.powf(inter.q_phi) + inter.c_phi;
        grad.push((bound * (1.0 + 1e-10) - g) / bound.max(1e-300));
        if t > inter.r_phi {
            far_bounded &= (p.abs() + g).is_finite();
        }
    }
    c.margin("Phi(y) = Phi(-y)", &sym);
    c.margin("|grad Phi| <= C_phi/|y|^q_phi + c_phi", &grad);
    c.flag("Phi, grad Phi bounded beyond r_phi", far_bounded);
    let u = unit_vector(&mut r, d);
    let seq: Vec<f64> = geometric(plan.r_max.min(1.0), plan.r_min.max(1e-6), plan.n_steps)
        .into_iter()
        .map(|t| {
            let y: Vec<f64> = u.iter().map(|a| t * a).collect();
            t.powf(inter.beta) * inter.phi(&y).abs()
        })
        .collect();
    let neg: Vec<f64> = seq.iter().map(|a| -a).collect();
    let last = seq[seq.len() - 1];
    let decay = if seq[0] > 0.0 { 1e-3 - last / seq[0] } else { 1e-3 - last };
    c.margin("|y|^beta |Phi(y)| -> 0", &[tail_increases(&neg), decay]);
    Ok(())
}

fn check_perturbation_support(spec: &PotentialSpec, plan: &SamplingPlan, c: &mut Checks) {
    let p = match &spec.perturbation {
        Some(p) => p,
        None => {
            c.flag("no perturbation", true);
            return;
        }
    };
    let m = spec.dim();
    let centre = p.center(m);
    let mut r = rng::stream(plan.seed, "validate/perturbation", 0);
    let mut outside = Vec::new();
    let mut near_collision = Vec::new();
    for _ in 0..plan.n_points {
        let u = unit_vector(&mut r, m);
        let t = p.support_radius * (1.0 + 3.0 * r.random::<f64>());
        let x: Vec<f64> = centre.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        outside.push(1e-12 - p.expr.eval(&x).abs());
        let mut y: Vec<f64> = centre
            .iter()
            .zip(&u)
            .map(|(a, b)| a + p.support_radius * r.random::<f64>() * b)
            .collect();
        if spec.n_particles > 1 {
            let d = spec.dim_d;
            for k in 0..d {
                y[k] = y[d + k] + 1e-6 * u[k];
            }
            near_collision.push(1e-12 - p.expr.eval(&y).abs());
        }
    }
    c.margin("V_p vanishes outside its declared support", &outside);
    if !near_collision.is_empty() {
        c.margin("V_p vanishes near collisions", &near_collision);
    }
}
