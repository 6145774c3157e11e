//! Potential energy functions `V` on `R^{dN}` and their admissible sets `O_V`.

mod validate;

pub use validate::{
    validate_assumptions, Assumption, SamplingPlan, SubCheck, ValidationReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ClosedForm;

/// Smoothing length in `1 + c(|x|^2 + eps^2)^{k/2}`.
pub const POLY_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Quadratic,
    PolyConfining,
    SingularComposite,
    Custom,
}

/// Tail `Phi` added to the singular pair term `B/|y|^beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    None,
    /// `Phi(y) = -c2/|y|^6`.
    LennardJonesTail { c2: f64 },
    /// Pure `B/|y|^beta`, intended with `beta = d - 2`.
    CoulombOnly,
    /// Symmetric closed form in `y1..yd` (and `r = |y|`).
    CustomSymmetric { expr: ClosedForm },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
    pub phi: PhiSpec,
    pub q_phi: f64,
    pub r_phi: f64,
    #[serde(rename = "C_phi")]
    pub cap_c_phi: f64,
    pub c_phi: f64,
}

impl InteractionSpec {
    /// Lennard-Jones `c1/r^12 - c2/r^6` with its growth metadata.
    pub fn lennard_jones(c1: f64, c2: f64) -> Self {
        InteractionSpec {
            b: c1,
            beta: 12.0,
            phi: PhiSpec::LennardJonesTail { c2 },
            q_phi: 7.0,
            r_phi: 1.0,
            cap_c_phi: 6.0 * c2,
            c_phi: 0.0,
        }
    }

    fn radial(&self) -> bool {
        !matches!(self.phi, PhiSpec::CustomSymmetric { .. })
    }

    /// Radial profile `f(r)` and its first two derivatives (built-in tails only).
    fn radial_profile(&self, r: f64) -> (f64, f64, f64) {
        let b = self.b;
        let be = self.beta;
        let rb = r.powf(-be);
        let mut f = b * rb;
        let mut df = -be * b * rb / r;
        let mut d2f = be * (be + 1.0) * b * rb / (r * r);
        if let PhiSpec::LennardJonesTail { c2 } = self.phi {
            let r6 = r.powi(-6);
            f -= c2 * r6;
            df += 6.0 * c2 * r6 / r;
            d2f -= 42.0 * c2 * r6 / (r * r);
        }
        (f, df, d2f)
    }

    /// `Phi(y)` alone.
    pub fn phi(&self, y: &[f64]) -> f64 {
        match &self.phi {
            PhiSpec::None | PhiSpec::CoulombOnly => 0.0,
            PhiSpec::LennardJonesTail { c2 } => {
                let r2: f64 = y.iter().map(|a| a * a).sum();
                -c2 / (r2 * r2 * r2)
            }
            PhiSpec::CustomSymmetric { expr } => expr.eval(y),
        }
    }

    /// `grad Phi(y)`.
    pub fn grad_phi(&self, y: &[f64]) -> Vec<f64> {
        match &self.phi {
            PhiSpec::None | PhiSpec::CoulombOnly => vec![0.0; y.len()],
            PhiSpec::LennardJonesTail { c2 } => {
                let r2: f64 = y.iter().map(|a| a * a).sum();
                let s = 6.0 * c2 / (r2 * r2 * r2 * r2);
                y.iter().map(|a| s * a).collect()
            }
            PhiSpec::CustomSymmetric { expr } => expr.eval_dual(y).g,
        }
    }

    /// Pair term `V_I(y)`.
    pub fn pair_value(&self, y: &[f64]) -> f64 {
        let r = norm(y);
        if self.radial() {
            self.radial_profile(r).0
        } else {
            self.b * r.powf(-self.beta) + self.phi(y)
        }
    }

    /// Adds `grad V_I(y)` scaled by `sign` into `out`.
    fn add_pair_gradient(&self, y: &[f64], sign: f64, out: &mut [f64]) {
        let r = norm(y);
        if self.radial() {
            let (_, df, _) = self.radial_profile(r);
            for (o, a) in out.iter_mut().zip(y) {
                *o += sign * df * a / r;
            }
        } else {
            let s = -self.beta * self.b * r.powf(-self.beta - 2.0);
            let g = self.grad_phi(y);
            for k in 0..y.len() {
                out[k] += sign * (s * y[k] + g[k]);
            }
        }
    }

    /// `Hess V_I(y)` row-major.
    fn pair_hessian(&self, y: &[f64]) -> Vec<f64> {
        let d = y.len();
        let r = norm(y);
        let mut h = vec![0.0; d * d];
        let (df, d2f) = if self.radial() {
            let (_, df, d2f) = self.radial_profile(r);
            (df, d2f)
        } else {
            let be = self.beta;
            let rb = self.b * r.powf(-be);
            (-be * rb / r, be * (be + 1.0) * rb / (r * r))
        };
        for i in 0..d {
            for j in 0..d {
                let uu = y[i] * y[j] / (r * r);
                let id = if i == j { 1.0 } else { 0.0 };
                h[i * d + j] = d2f * uu + df / r * (id - uu);
            }
        }
        if let PhiSpec::CustomSymmetric { expr } = &self.phi {
            let dual = expr.eval_dual(y);
            for (a, b) in h.iter_mut().zip(&dual.h) {
                *a += b;
            }
        }
        h
    }

    /// Minimum of the radial pair profile on `r > 0` (scan plus refinement).
    pub fn pair_minimum(&self, d: usize) -> f64 {
        let mut best = f64::INFINITY;
        let mut y = vec![0.0; d];
        let mut r = 1e-3;
        while r < 1e3 {
            y[0] = r;
            best = best.min(self.pair_value(&y));
            r *= 1.01;
        }
        best
    }
}

/// Compactly supported perturbation `V_p`, declared on the ball
/// `|x - center| < support_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub expr: ClosedForm,
    pub support_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl Perturbation {
    pub fn center(&self, n: usize) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; n])
    }
}

fn default_one() -> f64 {
    1.0
}

fn default_poly_eps() -> f64 {
    POLY_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default = "default_usize_one")]
    pub dim_d: usize,
    #[serde(default = "default_usize_one")]
    pub n_particles: usize,
    #[serde(default = "default_one")]
    pub quadratic_a0: f64,
    #[serde(default = "default_poly_k")]
    pub poly_k: f64,
    #[serde(default = "default_one")]
    pub poly_c: f64,
    #[serde(default = "default_poly_eps")]
    pub poly_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<InteractionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ClosedForm>,
    #[serde(default = "default_one")]
    pub floor: f64,
}

fn default_usize_one() -> usize {
    1
}

fn default_poly_k() -> f64 {
    2.0
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::quadratic(1, 1.0, 1.0)
    }
}

impl PotentialSpec {
    pub fn quadratic(d: usize, a0: f64, floor: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quadratic,
            dim_d: d,
            n_particles: 1,
            quadratic_a0: a0,
            poly_k: 2.0,
            poly_c: 1.0,
            poly_eps: POLY_EPS,
            interaction: None,
            perturbation: None,
            custom: None,
            floor,
        }
    }

    /// `floor + c(|x|^2 + eps^2)^{k/2}` per particle.
    pub fn poly(d: usize, k: f64, c: f64, floor: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::PolyConfining,
            poly_k: k,
            poly_c: c,
            ..PotentialSpec::quadratic(d, 1.0, floor)
        }
    }

    /// Quadratic confinement plus pair interactions, with `floor` chosen so
    /// that `V >= 1` when `floor` is `None`.
    pub fn singular(
        d: usize,
        n: usize,
        a0: f64,
        interaction: InteractionSpec,
        floor: Option<f64>,
    ) -> Self {
        let pairs = (n * (n - 1) / 2) as f64;
        let fl = floor.unwrap_or_else(|| {
            let m = interaction.pair_minimum(d).min(0.0);
            1.0 - pairs * m
        });
        PotentialSpec {
            kind: PotentialKind::SingularComposite,
            dim_d: d,
            n_particles: n,
            quadratic_a0: a0,
            interaction: Some(interaction),
            floor: fl,
            ..PotentialSpec::quadratic(d, a0, 1.0)
        }
    }

    pub fn custom(d: usize, n: usize, expr: ClosedForm, floor: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Custom,
            dim_d: d,
            n_particles: n,
            custom: Some(expr),
            ..PotentialSpec::quadratic(d, 1.0, floor)
        }
    }

    /// Total dimension `dN`.
    pub fn dim(&self) -> usize {
        self.dim_d * self.n_particles
    }

    /// Structural checks; returns every violation found.
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dim_d == 0 || self.n_particles == 0 {
            errs.push("potential: dim_d and n_particles must be positive".into());
        }
        match self.kind {
            PotentialKind::Quadratic | PotentialKind::SingularComposite => {
                if !(self.quadratic_a0 > 0.0) {
                    errs.push("potential: quadratic confinement needs a0 > 0".into());
                }
            }
            PotentialKind::PolyConfining => {
                if !(self.poly_k > 1.0) {
                    errs.push("potential: polynomial growth needs k > 1".into());
                }
                if !(self.poly_c > 0.0) {
                    errs.push("potential: polynomial coefficient must be positive".into());
                }
            }
            PotentialKind::Custom => match &self.custom {
                None => errs.push("potential: kind = custom requires `custom`".into()),
                Some(e) if e.max_var() > self.dim() => errs.push(format!(
                    "potential: custom expression uses x{} but dN = {}",
                    e.max_var(),
                    self.dim()
                )),
                _ => {}
            },
        }
        if let Some(i) = &self.interaction {
            if self.kind != PotentialKind::SingularComposite {
                errs.push("potential: interaction only allowed for singular_composite".into());
            }
            if !(i.b > 0.0 && i.beta > 0.0) {
                errs.push("interaction: B and beta must be positive".into());
            }
            if !(i.q_phi >= 0.0 && i.q_phi < i.beta + 1.0) {
                errs.push("interaction: requires 0 <= q_phi < beta + 1".into());
            }
            if let PhiSpec::CustomSymmetric { expr } = &i.phi {
                if expr.max_var() > self.dim_d {
                    errs.push("interaction: custom tail uses more than d variables".into());
                }
            }
        }
        if self.kind == PotentialKind::SingularComposite
            && self.interaction.is_none()
            && self.n_particles > 1
        {
            errs.push("potential: singular_composite with N > 1 needs an interaction".into());
        }
        if let Some(p) = &self.perturbation {
            if !(p.support_radius > 0.0) {
                errs.push("perturbation: support_radius must be positive".into());
            }
            if p.expr.max_var() > self.dim() {
                errs.push("perturbation: expression uses more than dN variables".into());
            }
            if let Some(c) = &p.center {
                if c.len() != self.dim() {
                    errs.push("perturbation: center must have dN entries".into());
                }
            }
        }
        errs
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn has_pairs(&self) -> bool {
        self.interaction.is_some() && self.n_particles > 1
    }

    /// Smallest distance between two particles (`+inf` for one particle).
    pub fn min_pair_distance(&self, x: &[f64]) -> f64 {
        let d = self.dim_d;
        let n = self.n_particles;
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let mut s = 0.0;
                for k in 0..d {
                    let t = x[i * d + k] - x[j * d + k];
                    s += t * t;
                }
                best = best.min(s.sqrt());
            }
        }
        best
    }

    /// Length scale used by step-size control near singularities.
    pub fn distance_proxy(&self, x: &[f64]) -> f64 {
        if self.has_pairs() {
            self.min_pair_distance(x)
        } else {
            f64::INFINITY
        }
    }

    /// Membership in `O_V`.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        if x.iter().any(|a| !a.is_finite()) {
            return false;
        }
        match self.kind {
            PotentialKind::SingularComposite if self.has_pairs() => self.min_pair_distance(x) > 0.0,
            PotentialKind::Custom => self.raw_value(x).is_finite(),
            _ => true,
        }
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        let d = self.dim_d;
        let n = self.n_particles;
        let mut v = self.floor;
        match self.kind {
            PotentialKind::Quadratic | PotentialKind::SingularComposite => {
                v += 0.5 * self.quadratic_a0 * x.iter().map(|a| a * a).sum::<f64>();
            }
            PotentialKind::PolyConfining => {
                let e2 = self.poly_eps * self.poly_eps;
                for i in 0..n {
                    let s: f64 = x[i * d..(i + 1) * d].iter().map(|a| a * a).sum::<f64>() + e2;
                    v += self.poly_c * s.powf(0.5 * self.poly_k);
                }
            }
            PotentialKind::Custom => {
                v += self.custom.as_ref().map(|e| e.eval(x)).unwrap_or(f64::NAN);
            }
        }
        if let Some(inter) = self.interaction.as_ref().filter(|_| n > 1) {
            let mut y = vec![0.0; d];
            for i in 0..n {
                for j in i + 1..n {
                    for k in 0..d {
                        y[k] = x[i * d + k] - x[j * d + k];
                    }
                    v += inter.pair_value(&y);
                }
            }
        }
        if let Some(p) = &self.perturbation {
            v += p.expr.eval(x);
        }
        v
    }

    /// `V(x)`, with `+inf` meaning `x` is outside `O_V`. Overflow at points
    /// of `O_V` saturates to `f64::MAX` so the two cases stay distinct.
    pub fn value(&self, x: &[f64]) -> f64 {
        if !self.in_domain(x) {
            return f64::INFINITY;
        }
        let v = self.raw_value(x);
        if v.is_nan() {
            f64::INFINITY
        } else if v == f64::INFINITY {
            f64::MAX
        } else {
            v
        }
    }

    /// Writes `grad V(x)` into `out`; `x` must lie in `O_V`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        let d = self.dim_d;
        let n = self.n_particles;
        match self.kind {
            PotentialKind::Quadratic | PotentialKind::SingularComposite => {
                for (o, a) in out.iter_mut().zip(x) {
                    *o = self.quadratic_a0 * a;
                }
            }
            PotentialKind::PolyConfining => {
                let e2 = self.poly_eps * self.poly_eps;
                let k = self.poly_k;
                for i in 0..n {
                    let xi = &x[i * d..(i + 1) * d];
                    let s: f64 = xi.iter().map(|a| a * a).sum::<f64>() + e2;
                    let f = self.poly_c * k * s.powf(0.5 * k - 1.0);
                    for c in 0..d {
                        out[i * d + c] = f * xi[c];
                    }
                }
            }
            PotentialKind::Custom => {
                let g = self.custom.as_ref().unwrap().eval_dual(x).g;
                out.copy_from_slice(&g);
            }
        }
        if let Some(inter) = self.interaction.as_ref().filter(|_| n > 1) {
            let mut y = vec![0.0; d];
            let mut g = vec![0.0; d];
            for i in 0..n {
                for j in i + 1..n {
                    for k in 0..d {
                        y[k] = x[i * d + k] - x[j * d + k];
                    }
                    g.iter_mut().for_each(|a| *a = 0.0);
                    inter.add_pair_gradient(&y, 1.0, &mut g);
                    for k in 0..d {
                        out[i * d + k] += g[k];
                        out[j * d + k] -= g[k];
                    }
                }
            }
        }
        if let Some(p) = &self.perturbation {
            let g = p.expr.eval_dual(x).g;
            for (o, a) in out.iter_mut().zip(&g) {
                *o += a;
            }
        }
        Ok(())
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g)?;
        Ok(g)
    }

    /// Analytic Hessian, row-major `dN x dN`.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        let m = self.dim();
        let d = self.dim_d;
        let n = self.n_particles;
        let mut h = vec![0.0; m * m];
        match self.kind {
            PotentialKind::Quadratic | PotentialKind::SingularComposite => {
                for i in 0..m {
                    h[i * m + i] = self.quadratic_a0;
                }
            }
            PotentialKind::PolyConfining => {
                let e2 = self.poly_eps * self.poly_eps;
                let k = self.poly_k;
                let c = self.poly_c;
                for p in 0..n {
                    let xi = &x[p * d..(p + 1) * d];
                    let s: f64 = xi.iter().map(|a| a * a).sum::<f64>() + e2;
                    let a = c * k * s.powf(0.5 * k - 1.0);
                    let b = c * k * (k - 2.0) * s.powf(0.5 * k - 2.0);
                    for i in 0..d {
                        for j in 0..d {
                            let id = if i == j { a } else { 0.0 };
                            h[(p * d + i) * m + p * d + j] = id + b * xi[i] * xi[j];
                        }
                    }
                }
            }
            PotentialKind::Custom => {
                h = self.custom.as_ref().unwrap().eval_dual(x).h;
            }
        }
        if let Some(inter) = self.interaction.as_ref().filter(|_| n > 1) {
            let mut y = vec![0.0; d];
            for i in 0..n {
                for j in i + 1..n {
                    for k in 0..d {
                        y[k] = x[i * d + k] - x[j * d + k];
                    }
                    let hp = inter.pair_hessian(&y);
                    for a in 0..d {
                        for b in 0..d {
                            let v = hp[a * d + b];
                            h[(i * d + a) * m + i * d + b] += v;
                            h[(j * d + a) * m + j * d + b] += v;
                            h[(i * d + a) * m + j * d + b] -= v;
                            h[(j * d + a) * m + i * d + b] -= v;
                        }
                    }
                }
            }
        }
        if let Some(p) = &self.perturbation {
            let hp = p.expr.eval_dual(x).h;
            for (a, b) in h.iter_mut().zip(&hp) {
                *a += b;
            }
        }
        Ok(h)
    }

    /// Hessian from central differences of the analytic gradient with step
    /// `1e-5 * max(1, |x_i|)`, capped by the distance to the nearest
    /// collision, symmetrized.
    pub fn hessian_fd(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let m = self.dim();
        let mut h = vec![0.0; m * m];
        let mut xp = x.to_vec();
        let mut gp = vec![0.0; m];
        let mut gm = vec![0.0; m];
        let proxy = self.distance_proxy(x);
        for j in 0..m {
            let step = 1e-5 * x[j].abs().max(1.0).min(proxy);
            xp[j] = x[j] + step;
            self.gradient_into(&xp, &mut gp)?;
            xp[j] = x[j] - step;
            self.gradient_into(&xp, &mut gm)?;
            xp[j] = x[j];
            for i in 0..m {
                h[i * m + j] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (h[i * m + j] + h[j * m + i]);
                h[i * m + j] = s;
                h[j * m + i] = s;
            }
        }
        Ok(h)
    }

    /// A radius `rho` with `{V <= e} ⊂ {|x| <= rho}`, when one follows from
    /// the structure of `V`.
    pub fn sublevel_radius(&self, e: f64) -> Option<f64> {
        let n = self.n_particles as f64;
        let pert_min = match &self.perturbation {
            None => 0.0,
            Some(_) => return None,
        };
        let budget = e - self.floor - pert_min;
        if budget <= 0.0 {
            return Some(0.0);
        }
        match self.kind {
            PotentialKind::Quadratic => Some((2.0 * budget / self.quadratic_a0).sqrt()),
            PotentialKind::PolyConfining => {
                Some(n.sqrt() * (budget / self.poly_c).powf(1.0 / self.poly_k))
            }
            PotentialKind::SingularComposite => {
                let pairs = n * (n - 1.0) / 2.0;
                let m = self
                    .interaction
                    .as_ref()
                    .map(|i| i.pair_minimum(self.dim_d).min(0.0))
                    .unwrap_or(0.0);
                Some((2.0 * (budget - pairs * m) / self.quadratic_a0).sqrt())
            }
            PotentialKind::Custom => None,
        }
    }
}

/// `V(x)`; `+inf` outside `O_V`.
pub fn eval_potential(spec: &PotentialSpec, x: &[f64]) -> Result<f64> {
    spec.check_dim(x)?;
    Ok(spec.value(x))
}

/// `grad V(x)` for `x` in `O_V`.
pub fn grad_potential(spec: &PotentialSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.gradient(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum_is_floor() {
        let v = PotentialSpec::quadratic(1, 1.0, 1.0);
        assert_eq!(eval_potential(&v, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_gradient() {
        let v = PotentialSpec::quadratic(1, 2.0, 1.0);
        assert_eq!(grad_potential(&v, &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn coincident_particles_are_outside() {
        let i = InteractionSpec {
            b: 1.0,
            beta: 6.0,
            phi: PhiSpec::None,
            q_phi: 0.0,
            r_phi: 1.0,
            cap_c_phi: 0.0,
            c_phi: 0.0,
        };
        let v = PotentialSpec::singular(2, 2, 1.0, i, None);
        assert_eq!(eval_potential(&v, &[0.0; 4]).unwrap(), f64::INFINITY);
        assert!(v.gradient(&[0.0; 4]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let v = PotentialSpec::quadratic(2, 1.0, 1.0);
        assert!(matches!(
            eval_potential(&v, &[1.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn overflow_is_not_the_sentinel() {
        let v = PotentialSpec::singular(1, 2, 1.0, InteractionSpec::lennard_jones(1.0, 1.0), None);
        let e = v.value(&[0.0, 1e-40]);
        assert_eq!(e, f64::MAX);
        assert!(v.in_domain(&[0.0, 1e-40]));
    }
}
