//! `F_0 = h H + a kappa J(x).v + b v.z` with
//! `J(x) = x |x|^{beta-1} chi(|x|)`, for confining potentials growing
//! like `|x|^k` and a single particle.

use serde::{Deserialize, Serialize};

use super::cutoffs::smoothstep;
use super::jet::Jet;
use super::PhaseJets;
use crate::error::{Error, Result};
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::processes::{Family, ProcessSpec, State};

/// Safety factor on sampled suprema.
const SUP_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlRegularParams {
    pub delta: f64,
    pub beta: f64,
    /// Growth exponent of `V`.
    pub k: f64,
    /// `c_V` with `V >= c_V |x|^k` and `x.grad V >= c_V |x|^k`.
    pub c_v: f64,
    /// `M_V` with `|grad V| <= M_V |x|^{k-1}` for `|x| >= 1`.
    pub m_v: f64,
    pub h_frak: f64,
    pub a_frak: f64,
    pub b_frak: f64,
    pub kappa: f64,
    #[serde(rename = "C_J")]
    pub c_j: f64,
    pub shift: f64,
    pub chi_inner: f64,
    pub chi_outer: f64,
    /// Radius up to which the shift was minimized; `None` when the minimum
    /// is global.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_radius: Option<f64>,
}

/// `(k, c)` for `V = floor + c|x|^k` (up to smoothing).
fn growth(pot: &PotentialSpec) -> Result<(f64, f64)> {
    let bad = || {
        Error::Infeasible(
            "GL-regular construction needs one particle in a quadratic or power-law confining potential without perturbation"
                .into(),
        )
    };
    if pot.n_particles != 1 || pot.perturbation.is_some() {
        return Err(bad());
    }
    match pot.kind {
        PotentialKind::Quadratic => Ok((2.0, 0.5 * pot.quadratic_a0)),
        PotentialKind::PolyConfining => Ok((pot.poly_k, pot.poly_c)),
        _ => Err(bad()),
    }
}

/// `g(r) = r^{beta-1} chi(r)` and `g'(r)`.
fn radial_g(beta: f64, r: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (chi, chi1, _) = smoothstep((r - lo) / (hi - lo));
    if chi == 0.0 {
        return (0.0, 0.0);
    }
    let p = r.powf(beta - 1.0);
    (p * chi, (beta - 1.0) * p / r * chi + p * chi1 / (hi - lo))
}

/// `sup |Jac J|_2`: the Jacobian has eigenvalues `g` (tangential) and
/// `g + r g'` (radial), sampled on `[chi_inner, 4 chi_outer]`.
fn estimate_c_j(beta: f64, lo: f64, hi: f64) -> f64 {
    let n = 40_000;
    let top = 4.0 * hi;
    let mut best: f64 = 0.0;
    for i in 0..=n {
        let r = lo + (top - lo) * i as f64 / n as f64;
        let (g, g1) = radial_g(beta, r, lo, hi);
        best = best.max(g.abs()).max((g + r * g1).abs());
    }
    SUP_FACTOR * best
}

impl GlRegularParams {
    /// Parameters meeting every closed-form condition of the construction.
    pub fn select(proc: &ProcessSpec, delta: f64, beta: Option<f64>) -> Result<Self> {
        if proc.family != Family::GeneralizedLangevin {
            return Err(Error::Infeasible(
                "GL-regular construction needs the generalized Langevin process".into(),
            ));
        }
        let (k, _) = growth(&proc.potential)?;
        let beta = if proc.gamma > 0.0 {
            let top = 1f64.min(k / 2.0).min(k - 1.0);
            if !(top > 0.0) {
                return Err(Error::Infeasible("gamma > 0 requires growth exponent k > 1".into()));
            }
            let b = beta.unwrap_or(0.9 * top);
            if !(b > 0.0 && b < top) {
                return Err(Error::Infeasible(format!(
                    "gamma > 0 requires 0 < beta < min(1, k/2, k-1) = {top}, got beta = {b}"
                )));
            }
            b
        } else {
            if !(k > 1.0 && k <= 2.0) {
                return Err(Error::Infeasible(format!(
                    "gamma = 0 requires growth exponent k in (1, 2], got k = {k}"
                )));
            }
            match beta {
                Some(b) if (b - (k - 1.0)).abs() > 1e-12 => {
                    return Err(Error::Infeasible(format!(
                        "gamma = 0 forces beta = k - 1 = {}, got beta = {b}",
                        k - 1.0
                    )))
                }
                _ => k - 1.0,
            }
        };
        let lo = (1.0 - beta) / k;
        if !(delta > lo && delta <= 1.0) {
            return Err(Error::Infeasible(format!(
                "delta must satisfy (1 - beta)/k = {lo:.6} < delta <= 1, got delta = {delta}"
            )));
        }
        let p = Self::assemble(proc, delta, beta, None)?;
        let errs = p.check(proc);
        if !errs.is_empty() {
            return Err(Error::Infeasible(errs.join("; ")));
        }
        Ok(p)
    }

    /// Builds parameters for an arbitrary `beta` without checking
    /// admissibility, minimizing `F_0` only over `|x| <= shift_radius`.
    /// Used as a negative control.
    pub fn with_beta_unchecked(
        proc: &ProcessSpec,
        delta: f64,
        beta: f64,
        shift_radius: f64,
    ) -> Result<Self> {
        Self::assemble(proc, delta, beta, Some(shift_radius))
    }

    fn assemble(proc: &ProcessSpec, delta: f64, beta: f64, radius: Option<f64>) -> Result<Self> {
        let (k, c) = growth(&proc.potential)?;
        let (lo, hi) = (1.0, 2.0);
        let c_j = estimate_c_j(beta, lo, hi);
        let kappa = proc.lambda_c / (2.0 * c_j);
        let c_l = kappa * c_j;
        let h = (0.25 / delta).min(0.5);
        let mut p = GlRegularParams {
            delta,
            beta,
            k,
            c_v: c,
            m_v: 1.01 * c * k,
            h_frak: h,
            a_frak: 0.0,
            b_frak: 0.0,
            kappa,
            c_j,
            shift: 0.0,
            chi_inner: lo,
            chi_outer: hi,
            shift_radius: radius,
        };
        if proc.gamma > 0.0 {
            let g = proc.gamma;
            p.a_frak = 0.5 * (g * h - 2.0 * delta * g * h * h) / c_l;
        } else {
            let mut a = 0.5 * h;
            let mut found = false;
            for _ in 0..200 {
                p.a_frak = a;
                p.b_frak = a;
                if p.gamma_zero_violations(proc).is_empty() {
                    found = true;
                    break;
                }
                a *= 0.5;
            }
            if !found {
                return Err(Error::Infeasible(
                    "no coupling a > 0 satisfies the gamma = 0 smallness conditions".into(),
                ));
            }
        }
        p.shift = 1.0 - p.inf_f0(proc)?;
        Ok(p)
    }

    /// Lower bound of `F_0` over `(v, z)` at fixed `x`:
    /// `h V - a^2 kappa^2 |J|^2 h / (2(h^2 - b^2))`.
    fn m_of_r(&self, pot: &PotentialSpec, r: f64, x: &mut [f64]) -> f64 {
        x[0] = r;
        let (g, _) = radial_g(self.beta, r, self.chi_inner, self.chi_outer);
        let j2 = (g * r).powi(2);
        let (h, a, b) = (self.h_frak, self.a_frak, self.b_frak);
        h * pot.value(x) - a * a * self.kappa * self.kappa * j2 * h / (2.0 * (h * h - b * b))
    }

    /// `inf F_0`, by a radial scan of [`Self::m_of_r`] extended until the
    /// tail bound `m(r) >= h c r^k - K r^{2 beta}` exceeds the running
    /// minimum (or up to `shift_radius`).
    fn inf_f0(&self, proc: &ProcessSpec) -> Result<f64> {
        let pot = &proc.potential;
        let (h, b) = (self.h_frak, self.b_frak);
        if !(h > b) {
            return Err(Error::Infeasible("h > b is needed for inf F_0 > -inf".into()));
        }
        let mut x = vec![0.0; pot.dim()];
        let kk = self.a_frak.powi(2) * self.kappa.powi(2) * h / (2.0 * (h * h - b * b));
        let tail = |r: f64| h * self.c_v * r.powf(self.k) - kk * r.powf(2.0 * self.beta);
        let mut best = f64::INFINITY;
        let n_lin = 20_000;
        let r_lin = self.shift_radius.unwrap_or(10.0).min(10.0);
        for i in 0..=n_lin {
            let r = r_lin * i as f64 / n_lin as f64;
            best = best.min(self.m_of_r(pot, r, &mut x));
        }
        let mut r = r_lin;
        let limit = self.shift_radius.unwrap_or(1e12);
        loop {
            if r >= limit {
                break;
            }
            if self.shift_radius.is_none() && tail(r) > best && tail(1.001 * r) > tail(r) {
                break;
            }
            r = (r * 1.001).min(limit);
            best = best.min(self.m_of_r(pot, r, &mut x));
            if r > 1e11 {
                return Err(Error::Infeasible("inf F_0 is -inf: the cross term outgrows V".into()));
            }
        }
        if !best.is_finite() {
            return Err(Error::Infeasible("inf F_0 is not finite".into()));
        }
        Ok(best - 1e-4 * (1.0 + best.abs()))
    }

    fn gamma_zero_violations(&self, proc: &ProcessSpec) -> Vec<String> {
        let mut out = Vec::new();
        let (h, a, d) = (self.h_frak, self.a_frak, self.delta);
        let (l, al, kap) = (proc.lambda_c, proc.alpha_c, self.kappa);
        let (cv, mv, k) = (self.c_v, self.m_v, self.k);
        let p1 = k / (k - 1.0);
        let sa = a.sqrt();
        if !(a * kap / p1 < cv * h) {
            out.push("gamma = 0: a kappa / p1 < c_V h fails".into());
        }
        if !(a * kap / k + a / 2.0 < h / 2.0) {
            out.push("gamma = 0: a kappa / k + a/2 < h/2 fails".into());
        }
        if !(-l * a / 2.0 + 2.0 * d * al * a * a + al * a * sa / 2.0 < 0.0) {
            out.push("gamma = 0: v-coefficient -lambda a/2 + 2 delta alpha a^2 + alpha a^1.5/2 < 0 fails".into());
        }
        if !(-kap * cv * a + l * kap * a * sa / 2.0 + mv * a * sa / 2.0 < 0.0) {
            out.push("gamma = 0: x-coefficient -kappa c_V a + (lambda kappa + M_V) a^1.5/2 < 0 fails".into());
        }
        if !(-al * h + 2.0 * d * al * h * h + (l * kap + mv + al) * sa / 2.0 + l * a < 0.0) {
            out.push("gamma = 0: z-coefficient condition fails".into());
        }
        out
    }

    pub fn check(&self, proc: &ProcessSpec) -> Vec<String> {
        let mut out = Vec::new();
        if proc.family != Family::GeneralizedLangevin {
            out.push("GL-regular parameters need the generalized Langevin process".into());
            return out;
        }
        let (k, c) = match growth(&proc.potential) {
            Ok(kc) => kc,
            Err(e) => return vec![e.to_string()],
        };
        if (k - self.k).abs() > 1e-12 || (c - self.c_v).abs() > 1e-12 {
            out.push("GL-regular parameters were built for a different potential".into());
        }
        let (h, a, b, d, be) = (self.h_frak, self.a_frak, self.b_frak, self.delta, self.beta);
        let lo = (1.0 - be) / k;
        if !(d > lo && d <= 1.0) {
            out.push(format!("delta must satisfy (1 - beta)/k = {lo:.6} < delta <= 1"));
        }
        if !(h > 0.0 && a > 0.0 && b >= 0.0) {
            out.push("h, a must be positive and b nonnegative".into());
        }
        if self.kappa * self.c_j > proc.lambda_c / 2.0 * (1.0 + 1e-12) {
            out.push("kappa C_J <= lambda/2 fails".into());
        }
        if proc.gamma > 0.0 {
            let g = proc.gamma;
            if b != 0.0 {
                out.push("gamma > 0 requires b = 0".into());
            }
            let top = 1f64.min(k / 2.0).min(k - 1.0);
            if !(be > 0.0 && be < top) {
                out.push(format!("gamma > 0 requires 0 < beta < min(1, k/2, k-1) = {top}"));
            }
            if !(-g * h + 2.0 * d * g * h * h < 0.0) {
                out.push("gamma > 0 requires -gamma h + 2 delta gamma h^2 < 0".into());
            }
            if !(-proc.alpha_c * h + d * proc.alpha_c * h * h < 0.0) {
                out.push("gamma > 0 requires -alpha h + delta alpha h^2 < 0".into());
            }
            if !(self.kappa * self.c_j * a - g * h + 2.0 * d * g * h * h < 0.0) {
                out.push("gamma > 0 requires C_L a - gamma h + 2 delta gamma h^2 < 0".into());
            }
        } else {
            if !(k > 1.0 && k <= 2.0) {
                out.push("gamma = 0 requires k in (1, 2]".into());
            }
            if (be - (k - 1.0)).abs() > 1e-12 {
                out.push("gamma = 0 requires beta = k - 1".into());
            }
            if b != a {
                out.push("gamma = 0 requires b = a".into());
            }
            if !(-proc.alpha_c * h + 2.0 * d * proc.alpha_c * h * h < 0.0) {
                out.push("gamma = 0 requires -alpha h + 2 delta alpha h^2 < 0".into());
            }
            out.extend(self.gamma_zero_violations(proc));
        }
        if !self.shift.is_finite() {
            out.push("shift is not finite".into());
        }
        if self.shift_radius.is_some() {
            out.push("shift was minimized over a bounded region only".into());
        }
        out
    }

    /// `J(x)` and its Jacobian (row-major), or `None` inside `|x| <= chi_inner`.
    pub fn j_field(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = x.len();
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let (g, g1) = radial_g(self.beta, r, self.chi_inner, self.chi_outer);
        if g == 0.0 && g1 == 0.0 {
            return None;
        }
        let j = x.iter().map(|a| g * a).collect();
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                jac[i * n + k] = g1 * x[i] * x[k] / r + if i == k { g } else { 0.0 };
            }
        }
        Some((j, jac))
    }

    pub fn f_jet(&self, proc: &ProcessSpec, s: &State) -> Result<Jet> {
        let pj = PhaseJets::new(proc, s)?;
        let c = &pj.c;
        let mut f = pj.hamiltonian().scale(self.h_frak);
        if let Some((j, jac)) = self.j_field(&s.x) {
            let n = c.n;
            let jj: Vec<Jet> = (0..n).map(|i| c.of_x(j[i], &jac[i * n..(i + 1) * n])).collect();
            f = &f + &Jet::dot(&jj, &c.v).scale(self.a_frak * self.kappa);
        }
        if self.b_frak != 0.0 {
            f = &f + &Jet::dot(&c.v, &c.aux).scale(self.b_frak);
        }
        Ok(f.add_const(self.shift))
    }

    /// `F <= c H` with `|J|^2 <= 1 + |x|^k <= (1 + 1/c_V) H`, `|v|^2, |z|^2 <= 2H`
    /// and `H >= 1`.
    pub fn upper_constant(&self, proc: &ProcessSpec) -> f64 {
        let _ = proc;
        let ak = self.a_frak * self.kappa;
        self.h_frak + ak * (0.5 * (1.0 + 1.0 / self.c_v) + 1.0) + self.b_frak + self.shift.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proc(gamma: f64, k: f64) -> ProcessSpec {
        ProcessSpec::generalized(gamma, 1.0, 1.0, PotentialSpec::poly(1, k, 1.0, 1.0))
    }

    #[test]
    fn picks_beta_point_nine_for_quadratic() {
        let pr = ProcessSpec::generalized(1.0, 1.0, 1.0, PotentialSpec::quadratic(1, 2.0, 1.0));
        let p = GlRegularParams::select(&pr, 0.5, None).unwrap();
        assert!((p.beta - 0.9).abs() < 1e-12);
        assert!((p.kappa * p.c_j - 0.5).abs() < 1e-12);
        assert_eq!(p.b_frak, 0.0);
    }

    #[test]
    fn gamma_zero_forces_beta() {
        let p = GlRegularParams::select(&proc(0.0, 1.5), 0.5, None).unwrap();
        assert!((p.beta - 0.5).abs() < 1e-12);
        assert_eq!(p.a_frak, p.b_frak);
        let e = GlRegularParams::select(&proc(0.0, 1.5), 0.3, None).unwrap_err();
        assert!(e.to_string().contains("delta"), "{e}");
    }

    #[test]
    fn gamma_zero_rejects_steep_potential() {
        let e = GlRegularParams::select(&proc(0.0, 4.0), 1.0, None).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)));
        assert!(e.to_string().contains("k in (1, 2]"), "{e}");
    }

    #[test]
    fn cross_term_vanishes_inside_unit_ball() {
        let pr = ProcessSpec::generalized(1.0, 1.0, 1.0, PotentialSpec::quadratic(1, 1.0, 1.0));
        let p = GlRegularParams::select(&pr, 1.0, None).unwrap();
        let s = State::new(vec![0.5], vec![0.0], vec![0.0]);
        let f = p.f_jet(&pr, &s).unwrap().val;
        let v = pr.potential.value(&s.x);
        assert!((f - (p.h_frak * v + p.shift)).abs() < 1e-12);
    }

    #[test]
    fn f_is_at_least_one_near_minimizer() {
        let pr = proc(1.0, 4.0);
        let p = GlRegularParams::select(&pr, 1.0, None).unwrap();
        for xr in [0.0, 1.5, 2.0, 3.0] {
            let ak = p.a_frak * p.kappa;
            let (g, _) = radial_g(p.beta, xr, 1.0, 2.0);
            let v = -ak * g * xr / p.h_frak;
            let s = State::new(vec![xr], vec![v], vec![0.0]);
            assert!(p.f_jet(&pr, &s).unwrap().val >= 1.0);
        }
    }
}
