//! `F_0 = h H + b R x.v + c R^2 v.z - b J_R v.G(x)` for quadratic
//! confinement plus singular pair interactions, where
//! `G^i(x) = sum_{j != i} (x^i - x^j)/|x^i - x^j|`.

use serde::{Deserialize, Serialize};

use super::jet::Jet;
use super::PhaseJets;
use crate::error::{Error, Result};
use crate::potentials::PotentialKind;
use crate::processes::{Family, ProcessSpec, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JrKind {
    /// `J_R = 1` (with `R = 1`, `c = 0`), used when `gamma > 0`.
    Constant1,
    /// `J_R^2 = R^6|z|^2 + |v|^2 + 2V + R^2`, used when `gamma = 0`.
    EnergyWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlSingularParams {
    pub delta: f64,
    pub h_frak: f64,
    pub b_frak: f64,
    pub c_frak: f64,
    #[serde(rename = "R_frak")]
    pub r_frak: f64,
    pub jr_kind: JrKind,
    /// `sup |G| <= sqrt(N) (N - 1)`.
    #[serde(rename = "C_G")]
    pub c_g: f64,
    pub a0: f64,
    /// Lower bound of `V`: `floor + (#pairs) min V_I`.
    pub v_base: f64,
    pub shift: f64,
    /// Leading coefficients of the upper bound on `LF + delta alpha |grad_z F|^2`
    /// in the `gamma = 0` case (all negative when admissible).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_z: Option<f64>,
}

struct Shape {
    a0: f64,
    n: usize,
    b_int: f64,
    beta_int: f64,
    v_base: f64,
}

fn shape(proc: &ProcessSpec) -> Result<Shape> {
    let pot = &proc.potential;
    let bad = || {
        Error::Infeasible(
            "GL-singular construction needs quadratic confinement plus pair interactions without perturbation"
                .into(),
        )
    };
    if pot.kind != PotentialKind::SingularComposite || pot.perturbation.is_some() {
        return Err(bad());
    }
    let inter = pot.interaction.as_ref().ok_or_else(bad)?;
    let n = pot.n_particles;
    let pairs = (n * (n - 1) / 2) as f64;
    let m = if n > 1 { inter.pair_minimum(pot.dim_d) } else { 0.0 };
    Ok(Shape {
        a0: pot.quadratic_a0,
        n,
        b_int: inter.b,
        beta_int: inter.beta,
        v_base: pot.floor + pairs * m,
    })
}

impl GlSingularParams {
    pub fn select(proc: &ProcessSpec, delta: f64) -> Result<Self> {
        if proc.family != Family::GeneralizedLangevin {
            return Err(Error::Infeasible(
                "GL-singular construction needs the generalized Langevin process".into(),
            ));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Infeasible(format!("delta must lie in (0, 1], got {delta}")));
        }
        let sh = shape(proc)?;
        let nn = sh.n as f64;
        let c_g = nn.sqrt() * (nn - 1.0);
        let h = (0.2 / delta).min(0.3);
        let mut p = GlSingularParams {
            delta,
            h_frak: h,
            b_frak: h / 2.0,
            c_frak: 0.0,
            r_frak: 1.0,
            jr_kind: JrKind::Constant1,
            c_g,
            a0: sh.a0,
            v_base: sh.v_base,
            shift: 0.0,
            c_x: None,
            c_v: None,
            c_z: None,
        };
        if proc.gamma == 0.0 {
            p.jr_kind = JrKind::EnergyWeighted;
            let big_a = sh.b_int * sh.beta_int + 1.0;
            let c_star = sh.b_int * sh.beta_int / 2.0;
            p.r_frak = 1.1 * (2.0 * big_a / c_star).max(1.0 / proc.lambda_c);
        }
        let mut ok = false;
        for _ in 0..200 {
            if p.gamma_zero() {
                p.c_frak = p.b_frak;
                p.fill_coefficients(proc);
            }
            if p.condition_violations(proc).is_empty() {
                ok = true;
                break;
            }
            p.b_frak *= 0.5;
        }
        if !ok {
            return Err(Error::Infeasible(format!(
                "no b > 0 satisfies: {}",
                p.condition_violations(proc).join("; ")
            )));
        }
        p.shift = 1.0 - p.inf_f0_lower_bound();
        Ok(p)
    }

    fn gamma_zero(&self) -> bool {
        self.jr_kind == JrKind::EnergyWeighted
    }

    /// `c_x, c_v, c_z` with `eps_0 = eps_1 = b^{-1/2}`, `eps_2 = eps_3 = b^{1/2}`
    /// and `M_inf <= 1/(2 R^3)` (from `J_R^2 >= R^6|z|^2 + |v|^2 >= 2R^3|v||z|`).
    fn fill_coefficients(&mut self, proc: &ProcessSpec) {
        let (h, b, r, c, a0, d) = (
            self.h_frak,
            self.b_frak,
            self.r_frak,
            self.c_g,
            self.a0,
            self.delta,
        );
        let (l, al) = (proc.lambda_c, proc.alpha_c);
        let sb = b.sqrt();
        let b32 = b * sb;
        let m_inf = 1.0 / (2.0 * r.powi(3));
        let r12 = r.powi(12);
        self.c_z = Some(
            -al * h + 3.0 * d * al * h * h
                + b * r * r * l
                + al * r * r * sb / 2.0
                + l * r * sb / 2.0
                + l * b * r.powi(3) * c
                + c * l * a0.sqrt() * sb / 2.0
                + c * l * sb / 2.0
                + r * r * a0 * sb / 2.0
                + 3.0 * d * al * b * b * r12 * c * c * m_inf / 2.0
                + l * c * b / 2f64.sqrt(),
        );
        self.c_v = Some(
            -b * r * (l * r - 1.0)
                + al * r * r * b32 / 2.0
                + c * l * b32 / 2.0
                + 3.0 * d * al * b * b * (r.powi(4) + c * c * r12 * m_inf / 2.0),
        );
        self.c_x = Some(-a0 * b * r + c * l * a0.sqrt() * b32 / 2.0 + r * l * b32 / 2.0 + r * r * a0 * b32 / 2.0);
    }

    fn cond_h1(&self) -> f64 {
        let (h, b, r, c) = (self.h_frak, self.b_frak, self.r_frak, self.c_g);
        self.a0 / 2.0 * (h - b * c / 2f64.sqrt()) - b * r / 2.0
    }

    fn cond_h1_2(&self) -> (f64, f64) {
        let (h, b, r, c) = (self.h_frak, self.b_frak, self.r_frak, self.c_g);
        (
            h / 2.0 - b * r * r / 2.0 - b * r.powi(3) * c / 2.0,
            h / 2.0 - b * r / 2.0 - b * r * r / 2.0 - b * c * (r.powi(3) + 2f64.sqrt() + 2.0) / 2.0,
        )
    }

    fn condition_violations(&self, proc: &ProcessSpec) -> Vec<String> {
        let mut out = Vec::new();
        let (h, b, d, a0) = (self.h_frak, self.b_frak, self.delta, self.a0);
        let (g, l, al) = (proc.gamma, proc.lambda_c, proc.alpha_c);
        if !(b > 0.0) {
            out.push("b > 0".into());
        }
        if !self.gamma_zero() {
            if !(h > b.max(b / a0)) {
                out.push("gamma > 0 requires h > max(b, b/a0)".into());
            }
            if self.c_frak != 0.0 || self.r_frak != 1.0 {
                out.push("gamma > 0 requires c = 0 and R = 1".into());
            }
            if !(g * h - 3.0 * d * g * h * h > 0.0) {
                out.push("gamma > 0 requires gamma h - 3 delta gamma h^2 > 0".into());
            }
            if !(al * h - d * al * h * h > 0.0) {
                out.push("gamma > 0 requires alpha h - delta alpha h^2 > 0".into());
            }
            if !(a0 * b - 2.0 * b.powf(1.5) - 3.0 * d * g * b * b > 0.0) {
                out.push("gamma > 0 requires a0 b - 2 b^1.5 - 3 delta gamma b^2 > 0".into());
            }
            if !(al * h - d * al * h * h - l * l * b.sqrt() / 4.0 > 0.0) {
                out.push("gamma > 0 requires alpha h - delta alpha h^2 - lambda^2 b^0.5/4 > 0".into());
            }
            if !(g * h - b - 3.0 * d * g * h * h - g * g * b.sqrt() / 4.0 > 0.0) {
                out.push("gamma > 0 requires gamma h - b - 3 delta gamma h^2 - gamma^2 b^0.5/4 > 0".into());
            }
        } else {
            let r = self.r_frak;
            if self.c_frak != b {
                out.push("gamma = 0 requires c = b".into());
            }
            if !(-al * h + 3.0 * d * al * h * h < 0.0) {
                out.push("gamma = 0 requires -alpha h + 3 delta alpha h^2 < 0".into());
            }
            if !(l * r - 1.0 > 0.0) {
                out.push("gamma = 0 requires lambda R > 1".into());
            }
            if !(self.cond_h1() > 0.0) {
                out.push("feasibility (a0/2)(h - b C_G/sqrt 2) - b R/2 > 0 fails".into());
            }
            let (q1, q2) = self.cond_h1_2();
            if !(q1 > 0.0 && q2 > 0.0) {
                out.push("feasibility of the |z|^2 and |v|^2 coefficients of F_0 fails".into());
            }
            for (name, c) in [("c_x", self.c_x), ("c_v", self.c_v), ("c_z", self.c_z)] {
                if !c.is_some_and(|c| c < 0.0) {
                    out.push(format!("gamma = 0 requires {name} < 0"));
                }
            }
        }
        out
    }

    /// Closed-form lower bound of `F_0`.
    fn inf_f0_lower_bound(&self) -> f64 {
        let (h, b, c) = (self.h_frak, self.b_frak, self.c_g);
        if !self.gamma_zero() {
            // h V - b|x||v| + h|v|^2/2 - b C|v|, minimized over |x| then |v|.
            let q = h / 2.0 - b * b / (2.0 * h * self.a0);
            h * self.v_base - (b * c).powi(2) / (4.0 * q)
        } else {
            let (_, q) = self.cond_h1_2();
            let r = self.r_frak;
            (h - b * c / 2f64.sqrt()) * self.v_base - (b * r * c).powi(2) / (4.0 * q)
        }
    }

    pub fn check(&self, proc: &ProcessSpec) -> Vec<String> {
        if proc.family != Family::GeneralizedLangevin {
            return vec!["GL-singular parameters need the generalized Langevin process".into()];
        }
        let sh = match shape(proc) {
            Ok(s) => s,
            Err(e) => return vec![e.to_string()],
        };
        let mut out = Vec::new();
        if (sh.a0 - self.a0).abs() > 1e-12 || (sh.v_base - self.v_base).abs() > 1e-9 {
            out.push("GL-singular parameters were built for a different potential".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            out.push("delta must lie in (0, 1]".into());
        }
        if (proc.gamma == 0.0) != self.gamma_zero() {
            out.push("J_R kind does not match the friction (EnergyWeighted iff gamma = 0)".into());
        }
        let mut fresh = self.clone();
        if fresh.gamma_zero() {
            fresh.fill_coefficients(proc);
        }
        out.extend(fresh.condition_violations(proc));
        if !self.shift.is_finite() {
            out.push("shift is not finite".into());
        }
        out
    }

    /// `G(x)` and its Jacobian (row-major, `dN x dN`).
    pub fn g_field(&self, proc: &ProcessSpec, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pot = &proc.potential;
        let (d, np) = (pot.dim_d, pot.n_particles);
        let m = d * np;
        let mut g = vec![0.0; m];
        let mut jac = vec![0.0; m * m];
        let mut u = vec![0.0; d];
        for i in 0..np {
            for j in i + 1..np {
                let mut r2 = 0.0;
                for k in 0..d {
                    u[k] = x[i * d + k] - x[j * d + k];
                    r2 += u[k] * u[k];
                }
                let r = r2.sqrt();
                for k in 0..d {
                    u[k] /= r;
                    g[i * d + k] += u[k];
                    g[j * d + k] -= u[k];
                }
                for a in 0..d {
                    for b in 0..d {
                        let p = (if a == b { 1.0 } else { 0.0 } - u[a] * u[b]) / r;
                        jac[(i * d + a) * m + i * d + b] += p;
                        jac[(i * d + a) * m + j * d + b] -= p;
                        jac[(j * d + a) * m + i * d + b] -= p;
                        jac[(j * d + a) * m + j * d + b] += p;
                    }
                }
            }
        }
        (g, jac)
    }

    pub fn f_jet(&self, proc: &ProcessSpec, s: &State) -> Result<Jet> {
        let pj = PhaseJets::new(proc, s)?;
        let c = &pj.c;
        let n = c.n;
        let (h, b, r) = (self.h_frak, self.b_frak, self.r_frak);
        let mut f = pj.hamiltonian().scale(h);
        f = &f + &Jet::dot(&c.x, &c.v).scale(b * r);
        if self.c_frak != 0.0 {
            f = &f + &Jet::dot(&c.v, &c.aux).scale(self.c_frak * r * r);
        }
        if proc.potential.n_particles > 1 {
            let (g, jac) = self.g_field(proc, &s.x);
            let gj: Vec<Jet> = (0..n).map(|i| c.of_x(g[i], &jac[i * n..(i + 1) * n])).collect();
            let vg = Jet::dot(&c.v, &gj);
            let term = match self.jr_kind {
                JrKind::Constant1 => vg,
                JrKind::EnergyWeighted => {
                    let z2 = Jet::dot(&c.aux, &c.aux).scale(r.powi(6));
                    let v2 = Jet::dot(&c.v, &c.v);
                    let jr2 = &(&z2 + &v2) + &pj.v.scale(2.0);
                    &jr2.add_const(r * r).sqrt() * &vg
                }
            };
            f = &f - &term.scale(b);
        }
        Ok(f.add_const(self.shift))
    }

    /// `F <= c H` from `|x|^2 <= 2(H + |V_base|)/a0`, `J_R^2 <= (2R^6 + 4 + R^2) H`
    /// and `H >= 1`.
    pub fn upper_constant(&self, proc: &ProcessSpec) -> f64 {
        let _ = proc;
        let (h, b, c, r) = (self.h_frak, self.b_frak, self.c_frak, self.r_frak);
        let jr2 = match self.jr_kind {
            JrKind::Constant1 => 1.0,
            JrKind::EnergyWeighted => 2.0 * r.powi(6) + 4.0 + r * r,
        };
        h + b * r * ((1.0 + self.v_base.abs()) / self.a0 + 1.0)
            + c * r * r
            + b * self.c_g * (2.0 * jr2).sqrt()
            + self.shift.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{InteractionSpec, PotentialSpec};

    fn lj(gamma: f64) -> ProcessSpec {
        let pot = PotentialSpec::singular(2, 2, 1.0, InteractionSpec::lennard_jones(1.0, 1.0), None);
        ProcessSpec::generalized(gamma, 1.0, 1.0, pot)
    }

    #[test]
    fn gamma_zero_selection_is_feasible() {
        let pr = lj(0.0);
        let p = GlSingularParams::select(&pr, 1.0).unwrap();
        assert_eq!(p.jr_kind, JrKind::EnergyWeighted);
        assert_eq!(p.c_frak, p.b_frak);
        assert!(p.r_frak * pr.lambda_c > 1.0);
        assert!(p.check(&pr).is_empty());
        assert!((p.c_g - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gamma_positive_selection_uses_unit_jr() {
        let pr = lj(1.0);
        let p = GlSingularParams::select(&pr, 0.5).unwrap();
        assert_eq!(p.jr_kind, JrKind::Constant1);
        assert_eq!((p.c_frak, p.r_frak), (0.0, 1.0));
        assert!(p.check(&pr).is_empty());
    }

    #[test]
    fn g_field_is_unit_direction_for_two_particles() {
        let pr = lj(1.0);
        let p = GlSingularParams::select(&pr, 1.0).unwrap();
        let (g, _) = p.g_field(&pr, &[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(g, vec![1.0, 0.0, -1.0, 0.0]);
    }
}
