//! `F_0 = h* H + Psi_0 + Psi_1 + Psi_2 + eps_Phi Phi` for the Nosé-Hoover
//! thermostat.
//!
//! `Psi_0 = delta* f0(y) y^2/2`,
//! `Psi_1 = alpha* g1 sqrt(y^2+1) v.grad V/|grad V|^2`,
//! `Psi_2 = g2 sum_k Frak(s_k)` with
//! `s_k = sqrt(u/(2 gamma)) v_k - d_k V/sqrt(2 gamma u)`, `u = |y + gamma|`,
//! and `Phi = h(V) v.grad V/|grad V|^zeta - h0(y) y^2`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cutoffs::{build_cutoffs, CutoffFamily};
use super::dawson::{dawson_max, frak_f};
use super::jet::Jet;
use super::PhaseJets;
use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::processes::{hamiltonian, Family, ProcessSpec, State};
use crate::rng;

/// Safety factor on sampled suprema.
const SUP_FACTOR: f64 = 1.05;
/// Search target for `max |Psi|/(eps* H)`, leaving room for unseen states.
const PSI_TARGET: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NhParams {
    pub delta: f64,
    pub zeta: f64,
    pub h_star: f64,
    pub delta_star: f64,
    pub alpha_star: f64,
    pub eps_star: f64,
    pub k_star: f64,
    pub y_star: f64,
    pub p_star: f64,
    pub u_star: f64,
    pub eps_phi: f64,
    #[serde(rename = "R_1")]
    pub r1: f64,
    #[serde(rename = "M")]
    pub m_hess: f64,
    pub c_v_frak: f64,
    pub shift: f64,
    pub dawson_max: f64,
}

/// Manual settings for [`NhParams::select`]; anything absent is chosen
/// automatically. `*_frac` values are fractions of `1/(8 D_m^2)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NhOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_star_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_star_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_star_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
}

/// Values of the separate pieces of `F_0` at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NhParts {
    pub h: f64,
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub phi: f64,
    pub grad_v_phi: f64,
}

impl NhParts {
    pub fn psi(&self) -> f64 {
        self.psi0 + self.psi1 + self.psi2
    }
}

struct Terms {
    h: Jet,
    psi0: Jet,
    psi1: Option<Jet>,
    psi2: Option<Jet>,
    phi: Jet,
}

fn spectral_norm(h: &[f64], n: usize) -> f64 {
    if n == 1 {
        return h[0].abs();
    }
    let m = DMatrix::from_row_slice(n, n, h);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, e| a.max(e.abs()))
}

/// Random point with `|x| <= r_max`, radius uniform.
fn radial_point<R: Rng>(r: &mut R, n: usize, r_max: f64) -> Vec<f64> {
    let mut dir = vec![0.0; n];
    rng::fill_normal(r, &mut dir);
    let nd = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
    let rad = r_max * r.random::<f64>();
    dir.iter().map(|a| a * rad / nd).collect()
}

/// `(R_1, M, c_V)` by sampling `V` along random rays.
fn potential_constants(pot: &PotentialSpec, zeta: f64, r1_fixed: Option<f64>, seed: u64) -> Result<(f64, f64, f64)> {
    let n = pot.dim();
    let far = pot.sublevel_radius(1e6).unwrap_or(30.0).max(1.0);
    let mut r = rng::stream(seed, "lyapunov/nh/potential", 0);
    let samples = 60_000;
    let mut pts = Vec::with_capacity(samples);
    for i in 0..samples {
        // Half the budget near the origin, where |grad V| is small.
        let rm = if i % 2 == 0 { far.min(3.0) } else { far };
        let x = radial_point(&mut r, n, rm);
        if !pot.in_domain(&x) {
            continue;
        }
        let g = pot.gradient(&x)?;
        let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let vx = pot.value(&x);
        pts.push((x, vx, gn));
    }
    let r1 = match r1_fixed {
        Some(v) => v,
        None => {
            let bad = pts
                .iter()
                .filter(|p| p.2 < 1.0)
                .fold(f64::NEG_INFINITY, |a, p| a.max(p.1));
            (1.0 + SUP_FACTOR * bad).max(2.0)
        }
    };
    if pts.iter().any(|p| p.1 >= r1 - 1.0 && p.2 < 1.0) {
        return Err(Error::Infeasible(format!(
            "|grad V| >= 1 fails somewhere on V >= R_1 - 1 = {}",
            r1 - 1.0
        )));
    }
    let mut m: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for (x, v, gn) in &pts {
        if *v >= r1 - 1.0 {
            let hc = super::cutoffs::Cutoff::Rising { lo: r1 - 1.0, hi: r1 }.value(*v);
            let hs = spectral_norm(&pot.hessian(x)?, n);
            m = m.max(hc * hs / gn.powf(zeta));
            if *v <= r1 {
                edge = edge.max(gn.powf(2.0 - zeta));
            }
        }
    }
    let m = SUP_FACTOR * m;
    Ok((r1, m, 3.0 * m + 2.0 * SUP_FACTOR * edge))
}

impl NhParams {
    pub fn select(
        proc: &ProcessSpec,
        delta: f64,
        zeta: Option<f64>,
        ov: &NhOverrides,
        seed: u64,
    ) -> Result<Self> {
        if proc.family != Family::NoseHoover {
            return Err(Error::Infeasible("NH construction needs the Nosé-Hoover process".into()));
        }
        if !(delta > 0.5 && delta <= 1.0) {
            return Err(Error::Infeasible(format!(
                "Nosé-Hoover requires delta in (1/2, 1], got delta = {delta}"
            )));
        }
        let zeta = zeta.unwrap_or(1.25);
        if !(zeta > 1.0 && zeta < 2.0) {
            return Err(Error::Infeasible(format!("zeta must lie in (1, 2), got {zeta}")));
        }
        let g = proc.gamma;
        let dn = proc.dim() as f64;
        let dm = dawson_max();
        let t = 1.0 / (8.0 * dm * dm);
        let h_star = ov.h_star_frac.unwrap_or(0.4) * t;
        let delta_star = ov.delta_star_frac.unwrap_or(0.25) * t;
        let eps_star = ov.eps_star_frac.unwrap_or(0.3) * t;
        let alpha_star = ov.alpha_star.unwrap_or(1.05 * dn / (4.0 * dm * dm));
        let p_star = ov.p_star.unwrap_or(1.25 * dn / (2.0 * dm * dm * delta_star));
        let (r1, m_hess, c_v_frak) = potential_constants(&proc.potential, zeta, ov.r1, seed)?;
        let mut p = NhParams {
            delta,
            zeta,
            h_star,
            delta_star,
            alpha_star,
            eps_star,
            k_star: ov.k_star.unwrap_or(2.0),
            y_star: ov.y_star.unwrap_or(3.0 * g + 1.5),
            p_star,
            u_star: ov.u_star.unwrap_or(1.0),
            eps_phi: 0.0,
            r1,
            m_hess,
            c_v_frak,
            shift: 0.0,
            dawson_max: dm,
        };
        p.eps_phi = ov.eps_phi.unwrap_or(0.5 * p.eps_phi_bound(proc));
        p.shift = 1.0 - p.inf_f0_lower_bound();
        if ov.u_star.is_none() {
            let mut ok = false;
            for _ in 0..60 {
                let states = p.gate_states(proc, 4000, false, seed)?;
                if p.psi_ratio(proc, &states)? <= PSI_TARGET {
                    ok = true;
                    break;
                }
                p.u_star *= 2.0;
            }
            if !ok {
                return Err(Error::Infeasible("no u* makes |Psi_1| <= eps* H".into()));
            }
        }
        if ov.y_star.is_none() {
            let mut ok = false;
            for _ in 0..400 {
                let states = p.gate_states(proc, 4000, true, seed)?;
                if p.psi_ratio(proc, &states)? <= PSI_TARGET {
                    ok = true;
                    break;
                }
                p.y_star += 0.5;
            }
            if !ok {
                return Err(Error::Infeasible("no y* makes |Psi_2| <= eps* H".into()));
            }
        }
        let errs = p.check(proc);
        if !errs.is_empty() {
            return Err(Error::Infeasible(errs.join("; ")));
        }
        Ok(p)
    }

    /// The constant `K` with `2 gamma |grad_v L||grad_v Phi| <= K(|v| + g2|y+gamma|^{1/2} + 1)`.
    fn k_frak(&self, proc: &ProcessSpec) -> f64 {
        let dn = proc.dim() as f64;
        let g = proc.gamma;
        2.0 * g
            * self
                .h_star
                .max(dn / (2.0 * self.dawson_max * (2.0 * g).sqrt()))
                .max((dn + 1.0) * self.eps_star)
    }

    /// Strict upper bound on `eps_Phi` from the smallness conditions.
    fn eps_phi_bound(&self, proc: &ProcessSpec) -> f64 {
        let dn = proc.dim() as f64;
        let t = 1.0 / (8.0 * self.dawson_max.powi(2));
        let s = self.h_star + self.delta_star + self.eps_star;
        let kk = 1.0 + self.k_frak(proc);
        [
            (self.h_star - self.eps_star) / 2.0,
            proc.gamma * self.h_star * (1.0 - self.h_star) / (2.0 * (self.c_v_frak + 3.0)),
            self.h_star * dn / (2.0 * dn + 1.0),
            self.delta_star / 4.0,
            (t - s) * dn / kk,
            (self.delta_star * self.p_star / 4.0 - s * dn) / kk,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    /// `inf F_0 >= (h* - eps*) - eps_Phi^2/(2(h* - eps*))`, from
    /// `F_0 >= (h* - eps*) H - eps_Phi|v| - eps_Phi y^2` and `V >= 1`.
    fn inf_f0_lower_bound(&self) -> f64 {
        let q = self.h_star - self.eps_star;
        q - self.eps_phi * self.eps_phi / (2.0 * q)
    }

    pub fn cutoffs(&self) -> CutoffFamily {
        build_cutoffs(self.k_star, self.y_star, self.r1).expect("validated gates")
    }

    pub fn check(&self, proc: &ProcessSpec) -> Vec<String> {
        let mut out = Vec::new();
        if proc.family != Family::NoseHoover {
            return vec!["NH parameters need the Nosé-Hoover process".into()];
        }
        let dn = proc.dim() as f64;
        let dm = dawson_max();
        let t = 1.0 / (8.0 * dm * dm);
        let g = proc.gamma;
        if !(g > 0.0) {
            out.push("Nosé-Hoover construction needs gamma > 0".into());
        }
        if (self.dawson_max - dm).abs() > 1e-12 {
            out.push("dawson_max does not match sup D".into());
        }
        if !(self.delta > 0.5 && self.delta <= 1.0) {
            out.push("Nosé-Hoover requires delta in (1/2, 1]".into());
        }
        if !(self.zeta > 1.0 && self.zeta < 2.0) {
            out.push("zeta must lie in (1, 2)".into());
        }
        if !(self.h_star > 0.0 && self.h_star < t) {
            out.push(format!("h* < 1/(8 D_m^2) = {t:.6} fails"));
        }
        let s = self.h_star + self.delta_star + self.eps_star;
        if !(s < t) {
            out.push("h* + delta* + eps* < 1/(8 D_m^2) fails".into());
        }
        if !(self.eps_star >= self.delta_star && self.delta_star > 0.0) {
            out.push("0 < delta* <= eps* fails".into());
        }
        if !(self.eps_star < self.h_star) {
            out.push("eps* < h* fails".into());
        }
        if !(self.y_star > 3.0 * g + 1.0) {
            out.push(format!("y* > 3 gamma + 1 = {} fails", 3.0 * g + 1.0));
        }
        if !(self.alpha_star > dn / (4.0 * dm * dm)) {
            out.push("alpha* > dN/(4 D_m^2) fails".into());
        }
        if !(self.delta_star * self.p_star / 4.0 > dn / (8.0 * dm * dm)) {
            out.push("delta* p*/4 > dN/(8 D_m^2) fails".into());
        }
        if !(self.k_star > 0.0 && self.p_star > 0.0 && self.u_star > 0.0) {
            out.push("k*, p*, u* must be positive".into());
        }
        if !(self.eps_phi > 0.0 && self.eps_phi < self.eps_phi_bound(proc)) {
            out.push(format!(
                "eps_Phi must lie in (0, {:.3e}) for the smallness conditions",
                self.eps_phi_bound(proc)
            ));
        }
        if !(self.r1 > 1.0) {
            out.push("R_1 > 1 fails".into());
        }
        if !self.shift.is_finite() {
            out.push("shift is not finite".into());
        }
        out
    }

    fn terms(&self, proc: &ProcessSpec, s: &State) -> Result<Terms> {
        let pj = PhaseJets::new(proc, s)?;
        let c = &pj.c;
        let cut = self.cutoffs();
        let g = proc.gamma;
        let y = &c.aux[0];
        let yv = y.val;
        let y2 = y.square();
        let yy1 = y2.add_const(1.0);
        let syy1 = yy1.sqrt();
        let v2 = Jet::dot(&c.v, &c.v);
        let gs = Jet::dot(&pj.dv, &pj.dv);
        let theta = v2.div(&syy1.scale(self.p_star));
        let ups = gs.div(&yy1.scale(self.u_star));
        let vdv = Jet::dot(&c.v, &pj.dv);

        let psi0 = (&y.map(cut.f0.eval(yv)) * &y2).scale(0.5 * self.delta_star);

        let f2v = cut.f2.value(theta.val);
        let psi1 = if cut.f1.value(yv) != 0.0 && f2v != 0.0 && cut.f3.value(ups.val) != 0.0 {
            let g1 = &(&y.map(cut.f1.eval(yv)) * &theta.map(cut.f2.eval(theta.val)))
                * &ups.map(cut.f3.eval(ups.val));
            Some((&(&g1 * &syy1) * &vdv.div(&gs)).scale(self.alpha_star))
        } else {
            None
        };

        let psi2 = if cut.h1.value(yv) != 0.0 && f2v != 0.0 && cut.h3.value(ups.val) != 0.0 {
            let g2 = &(&y.map(cut.h1.eval(yv)) * &theta.map(cut.f2.eval(theta.val)))
                * &ups.map(cut.h3.eval(ups.val));
            let u = y.add_const(g).scale(-1.0);
            let a = u.scale(1.0 / (2.0 * g)).sqrt();
            let b = u.scale(2.0 * g).sqrt().recip();
            let parts: Vec<Jet> = (0..c.n)
                .map(|k| {
                    let sk = &(&c.v[k] * &a) - &(&pj.dv[k] * &b);
                    sk.map(frak_f(sk.val))
                })
                .collect();
            Some(&g2 * &Jet::sum(&parts))
        } else {
            None
        };

        let hv = cut.h.eval(pj.v.val);
        let mut phi = (&y.map(cut.h0.eval(yv)) * &y2).scale(-1.0);
        if hv.0 != 0.0 || hv.1 != 0.0 {
            let t1 = &pj.v.map(hv) * &vdv.div(&gs.powf(0.5 * self.zeta));
            phi = &phi + &t1;
        }
        Ok(Terms {
            h: pj.hamiltonian(),
            psi0,
            psi1,
            psi2,
            phi,
        })
    }

    pub fn f_jet(&self, proc: &ProcessSpec, s: &State) -> Result<Jet> {
        let t = self.terms(proc, s)?;
        let mut f = &t.h.scale(self.h_star) + &t.psi0;
        if let Some(p) = &t.psi1 {
            f = &f + p;
        }
        if let Some(p) = &t.psi2 {
            f = &f + p;
        }
        f = &f + &t.phi.scale(self.eps_phi);
        Ok(f.add_const(self.shift))
    }

    pub fn parts(&self, proc: &ProcessSpec, s: &State) -> Result<NhParts> {
        let t = self.terms(proc, s)?;
        let gv = t.phi.grad_v();
        Ok(NhParts {
            h: t.h.val,
            psi0: t.psi0.val,
            psi1: t.psi1.map_or(0.0, |j| j.val),
            psi2: t.psi2.map_or(0.0, |j| j.val),
            phi: t.phi.val,
            grad_v_phi: gv.iter().map(|a| a * a).sum::<f64>().sqrt(),
        })
    }

    /// `(name, L term, |grad_v term|)` for each piece of `F_0`.
    pub fn term_generators(&self, proc: &ProcessSpec, s: &State) -> Result<Vec<(&'static str, f64, f64)>> {
        let t = self.terms(proc, s)?;
        let mut out = Vec::new();
        let mut push = |name: &'static str, j: &Jet| -> Result<()> {
            let lf = proc.generator(s, &j.to_derivs())?;
            let gv = j.grad_v().iter().map(|a| a * a).sum::<f64>().sqrt();
            out.push((name, lf, gv));
            Ok(())
        };
        push("h*H", &t.h.scale(self.h_star))?;
        push("psi0", &t.psi0)?;
        if let Some(p) = &t.psi1 {
            push("psi1", p)?;
        }
        if let Some(p) = &t.psi2 {
            push("psi2", p)?;
        }
        push("eps_phi*phi", &t.phi.scale(self.eps_phi))?;
        Ok(out)
    }

    /// `max |Psi| / (eps* H)` over `states`.
    pub fn psi_ratio(&self, proc: &ProcessSpec, states: &[State]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in states {
            let p = self.parts(proc, s)?;
            worst = worst.max(p.psi().abs() / (self.eps_star * p.h));
        }
        Ok(worst)
    }

    /// `F <= c H` from `|Psi| <= eps* H`, `|Phi| <= |v| + y^2 <= 3H` and `H >= 1`.
    pub fn upper_constant(&self) -> f64 {
        self.h_star + self.eps_star + 3.0 * self.eps_phi + self.shift.max(0.0)
    }

    /// States concentrated where the gates of `Psi_1` (or, with `deep`,
    /// `Psi_2`) open: `|v|^2 <~ 2 p* sqrt(y^2+1)` and `Upsilon` near its
    /// gate values.
    pub fn gate_states(&self, proc: &ProcessSpec, n: usize, deep: bool, seed: u64) -> Result<Vec<State>> {
        let dim = proc.dim();
        let pot = &proc.potential;
        let mut r = rng::stream(seed, if deep { "lyapunov/nh/gates2" } else { "lyapunov/nh/gates1" }, 0);
        let mut out = Vec::with_capacity(n);
        let mut guard = 0usize;
        while out.len() < n {
            guard += 1;
            if guard > 100 * n {
                return Err(Error::Sampling("could not place states in the Psi gates".into()));
            }
            let y = if deep {
                -self.y_star - 6.0 * r.random::<f64>()
            } else {
                -self.y_star - 3.0 + (self.y_star + self.k_star + 4.0) * r.random::<f64>()
            };
            let yy1 = y * y + 1.0;
            let vmax = 1.5 * (2.0 * self.p_star).sqrt() * yy1.powf(0.25);
            let mut v = vec![0.0; dim];
            rng::fill_normal(&mut r, &mut v);
            let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
            let vr = vmax * r.random::<f64>().powf(1.0 / dim as f64);
            v.iter_mut().for_each(|a| *a *= vr / vn);
            let ups = if deep { 5.0 * r.random::<f64>() } else { 0.5 + 3.0 * r.random::<f64>() };
            let target = ups * self.u_star * yy1;
            let mut dir = vec![0.0; dim];
            rng::fill_normal(&mut r, &mut dir);
            let dn = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|a| *a /= dn);
            let Some(x) = ray_with_gradient(pot, &dir, target)? else {
                continue;
            };
            let s = State::new(x, v, vec![y]);
            if hamiltonian(proc, &s)?.is_finite() {
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// A point `t dir` with `|grad V|^2` close to `target`, by bisection on `t`.
fn ray_with_gradient(pot: &PotentialSpec, dir: &[f64], target: f64) -> Result<Option<Vec<f64>>> {
    let at = |t: f64| -> Result<f64> {
        let x: Vec<f64> = dir.iter().map(|a| a * t).collect();
        if !pot.in_domain(&x) {
            return Ok(f64::NAN);
        }
        Ok(pot.gradient(&x)?.iter().map(|a| a * a).sum())
    };
    let mut hi = 1.0;
    let mut n = 0;
    while at(hi)? < target {
        hi *= 2.0;
        n += 1;
        if n > 60 {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g = at(mid)?;
        if g.is_nan() {
            return Ok(None);
        }
        if g < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(dir.iter().map(|a| a * hi).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nh() -> ProcessSpec {
        ProcessSpec::new(Family::NoseHoover, 1.0, PotentialSpec::poly(1, 4.0, 1.0, 1.0))
    }

    #[test]
    fn rejects_small_delta() {
        let e = NhParams::select(&nh(), 0.4, None, &NhOverrides::default(), 0).unwrap_err();
        assert!(e.to_string().contains("(1/2, 1]"), "{e}");
    }

    #[test]
    fn quiet_region_reduces_to_psi0() {
        let pr = nh();
        let p = NhParams::select(&pr, 1.0, None, &NhOverrides::default(), 1).unwrap();
        // y in [-1, 0], tiny v, V below R_1 - 1.
        let s = State::new(vec![0.2], vec![0.01], vec![-0.5]);
        let parts = p.parts(&pr, &s).unwrap();
        assert_eq!(parts.psi1, 0.0);
        assert_eq!(parts.psi2, 0.0);
        let f = p.f_jet(&pr, &s).unwrap().val;
        let h = parts.h;
        let y: f64 = -0.5;
        let f0y = super::super::cutoffs::Cutoff::Falling { lo: -1.0, hi: 0.0 }.value(y);
        let expect = p.h_star * h + p.delta_star * f0y * y * y / 2.0 + p.shift;
        assert!((f - expect).abs() < 1e-12, "{f} vs {expect}");
    }
}
