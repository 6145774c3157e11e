//! Kinetic Langevin, generalized Langevin and Nosé-Hoover dynamics.
//!
//! All three share positions `x` and velocities `v` in `R^{dN}`; the
//! auxiliary block is `z ∈ R^{dN}` (generalized Langevin), `y ∈ R`
//! (Nosé-Hoover) or empty (kinetic Langevin). Units are nondimensional with
//! unit mass and unit temperature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    KineticLangevin,
    GeneralizedLangevin,
    NoseHoover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub family: Family,
    pub gamma: f64,
    #[serde(default = "one")]
    pub lambda_c: f64,
    #[serde(default = "one")]
    pub alpha_c: f64,
    #[serde(skip)]
    pub potential: PotentialSpec,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub aux: Vec<f64>,
}

impl State {
    pub fn new(x: Vec<f64>, v: Vec<f64>, aux: Vec<f64>) -> Self {
        State { x, v, aux }
    }

    pub fn zeros(n: usize, n_aux: usize) -> Self {
        State {
            x: vec![0.0; n],
            v: vec![0.0; n],
            aux: vec![0.0; n_aux],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.v)
            .chain(&self.aux)
            .all(|a| a.is_finite())
    }

    /// Flattened `(x, v, aux)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.aux);
        out
    }

    pub fn from_slice(flat: &[f64], n: usize) -> Self {
        State {
            x: flat[..n].to_vec(),
            v: flat[n..2 * n].to_vec(),
            aux: flat[2 * n..].to_vec(),
        }
    }
}

/// Amplitudes of the independent Brownian increments on each block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLayout {
    pub x: f64,
    pub v: f64,
    pub aux: f64,
}

/// Derivatives of a scalar observable at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub grad_aux: Vec<f64>,
    /// Laplacian restricted to the `v` block.
    pub lap_v: f64,
    /// Laplacian restricted to the auxiliary block.
    pub lap_aux: f64,
}

/// An observable supplying its own derivatives.
pub trait Observable {
    fn derivs(&self, s: &State) -> Result<Derivs>;
}

/// Central-difference derivatives of an arbitrary closure.
pub struct FiniteDifference<F: Fn(&State) -> f64> {
    pub f: F,
    pub h: f64,
}

impl<F: Fn(&State) -> f64> Observable for FiniteDifference<F> {
    fn derivs(&self, s: &State) -> Result<Derivs> {
        let n = s.x.len();
        let flat = s.to_vec();
        let f0 = (self.f)(s);
        let mut grad = vec![0.0; flat.len()];
        let mut second = vec![0.0; flat.len()];
        let mut p = flat.clone();
        for i in 0..flat.len() {
            let h = self.h * flat[i].abs().max(1.0);
            p[i] = flat[i] + h;
            let fp = (self.f)(&State::from_slice(&p, n));
            p[i] = flat[i] - h;
            let fm = (self.f)(&State::from_slice(&p, n));
            p[i] = flat[i];
            grad[i] = (fp - fm) / (2.0 * h);
            second[i] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        Ok(Derivs {
            value: f0,
            grad_x: grad[..n].to_vec(),
            grad_v: grad[n..2 * n].to_vec(),
            grad_aux: grad[2 * n..].to_vec(),
            lap_v: second[n..2 * n].iter().sum(),
            lap_aux: second[2 * n..].iter().sum(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl ProcessSpec {
    pub fn new(family: Family, gamma: f64, potential: PotentialSpec) -> Self {
        ProcessSpec {
            family,
            gamma,
            lambda_c: 1.0,
            alpha_c: 1.0,
            potential,
        }
    }

    pub fn generalized(gamma: f64, lambda: f64, alpha: f64, potential: PotentialSpec) -> Self {
        ProcessSpec {
            family: Family::GeneralizedLangevin,
            gamma,
            lambda_c: lambda,
            alpha_c: alpha,
            potential,
        }
    }

    /// Every violated parameter constraint.
    pub fn check(&self) -> Vec<String> {
        let mut errs = self.potential.check();
        match self.family {
            Family::NoseHoover => {
                if !(self.gamma > 0.0) {
                    errs.push("process: Nose-Hoover requires friction gamma > 0".into());
                }
            }
            Family::KineticLangevin => {
                if !(self.gamma > 0.0) {
                    errs.push("process: kinetic Langevin with noise requires gamma > 0".into());
                }
            }
            Family::GeneralizedLangevin => {
                if !(self.gamma >= 0.0) {
                    errs.push("process: generalized Langevin requires gamma >= 0".into());
                }
                if !(self.lambda_c > 0.0) {
                    errs.push("process: generalized Langevin requires coupling lambda > 0".into());
                }
                if !(self.alpha_c > 0.0) {
                    errs.push("process: generalized Langevin requires relaxation alpha > 0".into());
                }
            }
        }
        errs
    }

    /// `dN`.
    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn aux_len(&self) -> usize {
        match self.family {
            Family::KineticLangevin => 0,
            Family::GeneralizedLangevin => self.dim(),
            Family::NoseHoover => 1,
        }
    }

    pub fn check_state(&self, s: &State) -> Result<()> {
        let n = self.dim();
        if s.x.len() != n || s.v.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: if s.x.len() != n { s.x.len() } else { s.v.len() },
            });
        }
        if s.aux.len() != self.aux_len() {
            return Err(Error::Usage(format!(
                "auxiliary block has length {} but {:?} needs {}",
                s.aux.len(),
                self.family,
                self.aux_len()
            )));
        }
        Ok(())
    }

    /// Writes the drift into `out`, using `grad` as scratch for `grad V`.
    pub fn drift_into(&self, s: &State, grad: &mut [f64], out: &mut State) -> Result<()> {
        self.potential.gradient_into(&s.x, grad)?;
        let g = self.gamma;
        let n = s.x.len();
        match self.family {
            Family::KineticLangevin => {
                for i in 0..n {
                    out.x[i] = s.v[i];
                    out.v[i] = -grad[i] - g * s.v[i];
                }
            }
            Family::GeneralizedLangevin => {
                let (l, a) = (self.lambda_c, self.alpha_c);
                for i in 0..n {
                    out.x[i] = s.v[i];
                    out.v[i] = -grad[i] - g * s.v[i] + l * s.aux[i];
                    out.aux[i] = -a * s.aux[i] - l * s.v[i];
                }
            }
            Family::NoseHoover => {
                let y = s.aux[0];
                for i in 0..n {
                    out.x[i] = s.v[i];
                    out.v[i] = -grad[i] - g * s.v[i] - y * s.v[i];
                }
                out.aux[0] = dot(&s.v, &s.v) - n as f64;
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseLayout {
        let amp = |c: f64| (2.0 * c).max(0.0).sqrt();
        match self.family {
            Family::KineticLangevin | Family::NoseHoover => NoiseLayout {
                x: 0.0,
                v: amp(self.gamma),
                aux: 0.0,
            },
            Family::GeneralizedLangevin => NoiseLayout {
                x: 0.0,
                v: amp(self.gamma),
                aux: amp(self.alpha_c),
            },
        }
    }

    /// `(Lf)(s)` from supplied derivatives.
    ///
    /// The transport term `v.grad_x f - grad V.grad_v f` is summed coordinate by
    /// coordinate, so it cancels exactly whenever `grad_x f = grad V` and
    /// `grad_v f = v`, even where `grad V` is huge.
    pub fn generator(&self, s: &State, d: &Derivs) -> Result<f64> {
        let n = self.dim();
        let mut g = vec![0.0; n];
        self.potential.gradient_into(&s.x, &mut g)?;
        let mut transport = 0.0;
        for i in 0..n {
            transport += s.v[i] * d.grad_x[i] - g[i] * d.grad_v[i];
        }
        let gm = self.gamma;
        let rest = match self.family {
            Family::KineticLangevin => -gm * dot(&s.v, &d.grad_v),
            Family::GeneralizedLangevin => {
                let (l, a) = (self.lambda_c, self.alpha_c);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += (-gm * s.v[i] + l * s.aux[i]) * d.grad_v[i];
                    acc += (-a * s.aux[i] - l * s.v[i]) * d.grad_aux[i];
                }
                acc
            }
            Family::NoseHoover => {
                let y = s.aux[0];
                -(gm + y) * dot(&s.v, &d.grad_v) + (dot(&s.v, &s.v) - n as f64) * d.grad_aux[0]
            }
        };
        let noise = self.noise();
        let mut out = transport + rest + 0.5 * noise.v * noise.v * d.lap_v;
        if self.aux_len() > 0 {
            out += 0.5 * noise.aux * noise.aux * d.lap_aux;
        }
        Ok(out)
    }

    /// Carré du champ on the noise blocks: `gamma|grad_v f|^2 + alpha|grad_z f|^2`.
    pub fn carre_du_champ(&self, d: &Derivs) -> f64 {
        let noise = self.noise();
        0.5 * noise.v * noise.v * dot(&d.grad_v, &d.grad_v)
            + 0.5 * noise.aux * noise.aux * dot(&d.grad_aux, &d.grad_aux)
    }
}

/// `H(s)`; `+inf` when `s.x` lies outside `O_V`.
pub fn hamiltonian(proc: &ProcessSpec, s: &State) -> Result<f64> {
    proc.check_state(s)?;
    let v = proc.potential.value(&s.x);
    if v == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(v + 0.5 * dot(&s.v, &s.v) + 0.5 * dot(&s.aux, &s.aux))
}

/// Phase-space drift, laid out as a [`State`].
pub fn drift(proc: &ProcessSpec, s: &State) -> Result<State> {
    proc.check_state(s)?;
    let n = proc.dim();
    let mut out = State::zeros(n, proc.aux_len());
    let mut g = vec![0.0; n];
    proc.drift_into(s, &mut g, &mut out)?;
    Ok(out)
}

pub fn diffusion_map(proc: &ProcessSpec) -> NoiseLayout {
    proc.noise()
}

pub fn apply_generator(proc: &ProcessSpec, f: &dyn Observable, s: &State) -> Result<f64> {
    proc.check_state(s)?;
    let d = f.derivs(s)?;
    let n = proc.dim();
    if d.grad_x.len() != n || d.grad_v.len() != n || d.grad_aux.len() != proc.aux_len() {
        return Err(Error::Usage("observable derivatives have the wrong shape".into()));
    }
    proc.generator(s, &d)
}

/// Exact derivatives of the Hamiltonian.
pub struct HamiltonianObservable<'a>(pub &'a ProcessSpec);

impl Observable for HamiltonianObservable<'_> {
    fn derivs(&self, s: &State) -> Result<Derivs> {
        let p = self.0;
        let n = p.dim();
        Ok(Derivs {
            value: hamiltonian(p, s)?,
            grad_x: p.potential.gradient(&s.x)?,
            grad_v: s.v.clone(),
            grad_aux: s.aux.clone(),
            lap_v: n as f64,
            lap_aux: s.aux.len() as f64,
        })
    }
}

/// Constant `c` with `LH <= cH`, used by the exit-probability bound.
///
/// Kinetic Langevin: `LH = -gamma|v|^2 + gamma dN <= gamma dN H`.
/// Generalized Langevin: `LH <= (gamma + alpha) dN <= (gamma + alpha) dN H`.
/// Nosé-Hoover: `LH = -y dN - gamma|v|^2 + gamma dN`, and
/// `|y| <= (1 + y^2)/2 <= H`, so `c = (gamma + 1) dN`.
pub fn growth_constant(proc: &ProcessSpec) -> f64 {
    let dn = proc.dim() as f64;
    match proc.family {
        Family::KineticLangevin => proc.gamma * dn,
        Family::GeneralizedLangevin => (proc.gamma + proc.alpha_c) * dn,
        Family::NoseHoover => (proc.gamma + 1.0) * dn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> PotentialSpec {
        PotentialSpec::quadratic(1, 1.0, 1.0)
    }

    #[test]
    fn hamiltonians() {
        let gl = ProcessSpec::generalized(1.0, 1.0, 1.0, quad());
        assert_eq!(hamiltonian(&gl, &State::zeros(1, 1)).unwrap(), 1.0);
        let nh = ProcessSpec::new(Family::NoseHoover, 1.0, quad());
        let s = State::new(vec![0.0], vec![2.0], vec![1.0]);
        assert_eq!(hamiltonian(&nh, &s).unwrap(), 3.5);
    }

    #[test]
    fn gl_drift_by_hand() {
        let p = ProcessSpec::generalized(1.0, 2.0, 3.0, quad());
        let s = State::new(vec![1.0], vec![1.0], vec![1.0]);
        let b = drift(&p, &s).unwrap();
        assert_eq!((b.x[0], b.v[0], b.aux[0]), (1.0, 0.0, -5.0));
    }

    #[test]
    fn nh_drift_at_rest() {
        let p = ProcessSpec::new(Family::NoseHoover, 1.0, quad());
        let s = State::new(vec![0.0], vec![0.0], vec![5.0]);
        let b = drift(&p, &s).unwrap();
        assert_eq!((b.x[0], b.v[0], b.aux[0]), (0.0, 0.0, -1.0));
    }

    #[test]
    fn kl_equilibrium() {
        let p = ProcessSpec::new(Family::KineticLangevin, 1.0, quad());
        let b = drift(&p, &State::zeros(1, 0)).unwrap();
        assert_eq!(b.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn noise_layouts() {
        let gl0 = ProcessSpec::generalized(0.0, 1.0, 1.0, quad());
        let n = diffusion_map(&gl0);
        assert_eq!(n.v, 0.0);
        assert!((n.aux - 2f64.sqrt()).abs() < 1e-15);
        let nh = ProcessSpec::new(Family::NoseHoover, 1.0, quad());
        assert_eq!(diffusion_map(&nh).aux, 0.0);
        let kl = ProcessSpec::new(Family::KineticLangevin, 2.0, quad());
        assert_eq!(diffusion_map(&kl).v, 2.0);
    }

    #[test]
    fn generator_on_hamiltonian() {
        let gl = ProcessSpec::generalized(1.0, 1.0, 1.0, quad());
        let s = State::new(vec![0.3], vec![2.0], vec![1.0]);
        let l = apply_generator(&gl, &HamiltonianObservable(&gl), &s).unwrap();
        assert!((l - (-3.0)).abs() < 1e-12);
        let nh = ProcessSpec::new(Family::NoseHoover, 1.0, quad());
        let s = State::new(vec![0.3], vec![1.0], vec![2.0]);
        let l = apply_generator(&nh, &HamiltonianObservable(&nh), &s).unwrap();
        assert!((l - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn generator_kills_constants() {
        let gl = ProcessSpec::generalized(1.0, 1.0, 1.0, quad());
        let s = State::new(vec![0.3], vec![2.0], vec![1.0]);
        let c = FiniteDifference { f: |_: &State| 4.0, h: 1e-4 };
        assert_eq!(apply_generator(&gl, &c, &s).unwrap(), 0.0);
    }

    #[test]
    fn nose_hoover_rejects_zero_friction() {
        let nh = ProcessSpec::new(Family::NoseHoover, 0.0, quad());
        assert!(nh.check().iter().any(|e| e.contains("gamma > 0")));
    }
}
